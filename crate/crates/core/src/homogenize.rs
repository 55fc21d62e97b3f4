//! Periodic homogenisation with `eps = 1`: densities of growing cubes
//! `m(u^nu_{rx}, Q^nu_r(rx)) / r^{n-1}`, anisotropy scans and the tiling
//! construction behind the existence of the limit.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cell::{self, CellProblem, CellResult};
use crate::error::{Error, Result};
use crate::fields::{init_with, Datum, EnergyModel, ScalarField};
use crate::geometry::{frame_for, lattice_scale};
use crate::integrands::Integrand;
use crate::par;
use crate::solver::SolverConfig;

/// Lower and upper slack of the homogenised bracket `[a_lo c_p, a_hi c_p]`.
pub const HOM_SLACK: (f64, f64) = (0.05, 0.08);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HomogenizeConfig {
    /// Grid cells per unit length (per period).
    pub cells_per_unit: usize,
    pub solver: SolverConfig,
    /// Clamped band width in cells.
    pub band_cells: f64,
    /// Largest admissible number of cells per axis.
    pub max_cells_per_axis: usize,
}

impl Default for HomogenizeConfig {
    fn default() -> Self {
        Self {
            cells_per_unit: 16,
            solver: SolverConfig::default(),
            band_cells: 2.0,
            max_cells_per_axis: 512,
        }
    }
}

impl HomogenizeConfig {
    pub fn cells_for(&self, side: f64) -> Result<usize> {
        let exact = side * self.cells_per_unit as f64;
        let cells = exact.round() as usize;
        if (exact - cells as f64).abs() > 1e-9 {
            return Err(Error::param(
                "r",
                format!(
                    "side {side} is not a whole number of cells at {} per unit",
                    self.cells_per_unit
                ),
            ));
        }
        if cells > self.max_cells_per_axis {
            return Err(Error::ResourceCap(format!(
                "side {side} needs {cells} cells per axis, above the cap of {}; lower \
                 cells_per_unit or the side, or raise max_cells_per_axis",
                self.max_cells_per_axis
            )));
        }
        Ok(cells)
    }

    /// The `eps = 1` cell problem on `Q^nu_side(center)` with the datum
    /// through `center`.
    pub fn problem(
        &self,
        integrand: &Integrand,
        nu: &[f64],
        center: Vec<f64>,
        side: f64,
    ) -> Result<CellProblem> {
        let cells = self.cells_for(side)?;
        Ok(CellProblem {
            integrand: integrand.clone(),
            x: center,
            nu: nu.to_vec(),
            rho: side,
            eps: 1.0,
            delta_bc: Some(self.band_cells * side / cells as f64),
            cells,
            solver: self.solver.clone(),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomRow {
    pub x: Vec<f64>,
    pub r: f64,
    pub density: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomogenizationRun {
    pub nu: Vec<f64>,
    pub rows: Vec<HomRow>,
    pub f_hom_est: f64,
    /// `(max - min) / min` over `x` at the largest `r`.
    pub x_spread: f64,
    /// Mean densities over `x` of the last three `r`.
    pub trend: Vec<f64>,
    pub bracket: [f64; 2],
    pub in_bracket: bool,
}

impl HomogenizationRun {
    /// CSV with columns `nu_x,nu_y[,nu_z],x,r,density,converged`; points are
    /// written with `;` between coordinates.
    pub fn to_csv(&self) -> String {
        let axes = ["nu_x", "nu_y", "nu_z"];
        let mut s = axes[..self.nu.len()].join(",");
        s.push_str(",x,r,density,converged\n");
        for row in &self.rows {
            for v in &self.nu {
                let _ = write!(s, "{v},");
            }
            let x: Vec<String> = row.x.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(
                s,
                "{},{},{},{}",
                x.join(";"),
                row.r,
                row.density,
                row.converged
            );
        }
        s
    }
}

fn spread(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo > 0.0 {
        (hi - lo) / lo
    } else {
        f64::INFINITY
    }
}

/// `[a_lo c_p (1 - 0.05), a_hi c_p (1 + 0.08)]`.
pub fn hom_bracket(integrand: &Integrand) -> Result<[f64; 2]> {
    let cp = cell::constants(integrand)?.cp;
    let (lo, hi) = integrand.coefficient().range();
    Ok([lo * cp * (1.0 - HOM_SLACK.0), hi * cp * (1.0 + HOM_SLACK.1)])
}

pub fn homogenize_direction(
    integrand: &Integrand,
    nu: &[f64],
    x_list: &[Vec<f64>],
    r_list: &[f64],
    cfg: &HomogenizeConfig,
) -> Result<HomogenizationRun> {
    if x_list.is_empty() || r_list.is_empty() {
        return Err(Error::param("x_list/r_list", "must not be empty"));
    }
    if r_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("r_list", "must be strictly increasing"));
    }
    let r_max = *r_list.last().unwrap();
    if r_max < 8.0 {
        return Err(Error::param(
            "r_list",
            "the largest side must span at least 8 periods",
        ));
    }
    if cfg.cells_per_unit < 16 {
        return Err(Error::param(
            "cells_per_unit",
            "need at least 16 cells per period",
        ));
    }
    let mut jobs = Vec::new();
    for x in x_list {
        for &r in r_list {
            let center: Vec<f64> = x.iter().map(|v| v * r).collect();
            jobs.push((x.clone(), r, cfg.problem(integrand, nu, center, r)?));
        }
    }
    let solved = par::map(&jobs, |(_, _, p)| cell::solve_cell(p));
    let mut rows = Vec::with_capacity(jobs.len());
    for ((x, r, _), res) in jobs.iter().zip(solved) {
        let res = res?;
        rows.push(HomRow {
            x: x.clone(),
            r: *r,
            density: res.density,
            converged: res.converged,
            iterations: res.iterations,
        });
    }
    let at = |r: f64| -> Vec<f64> {
        rows.iter()
            .filter(|w| w.r == r)
            .map(|w| w.density)
            .collect()
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let last = at(r_max);
    let f_hom_est = mean(&last);
    let trend = r_list
        .iter()
        .rev()
        .take(3)
        .rev()
        .map(|&r| mean(&at(r)))
        .collect();
    let bracket = hom_bracket(integrand)?;
    Ok(HomogenizationRun {
        nu: nu.to_vec(),
        x_spread: spread(&last),
        f_hom_est,
        trend,
        in_bracket: last.iter().all(|d| bracket[0] <= *d && *d <= bracket[1]),
        bracket,
        rows,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnisotropyEntry {
    pub nu: Vec<f64>,
    /// Polar angle of `nu` in the `(x, y)` plane, degrees.
    pub angle: f64,
    pub density: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnisotropyScan {
    pub r: f64,
    pub entries: Vec<AnisotropyEntry>,
    /// `max / min` density.
    pub ratio: f64,
}

impl AnisotropyScan {
    /// `angle,density` pairs.
    pub fn polar_csv(&self) -> String {
        let mut s = String::from("angle,density\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{}", e.angle, e.density);
        }
        s
    }
}

pub fn anisotropy_scan(
    integrand: &Integrand,
    nu_list: &[Vec<f64>],
    r: f64,
    cfg: &HomogenizeConfig,
) -> Result<AnisotropyScan> {
    if nu_list.is_empty() {
        return Err(Error::param("nu_list", "must not be empty"));
    }
    let problems = nu_list
        .iter()
        .map(|nu| cfg.problem(integrand, nu, vec![0.0; integrand.dim()], r))
        .collect::<Result<Vec<_>>>()?;
    let solved = par::map(&problems, cell::solve_cell);
    let mut entries = Vec::with_capacity(nu_list.len());
    for (p, res) in problems.iter().zip(solved) {
        let res = res?;
        let norm = p.nu.iter().map(|v| v * v).sum::<f64>().sqrt();
        entries.push(AnisotropyEntry {
            nu: p.nu.iter().map(|v| v / norm).collect(),
            angle: p.nu[1].atan2(p.nu[0]).to_degrees(),
            density: res.density,
            converged: res.converged,
        });
    }
    let d: Vec<f64> = entries.iter().map(|e| e.density).collect();
    let ratio = d.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        / d.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(AnisotropyScan { r, entries, ratio })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TilingReport {
    pub r: f64,
    pub s: f64,
    pub m_nu: i64,
    /// Tile spacing `(floor(r / M) + 1) M`.
    pub step: f64,
    pub tiles: usize,
    pub density_r: f64,
    /// Energy of the tiled competitor on `Q_s`, divided by `s^{n-1}`.
    pub competitor_density: f64,
    pub filler_energy: f64,
    pub allowance: f64,
    pub bound: f64,
    pub admissible: bool,
    pub direct_density: Option<f64>,
    pub holds: bool,
}

/// Builds the competitor on `Q^nu_s(0)` from copies of the `Q^nu_r(0)`
/// solution translated by the lattice vectors `z^nu_r` and the datum
/// elsewhere, and checks
/// `F(u_s)/s^{n-1} <= m(Q_r)/r^{n-1} + c2 C_u (1 - r^{n-1} (1/(r+1) - 1/s)^{n-1}) + tol`.
pub fn check_tiling_subadditivity(
    integrand: &Integrand,
    nu: &[f64],
    r: f64,
    s: f64,
    direct: bool,
    cfg: &HomogenizeConfig,
) -> Result<TilingReport> {
    if !integrand.coefficient().is_periodic() {
        return Err(Error::param(
            "integrand",
            "tiling needs a periodic coefficient",
        ));
    }
    let frame = frame_for(nu)?;
    let rational = frame
        .rational()
        .cloned()
        .ok_or_else(|| Error::OffCatalog(nu.to_vec()))?;
    if !(s >= r) {
        return Err(Error::param("s", "must be at least r"));
    }
    let m_nu = lattice_scale(rational.denom);
    let step = ((r / m_nu as f64).floor() + 1.0) * m_nu as f64;
    let dim = integrand.dim();
    let origin = vec![0.0; dim];
    let pr = cfg.problem(integrand, nu, origin.clone(), r)?;
    let ps = cfg.problem(integrand, nu, origin, s)?;
    if (ps.cells - pr.cells) % 2 != 0 {
        return Err(Error::IncompatibleGrids(
            "cells of Q_s and Q_r differ by an odd number".into(),
        ));
    }
    let k = cfg.cells_per_unit;
    let sol_r = cell::solve_cell(&pr)?;
    let field_r = sol_r.field.as_ref().expect("solution field");

    let base = ps.initial_field()?;
    let datum = base.values.clone();
    let gs = base.grid.clone();
    let gr = &field_r.grid;
    let half_shift = (ps.cells - pr.cells) / 2;
    // tile indices j along each tangent axis with |step j| + r/2 <= s/2
    let jmax = ((0.5 * (s - r)) / step + 1e-9).floor() as i64;
    let step_nodes = (step * k as f64).round() as i64;
    let tangent = dim - 1;
    let mut tiles = Vec::new();
    let mut idx = vec![-jmax; tangent];
    loop {
        tiles.push(idx.clone());
        let mut t = 0;
        while t < tangent {
            idx[t] += 1;
            if idx[t] <= jmax {
                break;
            }
            idx[t] = -jmax;
            t += 1;
        }
        if t == tangent {
            break;
        }
    }
    let mut values = datum.clone();
    let mut covered = vec![false; gs.cell_count()];
    let cells_r = pr.cells;
    for tile in &tiles {
        let offset: Vec<i64> = (0..dim)
            .map(|a| half_shift as i64 + if a < tangent { tile[a] * step_nodes } else { 0 })
            .collect();
        for j in 0..gr.node_count() {
            let m: Vec<usize> = gr
                .node_multi(j)
                .iter()
                .zip(&offset)
                .map(|(i, o)| (*i as i64 + o) as usize)
                .collect();
            values[gs.node_index(&m)] = field_r.values[j];
        }
        // cells of the tile, in the Q_s cell numbering (first axis fastest)
        let mut cm = vec![0usize; dim];
        for _ in 0..cells_r.pow(dim as u32) {
            let flat = cm.iter().zip(&offset).rev().fold(0usize, |acc, (c, o)| {
                acc * ps.cells + (*c as i64 + o) as usize
            });
            covered[flat] = true;
            for c in cm.iter_mut() {
                *c += 1;
                if *c < cells_r {
                    break;
                }
                *c = 0;
            }
        }
    }
    let competitor = ScalarField {
        values,
        ..base.clone()
    };
    let model = EnergyModel::new(integrand, &gs, 1.0)?;
    let per_cell = model.cell_energies(&competitor.values);
    let total = model.energy(&competitor.values);
    let filler_energy: f64 = per_cell
        .iter()
        .zip(&covered)
        .filter(|(_, c)| !**c)
        .map(|(e, _)| e)
        .sum();
    let n1 = dim as i32 - 1;
    let competitor_density = total / s.powi(n1);
    let cu = cell::constants(integrand)?.cu;
    let allowance = integrand.c2() * cu * (1.0 - r.powi(n1) * (1.0 / (r + 1.0) - 1.0 / s).powi(n1));
    let bound = sol_r.density + allowance + 10.0 * cfg.solver.tol_pg;
    let direct_density = if direct {
        Some(cell::solve_cell(&ps)?.density)
    } else {
        None
    };
    let admissible = competitor.respects(&datum);
    Ok(TilingReport {
        r,
        s,
        m_nu,
        step,
        tiles: tiles.len(),
        density_r: sol_r.density,
        competitor_density,
        filler_energy,
        allowance,
        bound,
        admissible,
        holds: admissible
            && competitor_density <= bound
            && direct_density.is_none_or(|d| d <= bound),
        direct_density,
    })
}

/// The `eps = 1` solve on `Q^nu_r(c)` with the datum through `c`.
pub fn solve_unit_cube(
    integrand: &Integrand,
    nu: &[f64],
    center: &[f64],
    r: f64,
    cfg: &HomogenizeConfig,
) -> Result<CellResult> {
    cell::solve_cell(&cfg.problem(integrand, nu, center.to_vec(), r)?)
}

/// Datum field of the `eps = 1` problem, for callers building competitors.
pub fn unit_datum_field(
    integrand: &Integrand,
    nu: &[f64],
    center: &[f64],
    r: f64,
    cfg: &HomogenizeConfig,
) -> Result<ScalarField> {
    let p = cfg.problem(integrand, nu, center.to_vec(), r)?;
    let grid = p.grid()?;
    let normal = grid.cube().frame.normal().to_vec();
    init_with(
        &grid,
        &Datum::through(&grid, center, &normal, 1.0),
        p.band(),
    )
}
