//! Cell problems `m_eps(u^nu_{x,eps}, Q^nu_rho(x))`, the boundary-band
//! variant `m^delta`, density sweeps in `(rho, eps)` and the rescaling
//! identity.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{self, band_mask, Datum, EnergyModel, Grid, ScalarField};
use crate::geometry::{frame_for, RotatedCube};
use crate::integrands::Integrand;
use crate::par;
use crate::potentials::{compute_cp, compute_cu, Profile};
use crate::solver::{self, SolverConfig, StopReason};

/// Relative slack of the bracket `[c1 c_p (1 - s), c2 C_u (1 + s)]`.
pub const BRACKET_SLACK: f64 = 0.05;

/// `c_p` and `C_u` of an integrand's well and exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub cp: f64,
    pub cu: f64,
}

pub fn constants(integrand: &Integrand) -> Result<Constants> {
    Ok(Constants {
        cp: compute_cp(integrand.well(), integrand.p(), 256)?,
        cu: compute_cu(integrand.well(), &Profile::default(), integrand.p())?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellProblem {
    pub integrand: Integrand,
    pub x: Vec<f64>,
    pub nu: Vec<f64>,
    pub rho: f64,
    pub eps: f64,
    /// Clamped band width; `None` means two cells.
    pub delta_bc: Option<f64>,
    pub cells: usize,
    pub solver: SolverConfig,
}

impl CellProblem {
    pub fn new(integrand: Integrand, nu: &[f64], rho: f64, eps: f64, cells: usize) -> Self {
        let dim = integrand.dim();
        Self {
            integrand,
            x: vec![0.0; dim],
            nu: nu.to_vec(),
            rho,
            eps,
            delta_bc: None,
            cells,
            solver: SolverConfig::default(),
        }
    }

    pub fn h(&self) -> f64 {
        self.rho / self.cells as f64
    }

    pub fn band(&self) -> f64 {
        self.delta_bc.unwrap_or(2.0 * self.h())
    }

    fn validate(&self) -> Result<()> {
        if self.x.len() != self.integrand.dim() || self.nu.len() != self.integrand.dim() {
            return Err(Error::param(
                "x/nu",
                "dimension does not match the integrand",
            ));
        }
        if !(self.eps > 0.0) || !(self.rho > 2.0 * self.eps) {
            return Err(Error::param(
                "rho",
                format!(
                    "need rho > 2 eps > 0, got rho = {}, eps = {}",
                    self.rho, self.eps
                ),
            ));
        }
        if self.band() < 2.0 * self.h() * (1.0 - 1e-9) {
            return Err(Error::param("delta_bc", "must be at least two cells"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        let frame = frame_for(&self.nu)?;
        Grid::new(
            RotatedCube::new(self.x.clone(), self.rho, frame)?,
            self.cells,
        )
    }

    /// The datum with normal taken from the cube frame.
    pub fn datum(&self, grid: &Grid) -> Datum {
        let normal = grid.cube().frame.normal().to_vec();
        Datum::through(grid, &self.x, &normal, self.eps)
    }

    /// Datum field with the default band clamped.
    pub fn initial_field(&self) -> Result<ScalarField> {
        self.validate()?;
        let grid = self.grid()?;
        fields::init_with(&grid, &self.datum(&grid), self.band())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellResult {
    pub m_hat: f64,
    pub density: f64,
    pub rho: f64,
    pub eps: f64,
    pub cells: usize,
    pub datum_energy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub pg_norm: f64,
    pub restarts_used: usize,
    pub stop: StopReason,
    pub bracket: [f64; 2],
    pub in_bracket: bool,
    #[serde(skip)]
    pub field: Option<ScalarField>,
}

fn bracket(integrand: &Integrand) -> Result<[f64; 2]> {
    let k = constants(integrand)?;
    Ok([
        integrand.c1() * k.cp * (1.0 - BRACKET_SLACK),
        integrand.c2() * k.cu * (1.0 + BRACKET_SLACK),
    ])
}

fn solve_field(p: &CellProblem, f0: ScalarField) -> Result<CellResult> {
    let model = EnergyModel::new(&p.integrand, &f0.grid, p.eps)?;
    let datum_energy = model.energy(&f0.values);
    let out = solver::multi_start_with(&model, &f0, &p.solver)?;
    let area = p.rho.powi(p.integrand.dim() as i32 - 1);
    let density = out.energy / area;
    let b = bracket(&p.integrand)?;
    Ok(CellResult {
        m_hat: out.energy,
        density,
        rho: p.rho,
        eps: p.eps,
        cells: p.cells,
        datum_energy,
        iterations: out.iterations,
        converged: out.converged,
        pg_norm: out.pg_norm,
        restarts_used: out.restarts_used,
        stop: out.stop,
        bracket: b,
        in_bracket: b[0] <= density && density <= b[1],
        field: Some(out.field),
    })
}

/// `m_eps(u^nu_{x,eps}, Q^nu_rho(x))` from the datum initialisation.
pub fn solve_cell(p: &CellProblem) -> Result<CellResult> {
    solve_field(p, p.initial_field()?)
}

/// `m^delta`: the clamp is exactly `Q_rho \ closed Q_{rho - delta}`.
pub fn solve_cell_delta(p: &CellProblem, delta: f64) -> Result<CellResult> {
    if !(delta < p.rho) || !(delta > 2.0 * p.eps) {
        return Err(Error::param(
            "delta",
            format!("need rho > delta > 2 eps, got delta = {delta}"),
        ));
    }
    let q = CellProblem {
        delta_bc: Some(0.5 * delta),
        ..p.clone()
    };
    if !(q.eps > 0.0) || !(q.rho > 2.0 * q.eps) {
        return Err(Error::param("rho", "need rho > 2 eps"));
    }
    let grid = q.grid()?;
    let values = q.datum(&grid).sample(&grid);
    let clamped = band_mask(&grid, 0.5 * delta);
    solve_field(&q, ScalarField::new(grid, values, clamped)?)
}

/// Grid resolution of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resolution {
    /// The same number of cells for every side.
    Cells(usize),
    /// A fixed spacing: `rho * k` cells.
    PerUnit(usize),
}

impl Resolution {
    pub fn cells(&self, rho: f64) -> usize {
        match *self {
            Resolution::Cells(n) => n,
            Resolution::PerUnit(k) => (rho * k as f64).round() as usize,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub resolution: Resolution,
    pub solver: SolverConfig,
    /// Band width in cells.
    pub band_cells: f64,
    /// Also report a linear extrapolation in `eps`.
    pub richardson: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            resolution: Resolution::Cells(96),
            solver: SolverConfig::default(),
            band_cells: 2.0,
            richardson: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityRow {
    pub rho: f64,
    pub eps: f64,
    pub cells: usize,
    pub density: f64,
    pub m_hat: f64,
    pub converged: bool,
    pub iterations: usize,
    pub in_bracket: bool,
}

/// `m(rho') <= m(rho) + c2 C_u (rho'^{n-1} - rho^{n-1}) + 10 tol_pg`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonotonicityCheck {
    pub eps: f64,
    pub rho: f64,
    pub rho_next: f64,
    pub m_hat: f64,
    pub m_hat_next: f64,
    pub allowance: f64,
    /// Energy of the `rho` solution extended by the datum to `Q_rho'`, when
    /// the grids nest.
    pub extension_energy: Option<f64>,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub x: Vec<f64>,
    pub nu: Vec<f64>,
    pub rows: Vec<DensityRow>,
    pub f_prime_est: f64,
    pub f_dprime_est: f64,
    /// Spread of the last three densities along `eps` at the smallest `rho`.
    pub trend_spread: f64,
    pub monotonicity: Vec<MonotonicityCheck>,
    pub extrapolated: Option<f64>,
    pub skipped: Vec<(f64, f64)>,
}

impl DensityEstimate {
    pub fn monotone(&self) -> bool {
        self.monotonicity.iter().all(|m| m.holds)
    }

    /// CSV with columns `rho,eps,N,density,converged,iterations`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rho,eps,N,density,converged,iterations\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.rho, r.eps, r.cells, r.density, r.converged, r.iterations
            );
        }
        s
    }
}

/// Values of `small` at its nodes inside `big`, with the datum of `big`
/// elsewhere. Requires a common frame, center and spacing.
fn extend_by_datum(small: &ScalarField, big: &ScalarField) -> Option<Vec<f64>> {
    let (gs, gb) = (&small.grid, &big.grid);
    if gs.cube().frame != gb.cube().frame
        || gs.cube().center != gb.cube().center
        || (gs.h() - gb.h()).abs() > 1e-12 * gb.h()
        || (gb.cells() - gs.cells()) % 2 != 0
    {
        return None;
    }
    let shift = (gb.cells() - gs.cells()) / 2;
    let mut values = big.values.clone();
    for j in 0..gs.node_count() {
        let m: Vec<usize> = gs.node_multi(j).iter().map(|i| i + shift).collect();
        values[gb.node_index(&m)] = small.values[j];
    }
    Some(values)
}

/// Sweeps `rho_list x eps_list` (pairs with `rho <= 2 eps` are skipped).
pub fn estimate_density(
    integrand: &Integrand,
    x: &[f64],
    nu: &[f64],
    rho_list: &[f64],
    eps_list: &[f64],
    cfg: &SweepConfig,
) -> Result<DensityEstimate> {
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for &rho in rho_list {
        for &eps in eps_list {
            if rho > 2.0 * eps {
                pairs.push((rho, eps));
            } else {
                skipped.push((rho, eps));
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::param("rho/eps", "no pair satisfies rho > 2 eps"));
    }
    let problem = |rho: f64, eps: f64| {
        let cells = cfg.resolution.cells(rho);
        CellProblem {
            integrand: integrand.clone(),
            x: x.to_vec(),
            nu: nu.to_vec(),
            rho,
            eps,
            delta_bc: Some(cfg.band_cells * rho / cells as f64),
            cells,
            solver: cfg.solver.clone(),
        }
    };
    let results = par::map(&pairs, |&(rho, eps)| solve_cell(&problem(rho, eps)));
    let mut solved = Vec::with_capacity(results.len());
    for r in results {
        solved.push(r?);
    }
    // rows sorted by decreasing rho, then decreasing eps
    let mut order: Vec<usize> = (0..solved.len()).collect();
    order.sort_by(|&a, &b| {
        (solved[b].rho, solved[b].eps)
            .partial_cmp(&(solved[a].rho, solved[a].eps))
            .unwrap()
    });
    let rows: Vec<DensityRow> = order
        .iter()
        .map(|&i| {
            let r = &solved[i];
            DensityRow {
                rho: r.rho,
                eps: r.eps,
                cells: r.cells,
                density: r.density,
                m_hat: r.m_hat,
                converged: r.converged,
                iterations: r.iterations,
                in_bracket: r.in_bracket,
            }
        })
        .collect();

    let rho_min = rows.iter().map(|r| r.rho).fold(f64::INFINITY, f64::min);
    let finest_column: Vec<&DensityRow> = rows.iter().filter(|r| r.rho == rho_min).collect();
    let finest = finest_column.last().expect("nonempty");
    let tail: Vec<f64> = finest_column
        .iter()
        .rev()
        .take(3)
        .map(|r| r.density)
        .collect();
    let trend_spread = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - tail.iter().copied().fold(f64::INFINITY, f64::min);
    let extrapolated = if cfg.richardson && finest_column.len() >= 2 {
        let a = finest_column[finest_column.len() - 2];
        let b = finest;
        Some((a.eps * b.density - b.eps * a.density) / (a.eps - b.eps))
    } else {
        None
    };

    let k = constants(integrand)?;
    let n1 = integrand.dim() as i32 - 1;
    let mut monotonicity = Vec::new();
    let mut rhos: Vec<f64> = rows.iter().map(|r| r.rho).collect();
    rhos.sort_by(|a, b| a.partial_cmp(b).unwrap());
    rhos.dedup();
    for w in rhos.windows(2) {
        let (rho, rho_next) = (w[0], w[1]);
        for &eps in eps_list {
            let find = |rr: f64| {
                order
                    .iter()
                    .map(|&i| &solved[i])
                    .find(|s| s.rho == rr && s.eps == eps)
            };
            let (Some(a), Some(b)) = (find(rho), find(rho_next)) else {
                continue;
            };
            let allowance = integrand.c2() * k.cu * (rho_next.powi(n1) - rho.powi(n1))
                + 10.0 * cfg.solver.tol_pg;
            let extension_energy = match (&a.field, &b.field) {
                (Some(fa), Some(_)) => {
                    let base = problem(rho_next, eps).initial_field()?;
                    extend_by_datum(fa, &base).map(|v| {
                        EnergyModel::new(integrand, &base.grid, eps)
                            .map(|m| m.energy(&v))
                            .unwrap_or(f64::NAN)
                    })
                }
                _ => None,
            };
            monotonicity.push(MonotonicityCheck {
                eps,
                rho,
                rho_next,
                m_hat: a.m_hat,
                m_hat_next: b.m_hat,
                allowance,
                extension_energy,
                holds: b.m_hat <= a.m_hat + allowance,
            });
        }
    }

    Ok(DensityEstimate {
        x: x.to_vec(),
        nu: nu.to_vec(),
        f_prime_est: finest.density,
        f_dprime_est: finest.density,
        trend_spread,
        rows,
        monotonicity,
        extrapolated,
        skipped,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RescalingReport {
    pub eps: f64,
    pub samples: usize,
    pub max_relative_deviation: f64,
    pub exact: bool,
}

/// `F_eps(u, Q_rho(x)) = eps^{n-1} F_1(u(eps .), Q_{rho/eps}(x/eps))` for
/// ten random admissible fields, with `f_eps(y, .) = f(y / eps, .)`.
pub fn check_rescaling(p: &CellProblem, seed: u64) -> Result<RescalingReport> {
    let base = p.initial_field()?;
    let small = p.integrand.oscillating(p.eps);
    let n1 = p.integrand.dim() as i32 - 1;
    let lhs_model = EnergyModel::new(&small, &base.grid, p.eps)?;
    let big_grid = fields::rescale_field(&base, 1.0 / p.eps)?.grid;
    let rhs_model = EnergyModel::new(&p.integrand, &big_grid, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = 10;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let mut values = base.values.clone();
        for (v, c) in values.iter_mut().zip(&base.clamped) {
            if !*c {
                *v = rng.gen();
            }
        }
        let lhs = lhs_model.energy(&values);
        let rhs = p.eps.powi(n1) * rhs_model.energy(&values);
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(f64::MIN_POSITIVE));
    }
    Ok(RescalingReport {
        eps: p.eps,
        samples,
        max_relative_deviation: worst,
        exact: worst <= 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrands::CoefficientField;
    use crate::potentials::DoubleWell;

    fn mm() -> Integrand {
        Integrand::homogeneous(2, DoubleWell::quartic(), 2.0).unwrap()
    }

    fn quick() -> SolverConfig {
        SolverConfig {
            tol_pg: 1e-6,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn rejects_thin_cubes() {
        let p = CellProblem::new(mm(), &[0.0, 1.0], 0.2, 0.1, 16);
        assert!(solve_cell(&p).is_err());
        let p = CellProblem {
            delta_bc: Some(0.01),
            ..CellProblem::new(mm(), &[0.0, 1.0], 1.0, 0.1, 16)
        };
        assert!(solve_cell(&p).is_err());
    }

    #[test]
    fn constant_coefficient_scales_linearly() {
        let mut d = Vec::new();
        for a in [0.5, 1.0, 2.0] {
            let i = Integrand::with_coefficient(
                2,
                DoubleWell::quartic(),
                2.0,
                CoefficientField::Constant { value: a },
            )
            .unwrap();
            let p = CellProblem {
                solver: quick(),
                ..CellProblem::new(i, &[0.0, 1.0], 1.0, 0.125, 32)
            };
            d.push(solve_cell(&p).unwrap().density);
        }
        assert!((d[0] * 2.0 - d[1]).abs() < 1e-4 * d[1]);
        assert!((d[2] - 2.0 * d[1]).abs() < 1e-4 * d[1]);
    }

    #[test]
    fn opposite_normals_agree() {
        let nu = [0.6, 0.8];
        let a = solve_cell(&CellProblem::new(mm(), &nu, 1.0, 0.125, 32)).unwrap();
        let b = solve_cell(&CellProblem::new(mm(), &[-0.6, -0.8], 1.0, 0.125, 32)).unwrap();
        assert!(
            (a.density - b.density).abs() <= 1e-10,
            "{} {}",
            a.density,
            b.density
        );
    }

    #[test]
    fn delta_variant_nests() {
        let p = CellProblem::new(mm(), &[0.0, 1.0], 1.0, 0.05, 32);
        let small = solve_cell_delta(&p, 0.3).unwrap();
        let large = solve_cell_delta(&p, 0.6).unwrap();
        assert!(small.m_hat <= large.m_hat + 1e-8);
        let default = solve_cell(&p).unwrap();
        let same = solve_cell_delta(&p, 2.0 * p.band()).unwrap();
        assert_eq!(default.m_hat, same.m_hat);
        // everything clamped but the center node
        let almost = solve_cell_delta(&p, 1.0 - 1.5 / 32.0).unwrap();
        assert!((almost.m_hat - almost.datum_energy).abs() < 1e-3 * almost.m_hat);
        assert!(solve_cell_delta(&p, 0.1).is_err());
    }

    #[test]
    fn rescaling_is_exact() {
        for eps in [1.0, 0.25, 0.125] {
            let p = CellProblem::new(
                Integrand::with_coefficient(
                    2,
                    DoubleWell::quartic(),
                    2.0,
                    CoefficientField::Laminate {
                        axis: 0,
                        values: vec![2.0, 1.0],
                    },
                )
                .unwrap(),
                &[0.6, 0.8],
                4.0,
                eps,
                64,
            );
            let r = check_rescaling(&p, 3).unwrap();
            assert!(r.exact, "{r:?}");
        }
    }

    #[test]
    fn sweep_reports_monotone_surrogate() {
        let cfg = SweepConfig {
            resolution: Resolution::PerUnit(32),
            solver: quick(),
            ..SweepConfig::default()
        };
        let est = estimate_density(
            &mm(),
            &[0.0, 0.0],
            &[0.0, 1.0],
            &[1.0, 0.75, 0.5],
            &[0.125],
            &cfg,
        )
        .unwrap();
        assert_eq!(est.rows.len(), 3);
        assert!(est.monotone(), "{:?}", est.monotonicity);
        assert!(est
            .monotonicity
            .iter()
            .all(|m| m.extension_energy.is_some()));
        assert_eq!(est.f_prime_est, est.f_dprime_est);
        assert!(est
            .to_csv()
            .starts_with("rho,eps,N,density,converged,iterations\n"));
    }
}
