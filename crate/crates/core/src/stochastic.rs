//! Random checkerboard media: the lattice process `mu_nu(omega, I)`, its
//! covariance and subadditivity, and Monte-Carlo estimates of `f_hom(nu)`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cell;
use crate::error::{Error, Result};
use crate::fields::{init_with, Datum, EnergyModel, Grid, ScalarField};
use crate::geometry::{lattice_interval, IntegerBox, LatticeInterval, RotatedCube};
use crate::homogenize::{hom_bracket, HomogenizeConfig};
use crate::integrands::{cell_hash, CoefficientField, Integrand, RandomCheckerboard};
use crate::par;
use crate::potentials::DoubleWell;
use crate::solver::{self, SolverConfig};

/// Slack on the upper bound `c2 C_u L^{n-1}(I)` of a sample.
pub const BOUND_SLACK: f64 = 0.05;
/// Relative spread above which `check_x_independence` flags a run.
pub const X_SPREAD_FLAG: f64 = 0.10;

/// I.i.d. checkerboard template; each seed gives one realisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomMedium {
    pub dim: usize,
    pub well: DoubleWell,
    pub p: f64,
    pub values: Vec<f64>,
}

impl RandomMedium {
    pub fn checkerboard(dim: usize, values: Vec<f64>) -> Self {
        Self {
            dim,
            well: DoubleWell::quartic(),
            p: 2.0,
            values,
        }
    }

    pub fn realisation(&self, seed: u64) -> Result<Integrand> {
        if self.values.is_empty() {
            return Err(Error::param("values", "need at least one value"));
        }
        Integrand::with_coefficient(
            self.dim,
            self.well.clone(),
            self.p,
            CoefficientField::Random(RandomCheckerboard::new(seed, self.values.clone())),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StochasticConfig {
    pub cells_per_unit: usize,
    pub solver: SolverConfig,
    pub band_cells: f64,
    pub max_cells_per_axis: usize,
}

impl Default for StochasticConfig {
    fn default() -> Self {
        Self {
            cells_per_unit: 8,
            solver: SolverConfig::default(),
            band_cells: 2.0,
            max_cells_per_axis: 512,
        }
    }
}

impl StochasticConfig {
    pub fn cube_config(&self) -> HomogenizeConfig {
        HomogenizeConfig {
            cells_per_unit: self.cells_per_unit,
            solver: self.solver.clone(),
            band_cells: self.band_cells,
            max_cells_per_axis: self.max_cells_per_axis,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubadditiveSample {
    pub seed: Option<u64>,
    pub interval: IntegerBox,
    pub nu: Vec<f64>,
    pub m_nu: i64,
    pub mu: f64,
    pub m_hat: f64,
    pub upper: f64,
    pub bounded: bool,
    pub iterations: usize,
    pub converged: bool,
    pub pg_norm: f64,
}

/// Grid on `I_nu`, anchored at the lattice point `M R (a, 0)` so that
/// translates by `z'` shift the anchor and nothing else.
pub fn lattice_grid(li: &LatticeInterval, cfg: &StochasticConfig) -> Result<Grid> {
    let cube = li.as_cube()?;
    let side = cube.side;
    let cells = cfg.cube_config().cells_for(side)?;
    let anchor = li.lattice_vector(&li.interval.lo);
    let width: Vec<i64> = li
        .interval
        .hi
        .iter()
        .zip(&li.interval.lo)
        .map(|(b, a)| b - a)
        .collect();
    let center: Vec<f64> = li
        .lattice_vector(&width)
        .iter()
        .map(|v| 0.5 * *v as f64)
        .collect();
    Grid::new(RotatedCube::new(center, side, li.frame.clone())?, cells)?.with_anchor(anchor)
}

/// `u^nu_0` sampled on the lattice grid with the band clamped.
pub fn lattice_datum_field(grid: &Grid, cfg: &StochasticConfig) -> Result<ScalarField> {
    let normal = grid.cube().frame.normal().to_vec();
    init_with(
        grid,
        &Datum::centered(&normal, 1.0),
        cfg.band_cells * grid.h(),
    )
}

fn sample_from(
    integrand: &Integrand,
    seed: Option<u64>,
    li: &LatticeInterval,
    outcome: &solver::SolveOutcome,
) -> Result<SubadditiveSample> {
    let n1 = li.dim() as i32 - 1;
    let scale = (li.m_nu as f64).powi(n1);
    let cu = cell::constants(integrand)?.cu;
    let upper = integrand.c2() * cu * li.interval.volume() * (1.0 + BOUND_SLACK);
    let mu = outcome.energy / scale;
    Ok(SubadditiveSample {
        seed,
        interval: li.interval.clone(),
        nu: li.frame.normal().to_vec(),
        m_nu: li.m_nu,
        mu,
        m_hat: outcome.energy,
        upper,
        bounded: (0.0..=upper).contains(&mu),
        iterations: outcome.iterations,
        converged: outcome.converged,
        pg_norm: outcome.pg_norm,
    })
}

/// `mu_nu(I)` for an arbitrary integrand on the lattice box.
pub fn mu_nu_with(
    integrand: &Integrand,
    interval: &IntegerBox,
    nu: &[f64],
    cfg: &StochasticConfig,
) -> Result<(SubadditiveSample, ScalarField)> {
    let li = lattice_interval(interval, nu)?;
    let grid = lattice_grid(&li, cfg)?;
    let f0 = lattice_datum_field(&grid, cfg)?;
    let model = EnergyModel::new(integrand, &grid, 1.0)?;
    let out = solver::minimise_with(&model, &f0, &cfg.solver)?;
    Ok((sample_from(integrand, None, &li, &out)?, out.field))
}

pub fn mu_nu(
    medium: &RandomMedium,
    seed: u64,
    interval: &IntegerBox,
    nu: &[f64],
    cfg: &StochasticConfig,
) -> Result<SubadditiveSample> {
    let (mut s, _) = mu_nu_with(&medium.realisation(seed)?, interval, nu, cfg)?;
    s.seed = Some(seed);
    Ok(s)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub seed: u64,
    pub interval: IntegerBox,
    pub shift: Vec<i64>,
    /// `M R (z', 0)`.
    pub lattice_shift: Vec<i64>,
    /// `mu(omega, I + z')`.
    pub left: f64,
    /// `mu(tau_{z'} omega, I)`.
    pub right: f64,
    pub difference: f64,
    pub holds: bool,
}

pub fn check_covariance(
    medium: &RandomMedium,
    seed: u64,
    interval: &IntegerBox,
    shift: &[i64],
    nu: &[f64],
    cfg: &StochasticConfig,
) -> Result<CovarianceReport> {
    let li = lattice_interval(interval, nu)?;
    if shift.len() != interval.lo.len() {
        return Err(Error::param("shift", "must live in Z^{n-1}"));
    }
    let lattice_shift = li.lattice_vector(shift);
    let base = medium.realisation(seed)?;
    let shifted = base.shifted(&lattice_shift);
    let moved = interval.translated(shift);
    let jobs = [(&base, &moved), (&shifted, interval)];
    let out = par::map(&jobs, |(i, b)| mu_nu_with(i, b, nu, cfg));
    let mut it = out.into_iter();
    let left = it.next().unwrap()?.0.mu;
    let right = it.next().unwrap()?.0.mu;
    let difference = (left - right).abs();
    Ok(CovarianceReport {
        seed,
        interval: interval.clone(),
        shift: shift.to_vec(),
        lattice_shift,
        left,
        right,
        difference,
        holds: difference <= 1e-9,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubadditivityReport {
    pub seed: u64,
    pub interval: IntegerBox,
    pub parts: Vec<IntegerBox>,
    /// Best of the datum start and the competitor start on `I`.
    pub mu_whole: f64,
    pub mu_whole_cold: f64,
    pub mu_parts: Vec<f64>,
    pub sum_parts: f64,
    pub tol: f64,
    /// Energy of the concatenated competitor divided by `M^{n-1}`.
    pub competitor: f64,
    pub filler_energy: f64,
    pub competitor_admissible: bool,
    pub competitor_above: bool,
    pub holds: bool,
}

fn validate_partition(interval: &IntegerBox, parts: &[IntegerBox]) -> Result<()> {
    if parts.is_empty() {
        return Err(Error::param("partition", "must not be empty"));
    }
    let inside = |p: &IntegerBox| {
        p.lo.len() == interval.lo.len()
            && p.lo.iter().zip(&interval.lo).all(|(a, b)| a >= b)
            && p.hi.iter().zip(&interval.hi).all(|(a, b)| a <= b)
    };
    if !parts.iter().all(inside) {
        return Err(Error::param("partition", "parts must lie inside I"));
    }
    for (i, p) in parts.iter().enumerate() {
        for q in &parts[i + 1..] {
            let overlap =
                p.lo.iter()
                    .zip(&p.hi)
                    .zip(q.lo.iter().zip(&q.hi))
                    .all(|((a, b), (c, d))| a.max(c) < b.min(d));
            if overlap {
                return Err(Error::param("partition", "parts overlap"));
            }
        }
    }
    let total: f64 = parts.iter().map(IntegerBox::volume).sum();
    if total != interval.volume() {
        return Err(Error::param("partition", "parts do not cover I"));
    }
    Ok(())
}

/// `mu(I) <= sum_i mu(I_i) + tol` together with the concatenated competitor
/// on `I_nu`: part minimisers on `(I_i)_nu`, the datum elsewhere.
pub fn check_subadditivity(
    medium: &RandomMedium,
    seed: u64,
    interval: &IntegerBox,
    parts: &[IntegerBox],
    nu: &[f64],
    cfg: &StochasticConfig,
) -> Result<SubadditivityReport> {
    validate_partition(interval, parts)?;
    let integrand = medium.realisation(seed)?;
    let li = lattice_interval(interval, nu)?;
    let k = cfg.cells_per_unit as i64;
    let m = li.m_nu;
    let grid = lattice_grid(&li, cfg)?;
    let base = lattice_datum_field(&grid, cfg)?;
    let tangent = li.dim() - 1;
    let side = m * (interval.hi[0] - interval.lo[0]);
    for p in parts {
        if !p.is_cubic() || (m * k * (side / m - (p.hi[0] - p.lo[0]))) % 2 != 0 {
            return Err(Error::param(
                "partition",
                "parts must be cubes whose lattice boxes are node-aligned in I_nu",
            ));
        }
    }

    let mut jobs: Vec<&IntegerBox> = parts.iter().collect();
    jobs.push(interval);
    let solved = par::map(&jobs, |b| mu_nu_with(&integrand, b, nu, cfg));
    let mut solved = solved.into_iter().collect::<Result<Vec<_>>>()?;
    let (whole, _) = solved.pop().unwrap();

    let mut values = base.values.clone();
    let mut covered = vec![false; grid.cell_count()];
    for (p, (_, field)) in parts.iter().zip(&solved) {
        let pg = &field.grid;
        let pside = m * (p.hi[0] - p.lo[0]);
        let offset: Vec<usize> = (0..li.dim())
            .map(|a| {
                if a < tangent {
                    ((p.lo[a] - interval.lo[a]) * m * k) as usize
                } else {
                    ((side - pside) * k / 2) as usize
                }
            })
            .collect();
        for j in 0..pg.node_count() {
            let mi: Vec<usize> = pg
                .node_multi(j)
                .iter()
                .zip(&offset)
                .map(|(a, b)| a + b)
                .collect();
            values[grid.node_index(&mi)] = field.values[j];
        }
        let pc = pg.cells();
        let mut cm = vec![0usize; li.dim()];
        for _ in 0..pc.pow(li.dim() as u32) {
            let flat = cm
                .iter()
                .zip(&offset)
                .rev()
                .fold(0usize, |acc, (c, o)| acc * grid.cells() + c + o);
            covered[flat] = true;
            for c in cm.iter_mut() {
                *c += 1;
                if *c < pc {
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
    let model = EnergyModel::new(&integrand, &grid, 1.0)?;
    let scale = (m as f64).powi(tangent as i32);
    let per_cell = model.cell_energies(&competitor.values);
    let filler_energy: f64 = per_cell
        .iter()
        .zip(&covered)
        .filter(|(_, c)| !**c)
        .map(|(e, _)| e)
        .sum();
    let competitor_energy = model.energy(&competitor.values) / scale;
    let warm = solver::minimise_with(&model, &competitor, &cfg.solver)?;
    let mu_whole = whole.mu.min(warm.energy / scale);

    let mu_parts: Vec<f64> = solved.iter().map(|(s, _)| s.mu).collect();
    let sum_parts: f64 = mu_parts.iter().sum();
    let tol = parts.len() as f64 * 10.0 * cfg.solver.tol_pg;
    let competitor_admissible = competitor.respects(&base.values);
    Ok(SubadditivityReport {
        seed,
        interval: interval.clone(),
        parts: parts.to_vec(),
        mu_whole,
        mu_whole_cold: whole.mu,
        sum_parts,
        tol,
        competitor: competitor_energy,
        filler_energy,
        competitor_admissible,
        competitor_above: competitor_energy >= mu_whole - tol,
        holds: mu_whole <= sum_parts + tol,
        mu_parts,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErgodicSample {
    pub seed: u64,
    pub r: f64,
    pub density: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErgodicLevel {
    pub r: f64,
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
    /// Half-width of the normal-approximation 95% interval.
    pub ci: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErgodicEstimate {
    pub nu: Vec<f64>,
    pub master_seed: u64,
    pub r_list: Vec<f64>,
    pub levels: Vec<ErgodicLevel>,
    #[serde(skip)]
    pub samples: Vec<ErgodicSample>,
    pub f_hom_est: f64,
    /// `std` at the largest `r` below `std` at the smallest.
    pub concentrates: bool,
    pub bracket: [f64; 2],
    pub in_bracket: bool,
}

impl ErgodicEstimate {
    /// Columns `seed,r,nu,density,iterations,converged`; `nu` is written with
    /// `;` between components.
    pub fn samples_csv(&self) -> String {
        let nu: Vec<String> = self.nu.iter().map(|v| v.to_string()).collect();
        let nu = nu.join(";");
        let mut s = String::from("seed,r,nu,density,iterations,converged\n");
        for x in &self.samples {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                x.seed, x.r, nu, x.density, x.iterations, x.converged
            );
        }
        s
    }
}

/// Seed of the `i`-th realisation drawn from a master seed.
pub fn sample_seed(master: u64, i: usize) -> u64 {
    cell_hash(master, &[i as i64])
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    // shifted by the first sample, so identical samples give exactly zero
    let d: Vec<f64> = v.iter().map(|x| x - v[0]).collect();
    let dm = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - dm).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn ergodic_estimate(
    medium: &RandomMedium,
    nu: &[f64],
    r_list: &[f64],
    seeds: usize,
    master_seed: u64,
    cfg: &StochasticConfig,
) -> Result<ErgodicEstimate> {
    if seeds < 8 {
        return Err(Error::param("seeds", "need at least 8 realisations"));
    }
    if r_list.is_empty() || r_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param(
            "r_list",
            "must be nonempty and strictly increasing",
        ));
    }
    let cube = cfg.cube_config();
    let origin = vec![0.0; medium.dim];
    let mut jobs = Vec::new();
    for &r in r_list {
        for i in 0..seeds {
            let seed = sample_seed(master_seed, i);
            jobs.push((
                seed,
                r,
                cube.problem(&medium.realisation(seed)?, nu, origin.clone(), r)?,
            ));
        }
    }
    let solved = par::map(&jobs, |(_, _, p)| cell::solve_cell(p));
    let mut samples = Vec::with_capacity(jobs.len());
    for ((seed, r, _), res) in jobs.iter().zip(solved) {
        let res = res?;
        samples.push(ErgodicSample {
            seed: *seed,
            r: *r,
            density: res.density,
            iterations: res.iterations,
            converged: res.converged,
        });
    }
    let levels: Vec<ErgodicLevel> = r_list
        .iter()
        .map(|&r| {
            let d: Vec<f64> = samples
                .iter()
                .filter(|s| s.r == r)
                .map(|s| s.density)
                .collect();
            let (mean, std) = mean_std(&d);
            ErgodicLevel {
                r,
                mean,
                std,
                seeds: d.len(),
                ci: 1.96 * std / (d.len() as f64).sqrt(),
            }
        })
        .collect();
    let first = &levels[0];
    let last = levels.last().unwrap();
    let bracket = hom_bracket(&medium.realisation(master_seed)?)?;
    Ok(ErgodicEstimate {
        nu: nu.to_vec(),
        master_seed,
        r_list: r_list.to_vec(),
        f_hom_est: last.mean,
        concentrates: levels.len() > 1 && last.std < first.std,
        in_bracket: levels
            .iter()
            .all(|l| bracket[0] <= l.mean && l.mean <= bracket[1]),
        bracket,
        levels,
        samples,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct XIndependenceReport {
    pub seed: u64,
    pub r: f64,
    pub x_list: Vec<Vec<f64>>,
    pub densities: Vec<f64>,
    pub spread: f64,
    pub flagged: bool,
}

pub fn check_x_independence(
    medium: &RandomMedium,
    seed: u64,
    nu: &[f64],
    x_list: &[Vec<f64>],
    r: f64,
    cfg: &StochasticConfig,
) -> Result<XIndependenceReport> {
    if x_list.is_empty() {
        return Err(Error::param("x_list", "must not be empty"));
    }
    let integrand = medium.realisation(seed)?;
    let cube = cfg.cube_config();
    let problems = x_list
        .iter()
        .map(|x| cube.problem(&integrand, nu, x.iter().map(|v| v * r).collect(), r))
        .collect::<Result<Vec<_>>>()?;
    let densities = par::map(&problems, cell::solve_cell)
        .into_iter()
        .map(|r| r.map(|c| c.density))
        .collect::<Result<Vec<_>>>()?;
    let lo = densities.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = densities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / lo;
    Ok(XIndependenceReport {
        seed,
        r,
        x_list: x_list.to_vec(),
        densities,
        spread,
        flagged: spread > X_SPREAD_FLAG,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn medium() -> RandomMedium {
        RandomMedium::checkerboard(2, vec![0.5, 2.0])
    }

    fn ib(lo: i64, hi: i64) -> IntegerBox {
        IntegerBox::new(vec![lo], vec![hi]).unwrap()
    }

    const E2: [f64; 2] = [0.0, 1.0];

    #[test]
    fn sample_is_bounded_and_deterministic() {
        let cfg = StochasticConfig::default();
        let a = mu_nu(&medium(), 3, &ib(0, 2), &E2, &cfg).unwrap();
        let b = mu_nu(&medium(), 3, &ib(0, 2), &E2, &cfg).unwrap();
        assert_eq!(a.mu.to_bits(), b.mu.to_bits());
        assert!(a.bounded, "{a:?}");
        assert_eq!(a.m_nu, 3);
    }

    #[test]
    fn degenerate_medium_matches_deterministic_solve() {
        let cfg = StochasticConfig::default();
        let degenerate = RandomMedium::checkerboard(2, vec![1.0]);
        let s = mu_nu(&degenerate, 11, &ib(0, 1), &E2, &cfg).unwrap();
        let plain = Integrand::homogeneous(2, DoubleWell::quartic(), 2.0).unwrap();
        let (d, _) = mu_nu_with(&plain, &ib(0, 1), &E2, &cfg).unwrap();
        assert!((s.mu - d.mu).abs() < 1e-12);
    }

    #[test]
    fn off_catalog_is_rejected() {
        let err = mu_nu(
            &medium(),
            1,
            &ib(0, 1),
            &[0.6, 0.8001],
            &StochasticConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::OffCatalog(_)));
    }

    #[test]
    fn covariance_is_exact() {
        let cfg = StochasticConfig::default();
        let zero = check_covariance(&medium(), 7, &ib(0, 1), &[0], &E2, &cfg).unwrap();
        assert_eq!(zero.difference, 0.0);
        let one = check_covariance(&medium(), 7, &ib(0, 1), &[1], &E2, &cfg).unwrap();
        assert!(one.holds, "{one:?}");
        assert_eq!(one.lattice_shift, vec![3, 0]);
    }

    #[test]
    fn shifts_compose() {
        let f = RandomCheckerboard::new(5, vec![0.5, 2.0]);
        let twice = f.shifted(&[2, -1]).shifted(&[3, 4]);
        let once = f.shifted(&[5, 3]);
        for z in [[0i64, 0], [1, -7], [-3, 2]] {
            assert_eq!(twice.cell_value(&z), once.cell_value(&z));
        }
    }

    #[test]
    fn subadditivity_on_two_parts() {
        let cfg = StochasticConfig::default();
        let rep =
            check_subadditivity(&medium(), 4, &ib(0, 2), &[ib(0, 1), ib(1, 2)], &E2, &cfg).unwrap();
        assert!(rep.holds, "{rep:?}");
        assert_eq!(rep.filler_energy, 0.0);
        assert!(rep.competitor_admissible && rep.competitor_above);
        assert!((rep.competitor - rep.sum_parts).abs() < 1e-9);
    }

    #[test]
    fn single_part_is_equality() {
        let cfg = StochasticConfig::default();
        let rep = check_subadditivity(&medium(), 9, &ib(0, 1), &[ib(0, 1)], &E2, &cfg).unwrap();
        assert_eq!(rep.mu_whole_cold, rep.sum_parts);
        assert_eq!(rep.filler_energy, 0.0);
    }

    #[test]
    fn invalid_partitions_are_rejected() {
        let cfg = StochasticConfig::default();
        assert!(check_subadditivity(&medium(), 1, &ib(0, 2), &[ib(0, 1)], &E2, &cfg).is_err());
        assert!(
            check_subadditivity(&medium(), 1, &ib(0, 2), &[ib(0, 2), ib(1, 2)], &E2, &cfg).is_err()
        );
    }

    #[test]
    fn degenerate_ergodic_has_zero_spread() {
        let cfg = StochasticConfig::default();
        let degenerate = RandomMedium::checkerboard(2, vec![1.0]);
        let est = ergodic_estimate(&degenerate, &E2, &[4.0], 8, 1, &cfg).unwrap();
        assert_eq!(est.levels[0].std, 0.0);
        assert!(est
            .samples_csv()
            .starts_with("seed,r,nu,density,iterations,converged\n"));
        assert!(ergodic_estimate(&degenerate, &E2, &[4.0], 4, 1, &cfg).is_err());
    }

    #[test]
    fn single_center_has_no_spread() {
        let cfg = StochasticConfig::default();
        let rep = check_x_independence(&medium(), 2, &E2, &[vec![0.0, 0.0]], 4.0, &cfg).unwrap();
        assert_eq!(rep.spread, 0.0);
        let degenerate = RandomMedium::checkerboard(2, vec![1.0]);
        let rep = check_x_independence(
            &degenerate,
            2,
            &E2,
            &[vec![0.0, 0.0], vec![0.3, 0.7]],
            4.0,
            &cfg,
        )
        .unwrap();
        assert!(rep.spread < 0.02);
    }
}
