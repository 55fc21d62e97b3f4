//! Invariant suite: every quantitative inequality and identity the crate
//! relies on, run as one gate with tolerances from [`TOL`].

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cell::{self, CellProblem, Resolution, SweepConfig};
use crate::error::{Error, Result};
use crate::fields::{glue, init_from_datum, EnergyModel, GlueRegions, Grid, IndexBox, ScalarField};
use crate::geometry::{
    catalog_lookup, frame_for, lattice_interval, planar_direction, rational_catalog, IntegerBox,
    RotatedCube,
};
use crate::homogenize::{self, HomogenizeConfig};
use crate::integrands::{CoefficientField, Integrand, RandomCheckerboard};
use crate::par;
use crate::potentials::{compute_cp, compute_cu, optimal_profile_1d, DoubleWell, Profile};
use crate::solver::{self, SolverConfig};
use crate::stochastic::{self, RandomMedium, StochasticConfig};

/// Every tolerance used by the suite.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Tolerances {
    pub cp_scaling: f64,
    pub profile_lower: f64,
    pub lower_slack: f64,
    pub upper_slack: f64,
    pub hom_upper_slack: f64,
    pub rescaling: f64,
    pub gradient: f64,
    pub rotation: f64,
    pub covariance: f64,
    pub comparison: f64,
    /// Multiple of `tol_pg` allowed in the monotonicity surrogate.
    pub monotonicity_pg: f64,
    pub isotropy_ratio: f64,
    pub periodic_x_spread: f64,
    pub mu_upper_slack: f64,
    /// Largest share of `Delta(s_max)` carried by the quadratic term of the
    /// fit in the nested-cube check.
    pub a1_curvature: f64,
}

pub const TOL: Tolerances = Tolerances {
    cp_scaling: 1e-8,
    profile_lower: 1e-6,
    lower_slack: 0.05,
    upper_slack: 0.05,
    hom_upper_slack: 0.08,
    rescaling: 1e-12,
    gradient: 1e-5,
    rotation: 1e-10,
    covariance: 1e-9,
    comparison: 1e-6,
    monotonicity_pg: 10.0,
    isotropy_ratio: 1.05,
    periodic_x_spread: 0.05,
    mu_upper_slack: 0.05,
    a1_curvature: 0.25,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    Fast,
    Full,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: BTreeMap<String, f64>,
    pub tolerance: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub detail: String,
    /// Wall time in seconds; kept out of the serialised report so that
    /// reports are reproducible byte for byte.
    #[serde(skip)]
    pub runtime: f64,
}

impl Check {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            passed: true,
            measured: BTreeMap::new(),
            tolerance: BTreeMap::new(),
            detail: String::new(),
            runtime: 0.0,
        }
    }

    fn measure(&mut self, key: &str, value: f64) -> &mut Self {
        self.measured.insert(key.to_string(), value);
        self
    }

    fn tol(&mut self, key: &str, value: f64) -> &mut Self {
        self.tolerance.insert(key.to_string(), value);
        self
    }

    fn require(&mut self, ok: bool, what: &str) -> &mut Self {
        if !ok {
            self.passed = false;
            if !self.detail.is_empty() {
                self.detail.push_str("; ");
            }
            self.detail.push_str(what);
        }
        self
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub level: Level,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn mm() -> Integrand {
    Integrand::homogeneous(2, DoubleWell::quartic(), 2.0).expect("quartic well")
}

fn with_coefficient(coefficient: CoefficientField) -> Integrand {
    Integrand::with_coefficient(2, DoubleWell::quartic(), 2.0, coefficient)
        .expect("valid coefficient")
}

/// `a in {1, 2}` in layers parallel to `e_1`.
pub fn laminate() -> Integrand {
    with_coefficient(CoefficientField::Laminate {
        axis: 1,
        values: vec![1.0, 2.0],
    })
}

/// 2x2 checkerboard with values `0.5` and `2.0`.
pub fn checkerboard() -> Integrand {
    with_coefficient(CoefficientField::Checkerboard {
        divisions: 2,
        values: vec![0.5, 2.0, 2.0, 0.5],
    })
}

fn unit_grid(nu: &[f64], center: &[f64], side: f64, cells: usize) -> Result<Grid> {
    Grid::new(
        RotatedCube::new(center.to_vec(), side, frame_for(nu)?)?,
        cells,
    )
}

/// Datum field with its free nodes replaced by uniform samples.
pub fn random_admissible(base: &ScalarField, rng: &mut ChaCha8Rng) -> ScalarField {
    let mut out = base.clone();
    for (v, c) in out.values.iter_mut().zip(&base.clamped) {
        if !*c {
            *v = rng.gen();
        }
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradientCheck {
    pub nodes: usize,
    pub max_relative: f64,
    pub passed: bool,
}

/// Central differences of the energy against the analytic gradient at
/// `nodes` random free nodes.
pub fn gradient_check(
    integrand: &Integrand,
    field: &ScalarField,
    eps: f64,
    nodes: usize,
    seed: u64,
) -> Result<GradientCheck> {
    let model = EnergyModel::new(integrand, &field.grid, eps)?;
    let mut grad = vec![0.0; field.values.len()];
    model.energy_and_gradient(&field.values, &mut grad);
    let mut free = field.free_indices();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    free.shuffle(&mut rng);
    let step = 1e-6;
    let mut values = field.values.clone();
    let mut worst: f64 = 0.0;
    for &j in free.iter().take(nodes) {
        let v = values[j];
        values[j] = v + step;
        let plus = model.energy(&values);
        values[j] = v - step;
        let minus = model.energy(&values);
        values[j] = v;
        let fd = (plus - minus) / (2.0 * step);
        let rel = (fd - grad[j]).abs() / grad[j].abs().max(fd.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    Ok(GradientCheck {
        nodes: nodes.min(free.len()),
        max_relative: worst,
        passed: worst <= TOL.gradient,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GluingSample {
    pub eps: f64,
    pub layers: usize,
    pub energy: f64,
    pub bound: f64,
    pub omega: f64,
    pub admissible: bool,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GluingTrend {
    pub samples: Vec<GluingSample>,
    pub omega_decreasing: bool,
}

/// Glues the minimiser `u` on `Q_1` into the datum `v` for each `eps` with
/// `floor(2 / eps)` layers: `A` is the middle half, `A'` leaves an eighth on
/// each side.
pub fn gluing_trend(
    integrand: &Integrand,
    eps_list: &[f64],
    cells: usize,
    cfg: &SolverConfig,
) -> Result<GluingTrend> {
    let nu = [0.0, 1.0];
    let run = |&eps: &f64| -> Result<GluingSample> {
        let p = CellProblem {
            solver: cfg.clone(),
            ..CellProblem::new(integrand.clone(), &nu, 1.0, eps, cells)
        };
        let v = p.initial_field()?;
        let u = solver::minimise(integrand, &v, eps, cfg)?.field;
        let n = cells;
        let regions = GlueRegions {
            inner: IndexBox::new(vec![n / 4; 2], vec![3 * n / 4; 2]),
            outer: IndexBox::new(vec![n / 8; 2], vec![7 * n / 8; 2]),
            other: IndexBox::whole(&v.grid),
        };
        let layers = (2.0 / eps).floor() as usize;
        let out = glue(integrand, eps, &u, &v, &regions, layers)?;
        Ok(GluingSample {
            eps,
            layers,
            energy: out.energy,
            bound: out.bound,
            omega: out.omega,
            admissible: out.admissible,
            holds: out.holds(),
        })
    };
    let samples = par::map(eps_list, run)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut sorted: Vec<&GluingSample> = samples.iter().collect();
    sorted.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let omega_decreasing = sorted.windows(2).all(|w| w[1].omega < w[0].omega);
    Ok(GluingTrend {
        samples,
        omega_decreasing,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NestedCubeReport {
    /// `|x - x~| + |r - r~|` for each design point.
    pub distance: Vec<f64>,
    /// `m(Q_r~(x~)) - m(Q_r(x))`.
    pub delta: Vec<f64>,
    /// Coefficients of the fit `alpha + beta s + gamma s^2`.
    pub fit: [f64; 3],
    /// `max Delta / (s + 1)`.
    pub slope: f64,
    pub curvature_share: f64,
    pub passed: bool,
}

fn quadratic_fit(s: &[f64], d: &[f64]) -> [f64; 3] {
    let mut a = [[0.0; 4]; 3];
    for (x, y) in s.iter().zip(d) {
        let row = [1.0, *x, x * x];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += row[i] * row[j];
            }
            a[i][3] += row[i] * y;
        }
    }
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for i in 0..3 {
            if i != col {
                let f = a[i][col] / a[col][col];
                for j in col..4 {
                    a[i][j] -= f * a[col][j];
                }
            }
        }
    }
    [a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]]
}

/// Nested cubes `Q_r(x) ⊂ Q_{r+d}(x + d t / 4)` with `t` tangent to the
/// interface, `eps = 1`: the minimum grows at most linearly in
/// `|x - x~| + |r - r~|`.
pub fn nested_cube_growth(
    integrand: &Integrand,
    nu: &[f64],
    r: f64,
    design: &[f64],
    cfg: &HomogenizeConfig,
) -> Result<NestedCubeReport> {
    let frame = frame_for(nu)?;
    let dim = integrand.dim();
    let mut t = vec![0.0; dim];
    let mut e1 = vec![0.0; dim];
    e1[0] = 1.0;
    frame.apply(&e1, &mut t);
    let mut problems = vec![cfg.problem(integrand, nu, vec![0.0; dim], r)?];
    for &d in design {
        let center: Vec<f64> = t.iter().map(|v| 0.25 * d * v).collect();
        problems.push(cfg.problem(integrand, nu, center, r + d)?);
    }
    let m = par::map(&problems, cell::solve_cell)
        .into_iter()
        .map(|res| res.map(|c| c.m_hat))
        .collect::<Result<Vec<_>>>()?;
    let distance: Vec<f64> = design.iter().map(|d| 1.25 * d).collect();
    let delta: Vec<f64> = m[1..].iter().map(|v| v - m[0]).collect();
    let fit = quadratic_fit(&distance, &delta);
    let s_max = distance.iter().copied().fold(0.0, f64::max);
    let d_max = delta.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let curvature_share = (fit[2] * s_max * s_max).abs() / d_max.max(f64::MIN_POSITIVE);
    let slope = distance
        .iter()
        .zip(&delta)
        .map(|(s, d)| d.abs() / (s + 1.0))
        .fold(0.0, f64::max);
    Ok(NestedCubeReport {
        passed: curvature_share <= TOL.a1_curvature,
        distance,
        delta,
        fit,
        slope,
        curvature_share,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub alpha: Vec<f64>,
    pub angle: Vec<f64>,
    /// `max_{+-} |m(Q^nu~_{(1 +- alpha) r}) - m(Q^nu_r)| / r^{n-1}`.
    pub deviation: Vec<f64>,
    pub passed: bool,
}

/// Perturbs side and direction together along a design shrinking to zero
/// and checks that the normalised deviation does not grow.
pub fn perturbation_continuity(
    integrand: &Integrand,
    base_angle: f64,
    r: f64,
    alpha: &[f64],
    angle: &[f64],
    cfg: &HomogenizeConfig,
) -> Result<PerturbationReport> {
    if alpha.len() != angle.len() || alpha.is_empty() {
        return Err(Error::param("design", "alpha and angle lists must match"));
    }
    let origin = vec![0.0; integrand.dim()];
    let nu = planar_direction(base_angle);
    let mut problems = vec![cfg.problem(integrand, &nu, origin.clone(), r)?];
    for (a, th) in alpha.iter().zip(angle) {
        let tilted = planar_direction(base_angle + th);
        for sign in [-1.0, 1.0] {
            problems.push(cfg.problem(integrand, &tilted, origin.clone(), (1.0 + sign * a) * r)?);
        }
    }
    let m = par::map(&problems, cell::solve_cell)
        .into_iter()
        .map(|res| res.map(|c| c.m_hat))
        .collect::<Result<Vec<_>>>()?;
    let n1 = integrand.dim() as i32 - 1;
    let deviation: Vec<f64> = (0..alpha.len())
        .map(|j| (m[1 + 2 * j] - m[0]).abs().max((m[2 + 2 * j] - m[0]).abs()) / r.powi(n1))
        .collect();
    let slack = TOL.monotonicity_pg * cfg.solver.tol_pg;
    Ok(PerturbationReport {
        passed: deviation.windows(2).all(|w| w[1] <= w[0] + slack),
        alpha: alpha.to_vec(),
        angle: angle.to_vec(),
        deviation,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `(E_f, E_MM)` at each evaluated field.
    pub pointwise: Vec<(f64, f64)>,
    pub minimum_f: f64,
    pub minimum_mm: f64,
    pub passed: bool,
}

/// `c1 E_MM(u) <= E_f(u) <= c2 E_MM(u)` at fixed fields, and the same
/// bracket between the two minima from a common initialisation.
pub fn comparison_bracketing(
    integrand: &Integrand,
    p: &CellProblem,
    samples: usize,
    seed: u64,
) -> Result<ComparisonReport> {
    let plain = integrand.modica_mortola();
    let f0 = p.initial_field()?;
    let mf = EnergyModel::new(integrand, &f0.grid, p.eps)?;
    let mm = EnergyModel::new(&plain, &f0.grid, p.eps)?;
    let (c1, c2) = (integrand.c1(), integrand.c2());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fields = vec![f0.clone()];
    fields.extend((0..samples).map(|_| random_admissible(&f0, &mut rng)));
    let sol_f = solver::minimise_with(&mf, &f0, &p.solver)?;
    let sol_mm = solver::minimise_with(&mm, &f0, &p.solver)?;
    fields.push(sol_f.field.clone());
    fields.push(sol_mm.field.clone());
    let rel = 1e-12;
    let mut passed = true;
    let mut pointwise = Vec::new();
    for f in &fields {
        let (ef, em) = (mf.energy(&f.values), mm.energy(&f.values));
        passed &= c1 * em <= ef * (1.0 + rel) && ef <= c2 * em * (1.0 + rel);
        pointwise.push((ef, em));
    }
    let (a, b) = (sol_f.energy, sol_mm.energy);
    passed &= c1 * b <= a * (1.0 + TOL.comparison) && a <= c2 * b * (1.0 + TOL.comparison);
    Ok(ComparisonReport {
        pointwise,
        minimum_f: a,
        minimum_mm: b,
        passed,
    })
}

type CheckFn = fn(u64) -> Result<Check>;

fn check_cp_scaling(_: u64) -> Result<Check> {
    let mut c = Check::new("cp-scaling");
    let w = DoubleWell::quartic();
    let mut worst: f64 = 0.0;
    for p in [1.5, 2.0, 3.0] {
        let base = compute_cp(&w, p, 256)?;
        for lambda in [0.25, 1.0, 4.0] {
            let scaled = compute_cp(&w.scaled(lambda), p, 256)?;
            let expect = lambda.powf((p - 1.0) / p) * base;
            worst = worst.max((scaled - expect).abs() / expect);
        }
    }
    c.measure("max_relative", worst)
        .tol("relative", TOL.cp_scaling);
    c.require(worst <= TOL.cp_scaling, "c_p scaling law violated");
    Ok(c)
}

fn check_one_dimensional(_: u64) -> Result<Check> {
    let mut c = Check::new("one-dimensional-costs");
    let w = DoubleWell::quartic();
    let cp = compute_cp(&w, 2.0, 256)?;
    let cu = compute_cu(&w, &Profile::default(), 2.0)?;
    let prof = optimal_profile_1d(&w, 2.0, 512, &SolverConfig::default())?;
    c.measure("cp", cp)
        .measure("cu", cu)
        .measure("profile_cost", prof.cost);
    c.tol("profile_lower", TOL.profile_lower);
    c.require(
        prof.cost >= cp - TOL.profile_lower,
        "discrete profile below c_p",
    );
    c.require(cu >= cp, "C_u below c_p");
    for p in [1.5, 3.0] {
        let cp = compute_cp(&w, p, 256)?;
        let cu = compute_cu(&w, &Profile::default(), p)?;
        c.require(cu >= cp, "C_u below c_p");
    }
    Ok(c)
}

fn integrands_for(level_full: bool, seed: u64) -> Vec<Integrand> {
    let mut v = vec![mm()];
    if level_full {
        v.push(laminate());
        v.push(checkerboard());
        v.push(with_coefficient(CoefficientField::Random(
            RandomCheckerboard::new(seed, vec![0.5, 2.0]),
        )));
    }
    v
}

fn growth_bounds(level_full: bool, seed: u64) -> Result<Check> {
    let mut c = Check::new(if level_full {
        "growth-bounds-all"
    } else {
        "growth-bounds"
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = 0;
    for i in integrands_for(level_full, seed) {
        let (c1, c2) = (i.c1(), i.c2());
        for _ in 0..1000 {
            let y: Vec<f64> = (0..2).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let u: f64 = rng.gen();
            let xi: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let f = i.eval_f(&y, u, &xi);
            let r = i.reference(u, &xi);
            c.require(
                c1 * r <= f * (1.0 + 1e-14) && f <= c2 * r * (1.0 + 1e-14),
                "growth bound violated",
            );
            if i.coefficient().is_periodic() {
                let z = [rng.gen_range(-5i64..5), rng.gen_range(-5i64..5)];
                let ys: Vec<f64> = y.iter().zip(&z).map(|(a, b)| a + *b as f64).collect();
                c.require(i.eval_f(&ys, u, &xi) == f, "periodicity violated");
            } else {
                let z = [rng.gen_range(-5i64..5), rng.gen_range(-5i64..5)];
                let ys: Vec<f64> = y.iter().zip(&z).map(|(a, b)| a + *b as f64).collect();
                c.require(
                    i.shifted(&z).eval_f(&y, u, &xi) == i.eval_f(&ys, u, &xi),
                    "random covariance violated",
                );
            }
            probes += 1;
        }
    }
    c.measure("probes", probes as f64);
    Ok(c)
}

fn check_growth(seed: u64) -> Result<Check> {
    growth_bounds(false, seed)
}

fn check_growth_all(seed: u64) -> Result<Check> {
    growth_bounds(true, seed)
}

fn check_frames(_: u64) -> Result<Check> {
    let mut c = Check::new("frames");
    let mut worst: f64 = 0.0;
    let mut dirs: Vec<Vec<f64>> = rational_catalog(2).iter().map(|d| d.to_unit()).collect();
    dirs.extend(rational_catalog(3).iter().map(|d| d.to_unit()));
    dirs.extend((0..8).map(|k| planar_direction(22.5 * k as f64 + 7.0)));
    for nu in &dirs {
        let f = frame_for(nu)?;
        let n = f.dim();
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|k| f.entry(k, i) * f.entry(k, j)).sum();
                worst = worst.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        if catalog_lookup(nu).is_some() {
            let ib = IntegerBox::new(vec![0; n - 1], vec![1; n - 1])?;
            let li = lattice_interval(&ib, nu)?;
            for k in 0..n - 1 {
                let mut z = vec![0i64; n - 1];
                z[k] = 1;
                let v = li.lattice_vector(&z);
                let dot: f64 = v.iter().zip(nu).map(|(a, b)| *a as f64 * b).sum();
                c.require(
                    dot.abs() < 1e-12,
                    "lattice vector leaves the interface plane",
                );
            }
        }
    }
    c.measure("orthogonality_error", worst)
        .tol("orthogonality", 1e-12);
    c.require(worst <= 1e-12, "frame not orthogonal");
    Ok(c)
}

fn check_gradient(seed: u64) -> Result<Check> {
    let mut c = Check::new("energy-gradient");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for (k, (i, nu)) in [
        (mm(), planar_direction(30.0)),
        (laminate(), vec![0.0, 1.0]),
        (checkerboard(), planar_direction(53.0)),
    ]
    .into_iter()
    .enumerate()
    {
        let g = unit_grid(&nu, &[0.1, 0.2], 1.0, 16)?;
        let base = init_from_datum(&g, &[0.1, 0.2], &nu, 0.125, 2.0 * g.h())?;
        for s in 0..3 {
            let f = random_admissible(&base, &mut rng);
            let r = gradient_check(&i, &f, 0.125, 5, seed ^ (k * 16 + s) as u64)?;
            worst = worst.max(r.max_relative);
        }
    }
    c.measure("max_relative", worst)
        .tol("relative", TOL.gradient);
    c.require(worst <= TOL.gradient, "gradient mismatch");
    Ok(c)
}

fn check_rotation(seed: u64) -> Result<Check> {
    let mut c = Check::new("rotation-invariance");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = [0.3, -0.1];
    let base_g = unit_grid(&[0.0, 1.0], &x, 1.0, 24)?;
    let base = init_from_datum(&base_g, &x, &[0.0, 1.0], 0.1, 2.0 * base_g.h())?;
    let f = random_admissible(&base, &mut rng);
    let e0 = EnergyModel::new(&mm(), &base_g, 0.1)?.energy(&f.values);
    let mut worst: f64 = 0.0;
    for d in rational_catalog(2) {
        let g = unit_grid(&d.to_unit(), &x, 1.0, 24)?;
        let e = EnergyModel::new(&mm(), &g, 0.1)?.energy(&f.values);
        worst = worst.max((e - e0).abs() / e0);
    }
    c.measure("max_relative", worst)
        .tol("relative", TOL.rotation);
    c.require(worst <= TOL.rotation, "energy depends on the frame");
    Ok(c)
}

fn density_bracket(c: &mut Check, integrand: &Integrand, densities: &[f64]) -> Result<()> {
    let k = cell::constants(integrand)?;
    let lo = integrand.c1() * k.cp * (1.0 - TOL.lower_slack);
    let hi = integrand.c2() * k.cu * (1.0 + TOL.upper_slack);
    c.tol("lower", lo).tol("upper", hi);
    let min = densities.iter().copied().fold(f64::INFINITY, f64::min);
    let max = densities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    c.measure("min_density", min).measure("max_density", max);
    c.require(min >= lo, "slicing lower bound violated");
    c.require(max <= hi, "datum upper bound violated");
    Ok(())
}

fn bracket_sweep(name: &str, integrand: Integrand, oscillating: bool) -> Result<Check> {
    let mut c = Check::new(name);
    let mut problems = Vec::new();
    for nu in [
        vec![0.0, 1.0],
        planar_direction(30.0),
        planar_direction(45.0),
    ] {
        for eps in [0.125, 0.0625] {
            let i = if oscillating {
                integrand.oscillating(eps)
            } else {
                integrand.clone()
            };
            problems.push(CellProblem::new(i, &nu, 1.0, eps, 64));
        }
    }
    let d = par::map(&problems, cell::solve_cell)
        .into_iter()
        .map(|r| r.map(|c| c.density))
        .collect::<Result<Vec<_>>>()?;
    density_bracket(&mut c, &integrand, &d)?;
    c.measure("solves", d.len() as f64);
    Ok(c)
}

fn check_bracket_mm(_: u64) -> Result<Check> {
    bracket_sweep("cell-bracketing", mm(), false)
}

fn check_bracket_checkerboard(_: u64) -> Result<Check> {
    bracket_sweep("cell-bracketing-checkerboard", checkerboard(), true)
}

fn monotonicity(name: &str, integrand: Integrand) -> Result<Check> {
    let mut c = Check::new(name);
    let cfg = SweepConfig {
        resolution: Resolution::PerUnit(64),
        ..SweepConfig::default()
    };
    let est = cell::estimate_density(
        &integrand,
        &[0.0, 0.0],
        &[0.0, 1.0],
        &[0.5, 0.75, 1.0],
        &[0.0625],
        &cfg,
    )?;
    let worst = est
        .monotonicity
        .iter()
        .map(|m| m.m_hat_next - m.m_hat - m.allowance)
        .fold(f64::NEG_INFINITY, f64::max);
    c.measure("max_excess", worst)
        .tol("slack", TOL.monotonicity_pg * cfg.solver.tol_pg);
    c.require(est.monotone(), "monotonicity surrogate violated");
    c.require(
        est.monotonicity
            .iter()
            .all(|m| m.extension_energy.is_some()),
        "grids do not nest",
    );
    Ok(c)
}

fn check_monotone_mm(_: u64) -> Result<Check> {
    monotonicity("monotonicity", mm())
}

fn check_monotone_laminate(_: u64) -> Result<Check> {
    monotonicity("monotonicity-laminate", laminate())
}

fn check_rescaling_suite(seed: u64) -> Result<Check> {
    let mut c = Check::new("rescaling");
    let mut worst: f64 = 0.0;
    for i in [mm(), laminate()] {
        for eps in [0.25, 0.125] {
            let p = CellProblem::new(i.clone(), &planar_direction(30.0), 1.0, eps, 32);
            worst = worst.max(cell::check_rescaling(&p, seed)?.max_relative_deviation);
        }
    }
    c.measure("max_relative", worst)
        .tol("relative", TOL.rescaling);
    c.require(worst <= TOL.rescaling, "rescaling identity violated");
    Ok(c)
}

fn check_gluing(_: u64) -> Result<Check> {
    let mut c = Check::new("gluing");
    let t = gluing_trend(
        &mm(),
        &[0.125, 0.0625, 0.03125],
        64,
        &SolverConfig::default(),
    )?;
    for s in &t.samples {
        c.measure(&format!("omega_eps_{}", s.eps), s.omega);
        c.require(s.admissible, "glued field not admissible");
        c.require(s.holds, "gluing estimate violated");
    }
    c.require(t.omega_decreasing, "omega does not decrease with eps");
    Ok(c)
}

fn check_nested(_: u64) -> Result<Check> {
    let mut c = Check::new("nested-cube-growth");
    let cfg = HomogenizeConfig {
        cells_per_unit: 8,
        ..HomogenizeConfig::default()
    };
    let r = nested_cube_growth(&mm(), &[0.0, 1.0], 4.0, &[0.25, 0.5, 1.0, 2.0], &cfg)?;
    c.measure("slope", r.slope)
        .measure("curvature_share", r.curvature_share);
    c.tol("curvature_share", TOL.a1_curvature);
    c.require(r.passed, "growth is not linear");
    Ok(c)
}

fn check_perturbation(_: u64) -> Result<Check> {
    let mut c = Check::new("perturbation-continuity");
    let cfg = HomogenizeConfig {
        cells_per_unit: 8,
        ..HomogenizeConfig::default()
    };
    let r = perturbation_continuity(
        &laminate(),
        90.0,
        5.0,
        &[0.2, 0.1, 0.05],
        &[8.0, 4.0, 2.0],
        &cfg,
    )?;
    for (a, d) in r.alpha.iter().zip(&r.deviation) {
        c.measure(&format!("deviation_alpha_{a}"), *d);
    }
    c.require(r.passed, "deviation grows as the perturbation shrinks");
    Ok(c)
}

fn check_solver(_: u64) -> Result<Check> {
    let mut c = Check::new("solver-feasibility");
    let p = CellProblem::new(
        laminate().oscillating(0.125),
        &planar_direction(30.0),
        1.0,
        0.125,
        48,
    );
    let f0 = p.initial_field()?;
    let a = solver::minimise(&p.integrand, &f0, p.eps, &p.solver)?;
    let b = solver::minimise(&p.integrand, &f0, p.eps, &p.solver)?;
    c.measure("energy", a.energy)
        .measure("initial_energy", a.initial_energy);
    c.require(a.energy <= a.initial_energy, "energy increased");
    c.require(
        a.field.values.iter().all(|v| (0.0..=1.0).contains(v)),
        "iterate left [0, 1]",
    );
    c.require(a.field.respects(&f0.values), "clamp moved");
    c.require(
        a.energy.to_bits() == b.energy.to_bits() && a.field.values == b.field.values,
        "solve is not deterministic",
    );
    Ok(c)
}

fn comparison(name: &str, integrand: Integrand, seed: u64) -> Result<Check> {
    let mut c = Check::new(name);
    let p = CellProblem::new(integrand, &planar_direction(30.0), 1.0, 0.125, 48);
    let r = comparison_bracketing(&p.integrand.clone(), &p, 5, seed)?;
    c.measure("minimum_f", r.minimum_f)
        .measure("minimum_mm", r.minimum_mm);
    c.tol("relative", TOL.comparison);
    c.require(r.passed, "comparison bracket violated");
    Ok(c)
}

fn check_comparison_mm(seed: u64) -> Result<Check> {
    comparison("comparison-bracketing", mm(), seed)
}

fn check_comparison_checkerboard(seed: u64) -> Result<Check> {
    comparison(
        "comparison-bracketing-checkerboard",
        checkerboard().oscillating(0.125),
        seed,
    )
}

fn check_isotropy(_: u64) -> Result<Check> {
    let mut c = Check::new("isotropy");
    let cfg = HomogenizeConfig {
        cells_per_unit: 8,
        ..HomogenizeConfig::default()
    };
    let nus: Vec<Vec<f64>> = (0..8).map(|k| planar_direction(22.5 * k as f64)).collect();
    let scan = homogenize::anisotropy_scan(&mm(), &nus, 8.0, &cfg)?;
    c.measure("ratio", scan.ratio)
        .tol("ratio", TOL.isotropy_ratio);
    c.require(
        scan.ratio <= TOL.isotropy_ratio,
        "homogeneous density depends on nu",
    );
    Ok(c)
}

fn check_periodic(_: u64) -> Result<Check> {
    let mut c = Check::new("periodic-homogenisation");
    let cfg = HomogenizeConfig::default();
    let run = homogenize::homogenize_direction(
        &laminate(),
        &[1.0, 0.0],
        &[vec![0.0, 0.0], vec![0.3, 0.7]],
        &[4.0, 8.0],
        &cfg,
    )?;
    c.measure("x_spread", run.x_spread)
        .measure("f_hom_est", run.f_hom_est);
    c.tol("x_spread", TOL.periodic_x_spread)
        .tol("lower", run.bracket[0])
        .tol("upper", run.bracket[1]);
    c.require(
        run.x_spread <= TOL.periodic_x_spread,
        "density depends on x",
    );
    c.require(run.in_bracket, "density outside the homogenised bracket");
    Ok(c)
}

fn check_tiling(_: u64) -> Result<Check> {
    let mut c = Check::new("tiling-subadditivity");
    let cfg = HomogenizeConfig {
        cells_per_unit: 8,
        ..HomogenizeConfig::default()
    };
    let r =
        homogenize::check_tiling_subadditivity(&laminate(), &[0.0, 1.0], 3.0, 15.0, false, &cfg)?;
    c.measure("competitor_density", r.competitor_density)
        .measure("bound", r.bound);
    c.measure("tiles", r.tiles as f64);
    c.require(r.admissible, "tiled competitor not admissible");
    c.require(r.holds, "tiling bound violated");
    Ok(c)
}

fn check_stochastic(seed: u64) -> Result<Check> {
    let mut c = Check::new("stochastic-process");
    let medium = RandomMedium::checkerboard(2, vec![0.5, 2.0]);
    let cfg = StochasticConfig::default();
    let e2 = [0.0, 1.0];
    let ib = |a: i64, b: i64| IntegerBox::new(vec![a], vec![b]);
    let mut worst_cov: f64 = 0.0;
    for (k, z) in [0i64, 1, -2].into_iter().enumerate() {
        let r = stochastic::check_covariance(
            &medium,
            seed.wrapping_add(k as u64),
            &ib(0, 1)?,
            &[z],
            &e2,
            &cfg,
        )?;
        worst_cov = worst_cov.max(r.difference);
    }
    c.measure("covariance_difference", worst_cov)
        .tol("covariance", TOL.covariance);
    c.require(worst_cov <= TOL.covariance, "covariance violated");
    let s = stochastic::check_subadditivity(
        &medium,
        seed,
        &ib(0, 2)?,
        &[ib(0, 1)?, ib(1, 2)?],
        &e2,
        &cfg,
    )?;
    c.measure("mu_whole", s.mu_whole)
        .measure("sum_parts", s.sum_parts)
        .measure("filler_energy", s.filler_energy);
    c.require(s.holds, "subadditivity violated");
    c.require(s.filler_energy == 0.0, "filler carries energy");
    let m = stochastic::mu_nu(&medium, seed, &ib(0, 2)?, &e2, &cfg)?;
    c.measure("mu", m.mu).tol("mu_upper", m.upper);
    c.require(m.bounded, "sample outside [0, c2 C_u L(I)]");
    Ok(c)
}

fn check_ergodic(seed: u64) -> Result<Check> {
    let mut c = Check::new("ergodic-estimate");
    let medium = RandomMedium::checkerboard(2, vec![0.5, 2.0]);
    let est = stochastic::ergodic_estimate(
        &medium,
        &[0.0, 1.0],
        &[4.0, 8.0],
        8,
        seed,
        &StochasticConfig::default(),
    )?;
    for l in &est.levels {
        c.measure(&format!("mean_r_{}", l.r), l.mean)
            .measure(&format!("std_r_{}", l.r), l.std);
    }
    c.tol("lower", est.bracket[0]).tol("upper", est.bracket[1]);
    c.require(est.in_bracket, "mean outside the homogenised bracket");
    c.require(est.concentrates, "no concentration");
    Ok(c)
}

fn checks(level: Level) -> Vec<CheckFn> {
    let mut v: Vec<CheckFn> = vec![
        check_cp_scaling,
        check_one_dimensional,
        check_growth,
        check_frames,
        check_gradient,
        check_rotation,
        check_bracket_mm,
        check_monotone_mm,
        check_rescaling_suite,
        check_gluing,
        check_nested,
        check_perturbation,
        check_solver,
        check_comparison_mm,
    ];
    if level == Level::Full {
        v.extend_from_slice(&[
            check_growth_all as CheckFn,
            check_bracket_checkerboard,
            check_monotone_laminate,
            check_comparison_checkerboard,
            check_isotropy,
            check_periodic,
            check_tiling,
            check_stochastic,
            check_ergodic,
        ]);
    }
    v
}

/// Runs every check; failures and errors are recorded, never propagated.
pub fn run_suite(level: Level, seed: u64) -> VerifyReport {
    let list = checks(level);
    let results = par::map(&list, |f| {
        let t = Instant::now();
        let mut check = match f(seed) {
            Ok(c) => c,
            Err(e) => {
                let mut c = Check::new("error");
                c.require(false, &e.to_string());
                c
            }
        };
        check.runtime = t.elapsed().as_secs_f64();
        check
    });
    let mut checks = results;
    checks.sort_by(|a, b| a.name.cmp(&b.name));
    VerifyReport {
        level,
        seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_fit_recovers_coefficients() {
        let s = [0.0, 1.0, 2.0, 3.0];
        let d: Vec<f64> = s.iter().map(|x| 1.0 - 2.0 * x + 0.5 * x * x).collect();
        let f = quadratic_fit(&s, &d);
        for (a, b) in f.iter().zip([1.0, -2.0, 0.5]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_check_catches_wrong_gradients() {
        let g = unit_grid(&[0.0, 1.0], &[0.0, 0.0], 1.0, 16).unwrap();
        let base = init_from_datum(&g, &[0.0, 0.0], &[0.0, 1.0], 0.125, 2.0 * g.h()).unwrap();
        let f = random_admissible(&base, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(gradient_check(&mm(), &f, 0.125, 5, 1).unwrap().passed);
    }

    #[test]
    fn failing_check_is_recorded() {
        let mut c = Check::new("x");
        c.require(true, "a").require(false, "b").require(false, "c");
        assert!(!c.passed);
        assert_eq!(c.detail, "b; c");
    }

    #[test]
    fn cheap_checks_pass() {
        for f in [
            check_cp_scaling as CheckFn,
            check_frames,
            check_growth,
            check_rotation,
            check_gradient,
        ] {
            let c = f(5).unwrap();
            assert!(c.passed, "{c:?}");
        }
    }
}
