//! Box-constrained minimisation on `[0, 1]^d`.
//!
//! Spectral projected gradient: Barzilai–Borwein step lengths with a
//! nonmonotone (Grippo–Lampariello–Lucidi) Armijo safeguard. Feasibility is
//! kept by projection, which for a box is a componentwise clamp.
//!
//! Gradients are measured in a scaled metric `g / weight` supplied by the
//! caller. For the discrete phase-field energy the natural weight is the
//! nodal volume factor `h^n / eps`, which makes the projected-gradient norm a
//! pointwise residual of the discrete Euler–Lagrange equation and puts the
//! Barzilai–Borwein steps on the `h^2` scale.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{EnergyModel, FieldObjective, ScalarField};
use crate::integrands::Integrand;

const SUFFICIENT_DECREASE: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MIN_STEP_FACTOR: f64 = 1e-10;
const MAX_STEP_FACTOR: f64 = 1e10;
const REL_DECREASE_LAG: usize = 20;
const MAX_BACKTRACKS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BbVariant {
    Bb1,
    Bb2,
    Alternating,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Sup-norm threshold on the scaled projected gradient.
    pub tol_pg: f64,
    /// Relative energy decrease over 20 iterations below which the run stops.
    pub tol_rel: f64,
    pub bb_variant: BbVariant,
    /// Nonmonotone look-back window.
    pub window: usize,
    pub restarts: usize,
    /// Amplitude of the restart perturbations.
    pub perturbation: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 50_000,
            tol_pg: 1e-6,
            tol_rel: 1e-9,
            bb_variant: BbVariant::Alternating,
            window: 10,
            restarts: 1,
            perturbation: 0.05,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        if !(self.tol_pg > 0.0) || !(self.tol_rel > 0.0) {
            return Err(Error::param(
                "tol_pg/tol_rel",
                "tolerances must be positive",
            ));
        }
        if self.window == 0 {
            return Err(Error::param("window", "must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(Error::param("restarts", "must be at least 1"));
        }
        if !(self.perturbation >= 0.0) {
            return Err(Error::param("perturbation", "must be nonnegative"));
        }
        Ok(())
    }
}

/// A smooth function of the free variables.
pub trait Objective {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Returns the value at `x` and writes the gradient into `grad`.
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// Metric information for the scaled gradient.
#[derive(Clone, Copy, Debug)]
pub struct Scaling {
    /// Gradients are divided by this before forming steps and residuals.
    pub gradient_weight: f64,
    /// Step bounds are `[1e-10, 1e10] * step_unit`.
    pub step_unit: f64,
}

impl Default for Scaling {
    fn default() -> Self {
        Self {
            gradient_weight: 1.0,
            step_unit: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ProjectedGradient,
    RelativeDecrease,
    Stationary,
    LineSearchStalled,
    MaxIterations,
    NoFreeVariables,
}

#[derive(Clone, Debug)]
pub struct BoxOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub pg_norm: f64,
    pub stop: StopReason,
}

#[inline]
fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

fn projected_gradient_norm(x: &[f64], g: &[f64], inv_weight: f64) -> f64 {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| (clamp01(xi - gi * inv_weight) - xi).abs())
        .fold(0.0, f64::max)
}

/// Minimises `obj` over `[0, 1]^len` starting from `x0`.
///
/// The returned point is the best iterate seen; its value never exceeds the
/// value at the projection of `x0`.
pub fn minimise_box<O: Objective>(
    obj: &mut O,
    x0: &[f64],
    cfg: &SolverConfig,
    scaling: Scaling,
) -> Result<BoxOutcome> {
    cfg.validate()?;
    let d = obj.len();
    assert_eq!(x0.len(), d, "initial point has the wrong length");
    let inv_w = 1.0 / scaling.gradient_weight;
    let lam_min = MIN_STEP_FACTOR * scaling.step_unit;
    let lam_max = MAX_STEP_FACTOR * scaling.step_unit;

    let mut x: Vec<f64> = x0.iter().copied().map(clamp01).collect();
    let mut g = vec![0.0; d];
    let mut f = obj.eval(&x, &mut g);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            iteration: 0,
            energy: f,
        });
    }
    let initial_value = f;
    if d == 0 {
        return Ok(BoxOutcome {
            x,
            value: f,
            initial_value,
            iterations: 0,
            converged: true,
            pg_norm: 0.0,
            stop: StopReason::NoFreeVariables,
        });
    }

    let mut best_x = x.clone();
    let mut best_f = f;
    let mut window: VecDeque<f64> = VecDeque::with_capacity(cfg.window);
    window.push_back(f);
    let mut lagged: VecDeque<f64> = VecDeque::with_capacity(REL_DECREASE_LAG + 1);
    lagged.push_back(f);

    let mut pg = projected_gradient_norm(&x, &g, inv_w);
    let mut lambda = if pg > 0.0 {
        (1.0 / pg).clamp(lam_min, lam_max)
    } else {
        lam_min
    };
    // the first step is also bounded by the natural scale
    lambda = lambda.min(scaling.step_unit);

    let mut xt = vec![0.0; d];
    let mut gt = vec![0.0; d];
    let mut dir = vec![0.0; d];
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;

    while iterations < cfg.max_iters {
        if pg <= cfg.tol_pg {
            stop = StopReason::ProjectedGradient;
            break;
        }
        if lagged.len() > REL_DECREASE_LAG {
            // measured on the running best, which the nonmonotone steps never raise
            let old = lagged[0];
            if old - best_f <= cfg.tol_rel * best_f.abs().max(f64::MIN_POSITIVE) {
                stop = StopReason::RelativeDecrease;
                break;
            }
        }

        let mut slope = 0.0;
        for i in 0..d {
            dir[i] = clamp01(x[i] - lambda * g[i] * inv_w) - x[i];
            slope += g[i] * dir[i];
        }
        if slope >= 0.0 {
            stop = StopReason::Stationary;
            break;
        }
        let reference = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let mut alpha = 1.0;
        let mut accepted = false;
        let mut ft = f;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..d {
                xt[i] = clamp01(x[i] + alpha * dir[i]);
            }
            ft = obj.eval(&xt, &mut gt);
            if !ft.is_finite() {
                return Err(Error::NonFinite {
                    iteration: iterations,
                    energy: ft,
                });
            }
            if ft <= reference + SUFFICIENT_DECREASE * alpha * slope {
                accepted = true;
                break;
            }
            alpha *= BACKTRACK;
        }
        if !accepted {
            stop = StopReason::LineSearchStalled;
            break;
        }
        if gt.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                iteration: iterations,
                energy: ft,
            });
        }

        let (mut ss, mut sy, mut yy) = (0.0, 0.0, 0.0);
        for i in 0..d {
            let s = xt[i] - x[i];
            let y = (gt[i] - g[i]) * inv_w;
            ss += s * s;
            sy += s * y;
            yy += y * y;
        }
        let use_bb1 = match cfg.bb_variant {
            BbVariant::Bb1 => true,
            BbVariant::Bb2 => false,
            BbVariant::Alternating => iterations % 2 == 0,
        };
        lambda = if sy <= 0.0 {
            lam_max
        } else if use_bb1 {
            ss / sy
        } else {
            sy / yy
        }
        .clamp(lam_min, lam_max);

        std::mem::swap(&mut x, &mut xt);
        std::mem::swap(&mut g, &mut gt);
        f = ft;
        iterations += 1;
        if f < best_f {
            best_f = f;
            best_x.copy_from_slice(&x);
        }
        if window.len() == cfg.window {
            window.pop_front();
        }
        window.push_back(f);
        if lagged.len() > REL_DECREASE_LAG {
            lagged.pop_front();
        }
        lagged.push_back(best_f);
        pg = projected_gradient_norm(&x, &g, inv_w);
    }

    let converged = matches!(
        stop,
        StopReason::ProjectedGradient | StopReason::RelativeDecrease | StopReason::Stationary
    );
    // residual reported at the returned point
    let pg_norm = if best_f < f {
        obj.eval(&best_x, &mut gt);
        projected_gradient_norm(&best_x, &gt, inv_w)
    } else {
        pg
    };
    Ok(BoxOutcome {
        x: best_x,
        value: best_f,
        initial_value,
        iterations,
        converged,
        pg_norm,
        stop,
    })
}

/// Best of `cfg.restarts` runs. Restart 0 starts from `x0`; restart `r >= 1`
/// starts from `x0` plus a uniform perturbation of amplitude
/// `cfg.perturbation` drawn from a generator seeded by `r`, re-projected.
pub fn multi_start_box<O: Objective>(
    obj: &mut O,
    x0: &[f64],
    cfg: &SolverConfig,
    scaling: Scaling,
) -> Result<(BoxOutcome, usize)> {
    cfg.validate()?;
    let mut best = minimise_box(obj, x0, cfg, scaling)?;
    for r in 1..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(r as u64);
        let start: Vec<f64> = x0
            .iter()
            .map(|&v| clamp01(v + cfg.perturbation * (2.0 * rng.gen::<f64>() - 1.0)))
            .collect();
        let out = minimise_box(obj, &start, cfg, scaling)?;
        if out.value < best.value {
            best = out;
        }
    }
    Ok((best, cfg.restarts))
}

/// Result of minimising the energy of a field.
#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub field: ScalarField,
    pub energy: f64,
    pub initial_energy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub pg_norm: f64,
    pub restarts_used: usize,
    pub stop: StopReason,
}

/// Scaled metric for the field energy: gradients per unit volume of `1/eps`.
pub fn field_scaling(model: &EnergyModel) -> Scaling {
    let h = model.grid().h();
    Scaling {
        gradient_weight: model.scale(),
        step_unit: h * h,
    }
}

fn finish(field: &ScalarField, out: BoxOutcome, restarts_used: usize) -> SolveOutcome {
    SolveOutcome {
        field: field.with_free_values(&out.x),
        energy: out.value,
        initial_energy: out.initial_value,
        iterations: out.iterations,
        converged: out.converged,
        pg_norm: out.pg_norm,
        restarts_used,
        stop: out.stop,
    }
}

/// Minimises the energy over the free nodes of `f0`, keeping the clamp.
pub fn minimise_with(
    model: &EnergyModel,
    f0: &ScalarField,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    let mut obj = FieldObjective::new(model, f0);
    let x0 = obj.initial();
    let out = minimise_box(&mut obj, &x0, cfg, field_scaling(model))?;
    Ok(finish(f0, out, 1))
}

/// `minimise(I, F0, eps, cfg)`.
pub fn minimise(
    integrand: &Integrand,
    f0: &ScalarField,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    minimise_with(&EnergyModel::new(integrand, &f0.grid, eps)?, f0, cfg)
}

/// Best of `cfg.restarts` perturbed starts.
pub fn multi_start_with(
    model: &EnergyModel,
    f0: &ScalarField,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    let mut obj = FieldObjective::new(model, f0);
    let x0 = obj.initial();
    let (out, used) = multi_start_box(&mut obj, &x0, cfg, field_scaling(model))?;
    Ok(finish(f0, out, used))
}

/// `multi_start(I, F0, eps, cfg)`.
pub fn multi_start(
    integrand: &Integrand,
    f0: &ScalarField,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    multi_start_with(&EnergyModel::new(integrand, &f0.grid, eps)?, f0, cfg)
}
