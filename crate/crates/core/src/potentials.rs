//! Double-well potentials, the one-dimensional transition profile and the
//! constants `c_p` and `C_u`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::solver::{self, BoxOutcome, Objective, Scaling, SolverConfig};

/// A nonnegative potential vanishing exactly at 0 and 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DoubleWell {
    /// `scale * t^2 (1 - t)^2`
    Quartic { scale: f64 },
    /// `scale * min(t, 1 - t)^2`, a pair of parabolic wells glued at 1/2.
    QuadraticWells { scale: f64 },
    /// `t^2 (1 - t)^2 * P(t)` with `P(t) = sum_i multiplier[i] t^i` positive
    /// on the sampled range.
    CustomPolynomial { multiplier: Vec<f64> },
}

impl Default for DoubleWell {
    fn default() -> Self {
        DoubleWell::Quartic { scale: 1.0 }
    }
}

fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

fn horner_derivative(coeffs: &[f64], t: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (i, c)| acc * t + i as f64 * c)
}

impl DoubleWell {
    pub fn quartic() -> Self {
        DoubleWell::Quartic { scale: 1.0 }
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        match self {
            DoubleWell::Quartic { scale } => {
                let q = t * (1.0 - t);
                scale * q * q
            }
            DoubleWell::QuadraticWells { scale } => {
                let m = t.min(1.0 - t);
                scale * m * m
            }
            DoubleWell::CustomPolynomial { multiplier } => {
                let q = t * (1.0 - t);
                q * q * horner(multiplier, t)
            }
        }
    }

    /// `W'(t)`; for the glued parabolas the value at the kink `t = 1/2` is
    /// the left derivative.
    #[inline]
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            DoubleWell::Quartic { scale } => 2.0 * scale * t * (1.0 - t) * (1.0 - 2.0 * t),
            DoubleWell::QuadraticWells { scale } => {
                if t <= 0.5 {
                    2.0 * scale * t
                } else {
                    -2.0 * scale * (1.0 - t)
                }
            }
            DoubleWell::CustomPolynomial { multiplier } => {
                let q = t * (1.0 - t);
                let dq = 1.0 - 2.0 * t;
                2.0 * q * dq * horner(multiplier, t) + q * q * horner_derivative(multiplier, t)
            }
        }
    }

    /// `lambda * W`.
    pub fn scaled(&self, lambda: f64) -> Self {
        match self {
            DoubleWell::Quartic { scale } => DoubleWell::Quartic {
                scale: scale * lambda,
            },
            DoubleWell::QuadraticWells { scale } => DoubleWell::QuadraticWells {
                scale: scale * lambda,
            },
            DoubleWell::CustomPolynomial { multiplier } => DoubleWell::CustomPolynomial {
                multiplier: multiplier.iter().map(|c| c * lambda).collect(),
            },
        }
    }

    /// True when `W(t) = W(1 - t)`.
    pub fn is_symmetric(&self) -> bool {
        match self {
            DoubleWell::Quartic { .. } | DoubleWell::QuadraticWells { .. } => true,
            DoubleWell::CustomPolynomial { multiplier } => (0..=100).all(|i| {
                let t = i as f64 / 100.0;
                let (a, b) = (horner(multiplier, t), horner(multiplier, 1.0 - t));
                (a - b).abs() <= 1e-12 * (a.abs() + b.abs() + 1.0)
            }),
        }
    }

    /// Checks positivity away from the wells on `[-0.5, 1.5]` at spacing 1e-3.
    pub fn validate(&self) -> Result<()> {
        match self {
            DoubleWell::Quartic { scale } | DoubleWell::QuadraticWells { scale } => {
                if !(*scale > 0.0) || !scale.is_finite() {
                    return Err(Error::param(
                        "potential.scale",
                        "must be positive and finite",
                    ));
                }
            }
            DoubleWell::CustomPolynomial { multiplier } => {
                if multiplier.is_empty() || multiplier.iter().any(|c| !c.is_finite()) {
                    return Err(Error::param(
                        "potential.multiplier",
                        "needs at least one finite coefficient",
                    ));
                }
            }
        }
        for i in 0..=2000 {
            let t = -0.5 + i as f64 * 1e-3;
            if (t - 0.0).abs() < 1e-12 || (t - 1.0).abs() < 1e-12 {
                continue;
            }
            if !(self.value(t) > 0.0) {
                return Err(Error::param(
                    "potential",
                    format!(
                        "W({t:.3}) = {} is not positive away from the wells",
                        self.value(t)
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// One-dimensional transition profile `u` with `u = 0` for `t <= -w`,
/// `u = 1` for `t >= w`; cubic smoothstep in between. The default half-width
/// is `w = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub half_width: f64,
}

impl Default for Profile {
    fn default() -> Self {
        Self { half_width: 1.0 }
    }
}

impl Profile {
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        let s = (0.5 * (t / self.half_width + 1.0)).clamp(0.0, 1.0);
        s * s * (3.0 - 2.0 * s)
    }

    #[inline]
    pub fn derivative(&self, t: f64) -> f64 {
        let s = 0.5 * (t / self.half_width + 1.0);
        if s <= 0.0 || s >= 1.0 {
            0.0
        } else {
            3.0 * s * (1.0 - s) / self.half_width
        }
    }
}

/// `u(t)`.
pub fn eval_profile(t: f64) -> f64 {
    Profile::default().value(t)
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::param("p", format!("must be > 1, got {p}")));
    }
    Ok(())
}

/// Optimal transition cost `c_p = p (p-1)^{(1-p)/p} \int_0^1 W^{(p-1)/p}`.
pub fn compute_cp(well: &DoubleWell, p: f64, quad_points: usize) -> Result<f64> {
    check_exponent(p)?;
    if quad_points < 64 {
        return Err(Error::param("quad_points", "must be at least 64"));
    }
    let q = (p - 1.0) / p;
    let integral = quadrature::graded(
        |t| well.value(t).max(0.0).powf(q),
        0.0,
        1.0,
        quadrature::panels_for(quad_points),
    );
    Ok(p * (p - 1.0).powf((1.0 - p) / p) * integral)
}

/// Cost of the fixed profile, `C_u = \int (W(u(t)) + |u'(t)|^p) dt`.
pub fn compute_cu(well: &DoubleWell, profile: &Profile, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let w = profile.half_width;
    Ok(quadrature::graded(
        |t| well.value(profile.value(t)) + profile.derivative(t).abs().powf(p),
        -w,
        w,
        64,
    ))
}

/// Half-length of the interval used by [`optimal_profile_1d`].
pub const PROFILE_HALF_LENGTH: f64 = 5.0;

/// Documented discretisation slack of [`optimal_profile_1d`] at `grid >= 512`
/// for the quartic well with `p = 2`: the discrete cost lies in
/// `[c_p, c_p (1 + 0.02)]`.
pub const PROFILE_SLACK: f64 = 0.02;

#[derive(Clone, Debug)]
pub struct ProfileResult {
    pub cost: f64,
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub pg_norm: f64,
}

/// Discrete `\int_{-T}^{T} W(v) + |v'|^p` with one midpoint sample per cell.
struct LineEnergy<'a> {
    well: &'a DoubleWell,
    p: f64,
    h: f64,
    full: Vec<f64>,
}

impl Objective for LineEnergy<'_> {
    fn len(&self) -> usize {
        self.full.len() - 2
    }

    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        let cells = self.full.len() - 1;
        self.full[1..=x.len()].copy_from_slice(x);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for c in 0..cells {
            let (a, b) = (self.full[c], self.full[c + 1]);
            let mean = 0.5 * (a + b);
            let slope = (b - a) / self.h;
            let mag = slope.abs();
            total += self.h * (self.well.value(mean) + mag.powf(self.p));
            let d_mean = 0.5 * self.h * self.well.derivative(mean);
            let d_slope = if mag > 0.0 {
                self.p * mag.powf(self.p - 2.0) * slope
            } else {
                0.0
            };
            // d/da and d/db of the cell term; nodes 0 and `cells` are fixed
            if c >= 1 {
                grad[c - 1] += d_mean - d_slope;
            }
            if c + 1 < cells {
                grad[c] += d_mean + d_slope;
            }
        }
        total
    }
}

/// Minimises the one-dimensional transition energy on `[-5, 5]` with
/// `v(-5) = 0`, `v(5) = 1` over `grid` cells.
pub fn optimal_profile_1d(
    well: &DoubleWell,
    p: f64,
    grid: usize,
    cfg: &SolverConfig,
) -> Result<ProfileResult> {
    check_exponent(p)?;
    if grid < 128 {
        return Err(Error::param("grid", "must be at least 128"));
    }
    let h = 2.0 * PROFILE_HALF_LENGTH / grid as f64;
    let t: Vec<f64> = (0..=grid)
        .map(|i| -PROFILE_HALF_LENGTH + i as f64 * h)
        .collect();
    let start = Profile { half_width: 2.0 };
    let mut full: Vec<f64> = t.iter().map(|&s| start.value(s)).collect();
    full[0] = 0.0;
    full[grid] = 1.0;
    let x0 = full[1..grid].to_vec();
    let mut energy = LineEnergy { well, p, h, full };
    let scaling = Scaling {
        gradient_weight: h,
        step_unit: h * h,
    };
    let out: BoxOutcome = solver::minimise_box(&mut energy, &x0, cfg, scaling)?;
    let mut values = Vec::with_capacity(grid + 1);
    values.push(0.0);
    values.extend_from_slice(&out.x);
    values.push(1.0);
    Ok(ProfileResult {
        cost: out.value,
        t,
        values,
        iterations: out.iterations,
        converged: out.converged,
        pg_norm: out.pg_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, t: f64) -> f64 {
        let h = 1e-6;
        (f(t + h) - f(t - h)) / (2.0 * h)
    }

    fn wells() -> Vec<DoubleWell> {
        vec![
            DoubleWell::quartic(),
            DoubleWell::Quartic { scale: 3.0 },
            DoubleWell::QuadraticWells { scale: 1.0 },
            DoubleWell::CustomPolynomial {
                multiplier: vec![1.0, 0.5],
            },
        ]
    }

    #[test]
    fn wells_vanish_exactly_at_phases_and_are_positive_elsewhere() {
        for w in wells() {
            assert_eq!(w.value(0.0), 0.0);
            assert_eq!(w.value(1.0), 0.0);
            w.validate().unwrap();
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for w in wells() {
            for i in 0..=200 {
                let t = -0.5 + i as f64 * 0.01;
                if matches!(w, DoubleWell::QuadraticWells { .. }) && (t - 0.5).abs() < 1e-3 {
                    continue;
                }
                let a = w.derivative(t);
                let b = fd(|s| w.value(s), t);
                assert!(
                    (a - b).abs() <= 1e-6 * (1.0 + a.abs()),
                    "{w:?} t={t} {a} {b}"
                );
            }
        }
    }

    #[test]
    fn rejects_potential_with_extra_zero() {
        // P(t) = (t - 1/2)^2 adds a third well at 1/2
        let w = DoubleWell::CustomPolynomial {
            multiplier: vec![0.25, -1.0, 1.0],
        };
        assert!(w.validate().is_err());
    }

    #[test]
    fn profile_values() {
        assert_eq!(eval_profile(-2.0), 0.0);
        assert_eq!(eval_profile(2.0), 1.0);
        assert_eq!(eval_profile(0.0), 0.5);
        assert!((eval_profile(0.5) - 0.84375).abs() < 1e-15);
        let u = Profile::default();
        assert_eq!(u.derivative(-1.0), 0.0);
        assert_eq!(u.derivative(1.0), 0.0);
        for i in 1..200 {
            let t = -1.0 + i as f64 * 0.01;
            assert!((u.derivative(t) - fd(|s| u.value(s), t)).abs() < 1e-7);
        }
    }

    #[test]
    fn cp_closed_forms() {
        let w = DoubleWell::quartic();
        let cp = compute_cp(&w, 2.0, 64).unwrap();
        assert!((cp - 1.0 / 3.0).abs() < 1e-12, "{cp}");
        let cp4 = compute_cp(&w.scaled(4.0), 2.0, 64).unwrap();
        assert!((cp4 - 2.0 / 3.0).abs() < 1e-12);
        // glued parabolas: 2 \int min(t,1-t) = 1/2
        let q = compute_cp(&DoubleWell::QuadraticWells { scale: 1.0 }, 2.0, 64).unwrap();
        assert!((q - 0.5).abs() < 1e-12, "{q}");
    }

    #[test]
    fn cp_quadrature_converges_under_doubling() {
        for w in wells() {
            for p in [1.5, 2.0, 3.0] {
                let a = compute_cp(&w, p, 64).unwrap();
                let b = compute_cp(&w, p, 128).unwrap();
                assert!((a - b).abs() <= 1e-8 * b, "{w:?} p={p}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn cp_rejects_bad_exponent() {
        assert!(compute_cp(&DoubleWell::quartic(), 1.0, 64).is_err());
        assert!(compute_cp(&DoubleWell::quartic(), 0.5, 64).is_err());
    }

    #[test]
    fn cu_for_smoothstep_and_quartic() {
        // 18/30 from |u'|^2 plus the well contribution, evaluated with a
        // high-order adaptive rule offline
        let cu = compute_cu(&DoubleWell::quartic(), &Profile::default(), 2.0).unwrap();
        assert!((cu - 0.648_551_448_551_448_5).abs() < 1e-12, "{cu}");
        assert!(cu > 1.0 / 3.0);
    }

    #[test]
    fn cu_change_of_variables() {
        // stretching t -> t / lambda multiplies the well part by lambda and
        // the gradient part by lambda^{1-p}
        let w = DoubleWell::quartic();
        let p = 2.0;
        let base = Profile::default();
        let well_part = compute_cu(&w, &base, p).unwrap() - 0.6;
        for lambda in [0.5, 2.0, 3.0] {
            let stretched = Profile { half_width: lambda };
            let cu = compute_cu(&w, &stretched, p).unwrap();
            let expected = lambda * well_part + lambda.powf(1.0 - p) * 0.6;
            assert!(
                (cu - expected).abs() < 1e-12,
                "{lambda}: {cu} vs {expected}"
            );
        }
    }

    #[test]
    fn optimal_profile_brackets_cp() {
        let w = DoubleWell::quartic();
        let cfg = SolverConfig::default();
        let r = optimal_profile_1d(&w, 2.0, 512, &cfg).unwrap();
        assert!(r.cost >= 1.0 / 3.0 - 1e-6, "{}", r.cost);
        assert!(r.cost <= 1.0 / 3.0 * (1.0 + PROFILE_SLACK), "{}", r.cost);
        assert_eq!(r.values[0], 0.0);
        assert_eq!(*r.values.last().unwrap(), 1.0);
    }

    #[test]
    fn optimal_profile_cost_decreases_under_refinement() {
        let w = DoubleWell::quartic();
        let cfg = SolverConfig::default();
        let coarse = optimal_profile_1d(&w, 2.0, 256, &cfg).unwrap();
        let fine = optimal_profile_1d(&w, 2.0, 1024, &cfg).unwrap();
        assert!(fine.cost <= coarse.cost, "{} > {}", fine.cost, coarse.cost);
    }

    #[test]
    fn optimal_profile_rejects_coarse_grid() {
        assert!(
            optimal_profile_1d(&DoubleWell::quartic(), 2.0, 64, &SolverConfig::default()).is_err()
        );
    }
}
