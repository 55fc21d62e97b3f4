//! Integrands `f(y, u, xi) = a(y / l) (W(u) + |xi|^p)` of the admissible
//! class, with `a` a constant, periodic or random coefficient field and `l`
//! an optional oscillation length (`f_k(y, .) = f(y / eps_k, .)`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::DoubleWell;

/// Stateless 64-bit mixer (SplitMix64 finaliser).
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of a seed and an integer lattice cell.
#[inline]
pub fn cell_hash(seed: u64, cell: &[i64]) -> u64 {
    let mut h = mix64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for &c in cell {
        h = mix64(h ^ (c as u64).wrapping_add(0x9e37_79b9_7f4a_7c15));
    }
    h
}

/// Random checkerboard: one i.i.d. value per unit cell `z + [0,1)^n`, drawn
/// uniformly from `values` through a stateless hash of `(master_seed, z)`.
/// The group action `tau_z` is an accumulated integer offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomCheckerboard {
    pub master_seed: u64,
    pub values: Vec<f64>,
    #[serde(default)]
    pub offset: Vec<i64>,
}

impl RandomCheckerboard {
    pub fn new(master_seed: u64, values: Vec<f64>) -> Self {
        Self {
            master_seed,
            values,
            offset: Vec::new(),
        }
    }

    /// Value on the lattice cell `z` (before applying the offset).
    #[inline]
    pub fn cell_value(&self, z: &[i64]) -> f64 {
        let mut buf = [0i64; 3];
        let n = z.len();
        for i in 0..n {
            buf[i] = z[i] + self.offset.get(i).copied().unwrap_or(0);
        }
        let k = cell_hash(self.master_seed, &buf[..n]) % self.values.len() as u64;
        self.values[k as usize]
    }

    #[inline]
    pub fn value_at(&self, y: &[f64]) -> f64 {
        let mut cell = [0i64; 3];
        for (c, v) in cell.iter_mut().zip(y) {
            *c = v.floor() as i64;
        }
        self.cell_value(&cell[..y.len()])
    }

    /// `tau_z`: the shifted field satisfies `shifted(z).value_at(y) ==
    /// self.value_at(y + z)`.
    pub fn shifted(&self, z: &[i64]) -> Self {
        let n = z.len().max(self.offset.len());
        let offset = (0..n)
            .map(|i| self.offset.get(i).copied().unwrap_or(0) + z.get(i).copied().unwrap_or(0))
            .collect();
        Self {
            master_seed: self.master_seed,
            values: self.values.clone(),
            offset,
        }
    }
}

/// `shift_random(F, z)`.
pub fn shift_random(field: &RandomCheckerboard, z: &[i64]) -> RandomCheckerboard {
    field.shifted(z)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoefficientField {
    Constant {
        value: f64,
    },
    /// Layers stacked along `axis`: on each unit period the coordinate
    /// `frac(y[axis])` is split into `values.len()` equal layers.
    Laminate {
        axis: usize,
        values: Vec<f64>,
    },
    /// The unit cell is split into `divisions^n` subcells with values listed
    /// with the first coordinate running fastest.
    Checkerboard {
        divisions: usize,
        values: Vec<f64>,
    },
    Random(RandomCheckerboard),
}

impl Default for CoefficientField {
    fn default() -> Self {
        CoefficientField::Constant { value: 1.0 }
    }
}

impl CoefficientField {
    #[inline]
    pub fn value_at(&self, y: &[f64]) -> f64 {
        match self {
            CoefficientField::Constant { value } => *value,
            CoefficientField::Laminate { axis, values } => {
                let frac = y[*axis] - y[*axis].floor();
                let k = ((frac * values.len() as f64) as usize).min(values.len() - 1);
                values[k]
            }
            CoefficientField::Checkerboard { divisions, values } => {
                let d = *divisions;
                let mut index = 0;
                let mut stride = 1;
                for &v in y {
                    let frac = v - v.floor();
                    let k = ((frac * d as f64) as usize).min(d - 1);
                    index += k * stride;
                    stride *= d;
                }
                values[index]
            }
            CoefficientField::Random(r) => r.value_at(y),
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            CoefficientField::Constant { value } => vec![*value],
            CoefficientField::Laminate { values, .. }
            | CoefficientField::Checkerboard { values, .. } => values.clone(),
            CoefficientField::Random(r) => r.values.clone(),
        }
    }

    /// `[a_lo, a_hi]`.
    pub fn range(&self) -> (f64, f64) {
        let v = self.values();
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    pub fn is_periodic(&self) -> bool {
        !matches!(self, CoefficientField::Random(_))
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let v = self.values();
        if v.is_empty() {
            return Err(Error::param("coefficient.values", "must not be empty"));
        }
        if v.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::param(
                "coefficient.values",
                "must be positive and finite",
            ));
        }
        match self {
            CoefficientField::Laminate { axis, .. } if *axis >= dim => Err(Error::param(
                "coefficient.axis",
                format!("axis {axis} out of range for dimension {dim}"),
            )),
            CoefficientField::Checkerboard { divisions, values } => {
                if *divisions == 0 || values.len() != divisions.pow(dim as u32) {
                    Err(Error::param(
                        "coefficient.values",
                        format!("checkerboard needs divisions^{dim} values"),
                    ))
                } else {
                    Ok(())
                }
            }
            CoefficientField::Random(r) if r.offset.len() > dim => Err(Error::param(
                "coefficient.offset",
                "longer than the dimension",
            )),
            _ => Ok(()),
        }
    }
}

/// Structured description accepted by [`make_integrand`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrandSpec {
    pub dim: usize,
    pub potential: DoubleWell,
    pub p: f64,
    /// Optional declared growth constants; they must bracket the
    /// coefficient range. The stored constants are always `[a_lo, a_hi]`.
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub coefficient: CoefficientField,
    /// Oscillation length `l`: the coefficient is sampled at `y / l`.
    pub length_scale: f64,
}

impl Default for IntegrandSpec {
    fn default() -> Self {
        Self {
            dim: 2,
            potential: DoubleWell::default(),
            p: 2.0,
            c1: None,
            c2: None,
            coefficient: CoefficientField::default(),
            length_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Integrand {
    dim: usize,
    well: DoubleWell,
    p: f64,
    c1: f64,
    c2: f64,
    coefficient: CoefficientField,
    length_scale: f64,
}

/// Validates a spec and builds the integrand.
pub fn make_integrand(spec: &IntegrandSpec) -> Result<Integrand> {
    if !(2..=3).contains(&spec.dim) {
        return Err(Error::param("dim", "only n = 2 and n = 3 are supported"));
    }
    if !(spec.p > 1.0) || !spec.p.is_finite() {
        return Err(Error::param("p", format!("must be > 1, got {}", spec.p)));
    }
    spec.potential.validate()?;
    spec.coefficient.validate(spec.dim)?;
    if !(spec.length_scale > 0.0) || !spec.length_scale.is_finite() {
        return Err(Error::param("length_scale", "must be positive"));
    }
    let (lo, hi) = spec.coefficient.range();
    if let Some(c1) = spec.c1 {
        if !(c1 > 0.0) {
            return Err(Error::param("c1", "must be positive"));
        }
        if c1 > lo {
            return Err(Error::param(
                "c1",
                format!("exceeds the coefficient minimum {lo}"),
            ));
        }
    }
    if let Some(c2) = spec.c2 {
        if let Some(c1) = spec.c1 {
            if c1 > c2 {
                return Err(Error::param("c1", "must not exceed c2"));
            }
        }
        if c2 < hi {
            return Err(Error::param(
                "c2",
                format!("is below the coefficient maximum {hi}"),
            ));
        }
    }
    Ok(Integrand {
        dim: spec.dim,
        well: spec.potential.clone(),
        p: spec.p,
        c1: lo,
        c2: hi,
        coefficient: spec.coefficient.clone(),
        length_scale: spec.length_scale,
    })
}

impl Integrand {
    /// `W(u) + |xi|^p` with the given well, in dimension `dim`.
    pub fn homogeneous(dim: usize, well: DoubleWell, p: f64) -> Result<Self> {
        make_integrand(&IntegrandSpec {
            dim,
            potential: well,
            p,
            ..IntegrandSpec::default()
        })
    }

    pub fn with_coefficient(
        dim: usize,
        well: DoubleWell,
        p: f64,
        coefficient: CoefficientField,
    ) -> Result<Self> {
        make_integrand(&IntegrandSpec {
            dim,
            potential: well,
            p,
            coefficient,
            ..IntegrandSpec::default()
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn c1(&self) -> f64 {
        self.c1
    }
    pub fn c2(&self) -> f64 {
        self.c2
    }
    pub fn well(&self) -> &DoubleWell {
        &self.well
    }
    pub fn coefficient(&self) -> &CoefficientField {
        &self.coefficient
    }
    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    /// The plain Modica–Mortola integrand `W(u) + |xi|^p` with the same well.
    pub fn modica_mortola(&self) -> Integrand {
        Integrand {
            coefficient: CoefficientField::default(),
            c1: 1.0,
            c2: 1.0,
            length_scale: 1.0,
            ..self.clone()
        }
    }

    /// `y -> f(y / l, .)`: the same integrand oscillating on scale `l`.
    pub fn oscillating(&self, l: f64) -> Integrand {
        Integrand {
            length_scale: self.length_scale * l,
            ..self.clone()
        }
    }

    /// Applies `tau_z` to a random coefficient field. Other fields are
    /// translated by periodicity, so they are returned unchanged when `z`
    /// is integer.
    pub fn shifted(&self, z: &[i64]) -> Integrand {
        let coefficient = match &self.coefficient {
            CoefficientField::Random(r) => CoefficientField::Random(r.shifted(z)),
            other => other.clone(),
        };
        Integrand {
            coefficient,
            ..self.clone()
        }
    }

    /// `a(y / l)`.
    #[inline]
    pub fn coefficient_at(&self, y: &[f64]) -> f64 {
        if self.length_scale == 1.0 {
            self.coefficient.value_at(y)
        } else {
            let mut s = [0.0; 3];
            for (si, yi) in s.iter_mut().zip(y) {
                *si = yi / self.length_scale;
            }
            self.coefficient.value_at(&s[..y.len()])
        }
    }

    /// `a(y / l)` at the physical point `anchor + y`. With `l = 1` the
    /// integer anchor is applied exactly, so problems that differ by a lattice
    /// translation sample identical coefficients.
    #[inline]
    pub fn coefficient_at_anchored(&self, anchor: &[i64], y: &[f64]) -> f64 {
        if anchor.iter().all(|&a| a == 0) {
            return self.coefficient_at(y);
        }
        if self.length_scale == 1.0 {
            match &self.coefficient {
                CoefficientField::Random(r) => {
                    let mut cell = [0i64; 3];
                    for i in 0..y.len() {
                        cell[i] = y[i].floor() as i64 + anchor.get(i).copied().unwrap_or(0);
                    }
                    r.cell_value(&cell[..y.len()])
                }
                other => other.value_at(y),
            }
        } else {
            let mut s = [0.0; 3];
            for i in 0..y.len() {
                s[i] = y[i] + anchor.get(i).copied().unwrap_or(0) as f64;
            }
            self.coefficient_at(&s[..y.len()])
        }
    }

    /// `f` for a known coefficient value.
    #[inline]
    pub fn density(&self, a: f64, u: f64, xi: &[f64]) -> f64 {
        let norm2: f64 = xi.iter().map(|v| v * v).sum();
        self.density_norm2(a, u, norm2)
    }

    /// `f` for a known coefficient value and `|xi|^2`.
    #[inline]
    pub fn density_norm2(&self, a: f64, u: f64, norm2: f64) -> f64 {
        a * (self.well.value(u) + self.norm_pow(norm2))
    }

    #[inline]
    fn norm_pow(&self, norm2: f64) -> f64 {
        if self.p == 2.0 {
            norm2
        } else {
            norm2.powf(0.5 * self.p)
        }
    }

    /// `(df/du, |xi|^{p-2})` so that `df/dxi = a * p * |xi|^{p-2} * xi`.
    #[inline]
    pub fn density_partials(&self, a: f64, u: f64, norm2: f64) -> (f64, f64) {
        let du = a * self.well.derivative(u);
        let k = if self.p == 2.0 {
            1.0
        } else if norm2 > 0.0 {
            norm2.powf(0.5 * self.p - 1.0)
        } else {
            0.0
        };
        (du, a * self.p * k)
    }

    /// `f(y, u, xi)`.
    pub fn eval_f(&self, y: &[f64], u: f64, xi: &[f64]) -> f64 {
        self.density(self.coefficient_at(y), u, xi)
    }

    /// `df/du` at `(y, u, xi)`.
    pub fn df_du(&self, y: &[f64], u: f64, _xi: &[f64]) -> f64 {
        self.coefficient_at(y) * self.well.derivative(u)
    }

    /// `df/dxi` at `(y, u, xi)`.
    pub fn df_dxi(&self, y: &[f64], u: f64, xi: &[f64]) -> Vec<f64> {
        let norm2: f64 = xi.iter().map(|v| v * v).sum();
        let (_, k) = self.density_partials(self.coefficient_at(y), u, norm2);
        xi.iter().map(|v| k * v).collect()
    }

    /// `W(u) + |xi|^p`, the comparison functional's integrand.
    pub fn reference(&self, u: f64, xi: &[f64]) -> f64 {
        let norm2: f64 = xi.iter().map(|v| v * v).sum();
        self.well.value(u) + self.norm_pow(norm2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laminate_x() -> Integrand {
        Integrand::with_coefficient(
            2,
            DoubleWell::quartic(),
            2.0,
            CoefficientField::Laminate {
                axis: 0,
                values: vec![2.0, 1.0],
            },
        )
        .unwrap()
    }

    fn random_board() -> Integrand {
        Integrand::with_coefficient(
            2,
            DoubleWell::quartic(),
            2.0,
            CoefficientField::Random(RandomCheckerboard::new(42, vec![0.5, 2.0])),
        )
        .unwrap()
    }

    fn all_integrands() -> Vec<Integrand> {
        vec![
            Integrand::homogeneous(2, DoubleWell::quartic(), 2.0).unwrap(),
            Integrand::homogeneous(3, DoubleWell::QuadraticWells { scale: 2.0 }, 1.5).unwrap(),
            laminate_x(),
            Integrand::with_coefficient(
                2,
                DoubleWell::quartic(),
                3.0,
                CoefficientField::Checkerboard {
                    divisions: 2,
                    values: vec![0.5, 2.0, 2.0, 0.5],
                },
            )
            .unwrap(),
            random_board(),
        ]
    }

    #[test]
    fn homogeneous_integrand_is_modica_mortola() {
        let f = Integrand::homogeneous(2, DoubleWell::quartic(), 2.0).unwrap();
        assert_eq!((f.c1(), f.c2()), (1.0, 1.0));
        assert_eq!(f.eval_f(&[0.3, 0.1], 0.0, &[0.0, 0.0]), 0.0);
        assert!((f.eval_f(&[0.0, 0.0], 0.5, &[0.0, 0.0]) - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn laminate_values_and_constants() {
        let f = laminate_x();
        assert_eq!((f.c1(), f.c2()), (1.0, 2.0));
        let v = f.eval_f(&[0.25, 0.0], 0.5, &[1.0, 0.0]);
        assert!((v - 2.125).abs() < 1e-15, "{v}");
        assert!((f.eval_f(&[0.75, 0.0], 0.5, &[1.0, 0.0]) - 1.0625).abs() < 1e-15);
    }

    #[test]
    fn growth_bounds_at_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for f in all_integrands() {
            let n = f.dim();
            for _ in 0..1000 {
                let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-20.0..20.0)).collect();
                let xi: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let u = rng.gen_range(-0.2..1.2);
                let v = f.eval_f(&y, u, &xi);
                let r = f.reference(u, &xi);
                assert!(f.c1() * r <= v * (1.0 + 1e-15) && v <= f.c2() * r * (1.0 + 1e-15));
            }
        }
    }

    #[test]
    fn vanishes_only_at_phases_with_zero_gradient() {
        let f = random_board();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let y = [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)];
            assert_eq!(f.eval_f(&y, 0.0, &[0.0, 0.0]), 0.0);
            assert_eq!(f.eval_f(&y, 1.0, &[0.0, 0.0]), 0.0);
            assert!(f.eval_f(&y, 0.3, &[0.0, 0.0]) > 0.0);
            assert!(f.eval_f(&y, 0.0, &[1e-3, 0.0]) > 0.0);
        }
    }

    #[test]
    fn partial_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-6;
        for f in all_integrands() {
            let n = f.dim();
            for _ in 0..50 {
                let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
                let xi: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let u = rng.gen_range(0.05..0.95);
                let du = f.df_du(&y, u, &xi);
                let fd = (f.eval_f(&y, u + h, &xi) - f.eval_f(&y, u - h, &xi)) / (2.0 * h);
                assert!((du - fd).abs() <= 1e-5 * (1.0 + du.abs()), "{du} {fd}");
                let dxi = f.df_dxi(&y, u, &xi);
                for i in 0..n {
                    let mut a = xi.clone();
                    let mut b = xi.clone();
                    a[i] += h;
                    b[i] -= h;
                    let fd = (f.eval_f(&y, u, &a) - f.eval_f(&y, u, &b)) / (2.0 * h);
                    assert!(
                        (dxi[i] - fd).abs() <= 1e-5 * (1.0 + fd.abs()),
                        "{} {fd}",
                        dxi[i]
                    );
                }
            }
        }
    }

    #[test]
    fn periodic_fields_are_lattice_periodic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for f in all_integrands()
            .into_iter()
            .filter(|f| f.coefficient().is_periodic())
        {
            let n = f.dim();
            for _ in 0..1000 {
                let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
                let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-5i64..=5) as f64).collect();
                let yz: Vec<f64> = y.iter().zip(&z).map(|(a, b)| a + b).collect();
                // avoid probes that land within rounding of a layer boundary
                let a = f.coefficient_at(&y);
                let b = f.coefficient_at(&yz);
                let near_edge = y.iter().any(|v| {
                    let fr = (v * 2.0) - (v * 2.0).floor();
                    !(1e-9..=1.0 - 1e-9).contains(&fr)
                });
                if !near_edge {
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn random_shift_is_a_group_action() {
        let field = RandomCheckerboard::new(42, vec![0.5, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let cell = [rng.gen_range(-100i64..100), rng.gen_range(-100i64..100)];
            let z = [rng.gen_range(-30i64..30), rng.gen_range(-30i64..30)];
            let w = [rng.gen_range(-30i64..30), rng.gen_range(-30i64..30)];
            assert_eq!(
                field.shifted(&[0, 0]).cell_value(&cell),
                field.cell_value(&cell)
            );
            let back = shift_random(&shift_random(&field, &z), &[-z[0], -z[1]]);
            assert_eq!(back.cell_value(&cell), field.cell_value(&cell));
            let composed = field.shifted(&z).shifted(&w);
            let single = field.shifted(&[z[0] + w[0], z[1] + w[1]]);
            assert_eq!(composed.cell_value(&cell), single.cell_value(&cell));
            // a_{tau_z omega}(y) = a_omega(y + z)
            let y = [cell[0] as f64 + 0.37, cell[1] as f64 + 0.61];
            let yz = [y[0] + z[0] as f64, y[1] + z[1] as f64];
            assert_eq!(field.shifted(&z).value_at(&y), field.value_at(&yz));
        }
    }

    #[test]
    fn random_field_is_deterministic_and_uses_all_values() {
        let a = RandomCheckerboard::new(7, vec![0.5, 2.0]);
        let b = RandomCheckerboard::new(7, vec![0.5, 2.0]);
        let mut count = 0;
        for i in -20..20 {
            for j in -20..20 {
                assert_eq!(a.cell_value(&[i, j]), b.cell_value(&[i, j]));
                if a.cell_value(&[i, j]) == 2.0 {
                    count += 1;
                }
            }
        }
        // roughly balanced
        assert!((600..1000).contains(&count), "{count}");
    }

    #[test]
    fn rejects_invalid_specs() {
        let bad_p = IntegrandSpec {
            p: 1.0,
            ..IntegrandSpec::default()
        };
        assert!(make_integrand(&bad_p).is_err());
        let bad_c = IntegrandSpec {
            c1: Some(-1.0),
            ..IntegrandSpec::default()
        };
        assert!(make_integrand(&bad_c).is_err());
        let swapped = IntegrandSpec {
            c1: Some(1.0),
            c2: Some(0.5),
            coefficient: CoefficientField::Constant { value: 0.7 },
            ..IntegrandSpec::default()
        };
        assert!(make_integrand(&swapped).is_err());
        let nonpositive = IntegrandSpec {
            coefficient: CoefficientField::Laminate {
                axis: 0,
                values: vec![1.0, 0.0],
            },
            ..IntegrandSpec::default()
        };
        assert!(make_integrand(&nonpositive).is_err());
    }

    #[test]
    fn oscillating_integrand_samples_scaled_point() {
        let f = laminate_x();
        let g = f.oscillating(0.25);
        assert_eq!(g.coefficient_at(&[0.1, 0.0]), f.coefficient_at(&[0.4, 0.0]));
        assert_eq!(g.coefficient_at(&[0.2, 0.0]), f.coefficient_at(&[0.8, 0.0]));
    }
}
