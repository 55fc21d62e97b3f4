//! Rotation frames `R_nu`, rotated cubes `Q^nu_rho(x)`, jump data and the
//! lattice intervals `I_nu = M_nu R_nu (I x [-c, c))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::Profile;

/// A unit direction with exact rational coordinates `numer / denom`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationalDirection {
    pub numer: Vec<i64>,
    pub denom: i64,
}

impl RationalDirection {
    pub fn to_unit(&self) -> Vec<f64> {
        self.numer
            .iter()
            .map(|&a| a as f64 / self.denom as f64)
            .collect()
    }
}

// Primitive Pythagorean directions in the plane; sign variants and the
// coordinate swap are generated below.
const PLANAR_BASE: [(i64, i64, i64); 6] = [
    (0, 1, 1),
    (3, 4, 5),
    (4, 3, 5),
    (5, 12, 13),
    (12, 5, 13),
    (8, 15, 17),
];

/// The rational direction catalog for dimension `dim`.
pub fn rational_catalog(dim: usize) -> Vec<RationalDirection> {
    let mut out = Vec::new();
    match dim {
        2 => {
            for &(a, b, d) in &PLANAR_BASE {
                for (x, y) in [(a, b), (b, a)] {
                    for sx in [1, -1] {
                        for sy in [1, -1] {
                            let cand = RationalDirection {
                                numer: vec![sx * x, sy * y],
                                denom: d,
                            };
                            if !out.contains(&cand) {
                                out.push(cand);
                            }
                        }
                    }
                }
            }
        }
        3 => {
            for axis in 0..3 {
                for s in [1, -1] {
                    let mut numer = vec![0; 3];
                    numer[axis] = s;
                    out.push(RationalDirection { numer, denom: 1 });
                }
            }
        }
        _ => {}
    }
    out
}

/// Looks `nu` up in the catalog (tolerance 1e-9 after normalisation).
pub fn catalog_lookup(nu: &[f64]) -> Option<RationalDirection> {
    let norm = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    rational_catalog(nu.len()).into_iter().find(|d| {
        d.to_unit()
            .iter()
            .zip(nu)
            .all(|(a, b)| (a - b / norm).abs() < 1e-9)
    })
}

/// Orthogonal matrix `R` with `R e_n = nu`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationFrame {
    dim: usize,
    normal: Vec<f64>,
    matrix: Vec<f64>,
    rational: Option<RationalDirection>,
}

fn planar_matrix(nu: &[f64]) -> Vec<f64> {
    // columns (nu_2, -nu_1) and (nu_1, nu_2); R_{-nu} = -R_nu
    vec![nu[1], nu[0], -nu[0], nu[1]]
}

fn householder_matrix(nu: &[f64]) -> Vec<f64> {
    let n = nu.len();
    // sign convention by the last nonzero coordinate, so that R_{-nu} = -R_nu
    let last = nu.iter().rposition(|v| *v != 0.0).unwrap_or(n - 1);
    let sign = if nu[last] < 0.0 { -1.0 } else { 1.0 };
    let m: Vec<f64> = nu.iter().map(|v| sign * v).collect();
    // reflection mapping e_n to m: H = I - 2 w w^T / |w|^2 with w = e_n - m
    let mut w = m.iter().map(|v| -v).collect::<Vec<_>>();
    w[n - 1] += 1.0;
    let ww: f64 = w.iter().map(|v| v * v).sum();
    let mut r = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            let h = if ww > 1e-30 {
                id - 2.0 * w[i] * w[j] / ww
            } else {
                id
            };
            r[i * n + j] = sign * h;
        }
    }
    r
}

/// `R_nu` for a (not necessarily normalised) direction. Catalogued rational
/// directions get their exact rational frame.
pub fn frame_for(nu: &[f64]) -> Result<RotationFrame> {
    let dim = nu.len();
    if !(2..=3).contains(&dim) {
        return Err(Error::param("nu", "only n = 2 and n = 3 are supported"));
    }
    let norm = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::param("nu", "must be a nonzero finite vector"));
    }
    let rational = catalog_lookup(nu);
    let unit: Vec<f64> = match &rational {
        Some(d) => d.to_unit(),
        None => nu.iter().map(|v| v / norm).collect(),
    };
    let matrix = if dim == 2 {
        planar_matrix(&unit)
    } else {
        householder_matrix(&unit)
    };
    Ok(RotationFrame {
        dim,
        normal: unit,
        matrix,
        rational,
    })
}

/// Direction in the plane at `degrees` from `e_1`.
pub fn planar_direction(degrees: f64) -> Vec<f64> {
    let t = degrees.to_radians();
    vec![t.cos(), t.sin()]
}

impl RotationFrame {
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn normal(&self) -> &[f64] {
        &self.normal
    }
    pub fn rational(&self) -> Option<&RationalDirection> {
        self.rational.as_ref()
    }
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dim + j]
    }
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// `R z`.
    #[inline]
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        let n = self.dim;
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += self.matrix[i * n + j] * z[j];
            }
            out[i] = s;
        }
    }

    /// `R^T y`.
    #[inline]
    pub fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        let n = self.dim;
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                s += self.matrix[i * n + j] * y[i];
            }
            out[j] = s;
        }
    }

    /// `M_nu R_nu` as an integer matrix, for catalogued directions.
    pub fn integer_multiple(&self) -> Option<(i64, Vec<i64>)> {
        let d = self.rational.as_ref()?;
        let m = lattice_scale(d.denom);
        let mr: Vec<f64> = self.matrix.iter().map(|v| v * m as f64).collect();
        let rounded: Vec<i64> = mr.iter().map(|v| v.round() as i64).collect();
        if mr
            .iter()
            .zip(&rounded)
            .all(|(a, b)| (a - *b as f64).abs() < 1e-9)
        {
            Some((m, rounded))
        } else {
            None
        }
    }
}

/// Smallest integer `M > 2` clearing the denominator `d`.
pub fn lattice_scale(denom: i64) -> i64 {
    let d = denom.abs().max(1);
    let mut m = d;
    while m <= 2 {
        m += d;
    }
    m
}

/// `Q^nu_rho(x) = x + R_nu (rho Q)` with `Q = (-1/2, 1/2)^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotatedCube {
    pub center: Vec<f64>,
    pub side: f64,
    pub frame: RotationFrame,
}

impl RotatedCube {
    pub fn new(center: Vec<f64>, side: f64, frame: RotationFrame) -> Result<Self> {
        if !(side > 0.0) || !side.is_finite() {
            return Err(Error::param("side", "must be positive"));
        }
        if center.len() != frame.dim() {
            return Err(Error::param("center", "dimension does not match the frame"));
        }
        Ok(Self {
            center,
            side,
            frame,
        })
    }

    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    /// `y = R z + x`.
    #[inline]
    pub fn to_physical(&self, z: &[f64], out: &mut [f64]) {
        self.frame.apply(z, out);
        for (o, c) in out.iter_mut().zip(&self.center) {
            *o += c;
        }
    }

    /// `z = R^T (y - x)`.
    pub fn to_local(&self, y: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = y.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let mut out = vec![0.0; self.dim()];
        self.frame.apply_transpose(&d, &mut out);
        out
    }

    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                let z: Vec<f64> = (0..n)
                    .map(|i| {
                        if mask >> i & 1 == 1 {
                            0.5 * self.side
                        } else {
                            -0.5 * self.side
                        }
                    })
                    .collect();
                let mut y = vec![0.0; n];
                self.to_physical(&z, &mut y);
                y
            })
            .collect()
    }

    /// Scaled copy `lambda Q`: center and side multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> RotatedCube {
        RotatedCube {
            center: self.center.iter().map(|c| c * lambda).collect(),
            side: self.side * lambda,
            frame: self.frame.clone(),
        }
    }
}

/// `u^nu_x(y)`: 1 on `{(y - x) . nu >= 0}`, 0 otherwise.
pub fn jump_datum(x: &[f64], nu: &[f64], y: &[f64]) -> f64 {
    let s: f64 = y.iter().zip(x).zip(nu).map(|((a, b), n)| (a - b) * n).sum();
    if s >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `u((y - x) . nu / eps)`.
pub fn regularised_datum(x: &[f64], nu: &[f64], eps: f64, profile: &Profile, y: &[f64]) -> f64 {
    let s: f64 = y.iter().zip(x).zip(nu).map(|((a, b), n)| (a - b) * n).sum();
    profile.value(s / eps)
}

/// Integer box `[a, b)` in `Z^{n-1}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegerBox {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl IntegerBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::param(
                "interval",
                "corners must have equal nonzero length",
            ));
        }
        if lo.iter().zip(&hi).any(|(a, b)| b <= a) {
            return Err(Error::param("interval", "degenerate interval (b_i <= a_i)"));
        }
        Ok(Self { lo, hi })
    }

    pub fn translated(&self, z: &[i64]) -> IntegerBox {
        IntegerBox {
            lo: self.lo.iter().zip(z).map(|(a, b)| a + b).collect(),
            hi: self.hi.iter().zip(z).map(|(a, b)| a + b).collect(),
        }
    }

    /// `L^{n-1}(I)`.
    pub fn volume(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) as f64)
            .product()
    }

    pub fn half_height(&self) -> f64 {
        0.5 * self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) as f64)
            .fold(0.0, f64::max)
    }

    pub fn is_cubic(&self) -> bool {
        let l = self.hi[0] - self.lo[0];
        self.lo.iter().zip(&self.hi).all(|(a, b)| b - a == l)
    }
}

/// `I_nu = M_nu R_nu (I x [-c, c))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeInterval {
    pub interval: IntegerBox,
    pub direction: RationalDirection,
    pub frame: RotationFrame,
    pub m_nu: i64,
    /// `M_nu R_nu` with integer entries, row-major.
    pub scaled_frame: Vec<i64>,
    pub half_height: f64,
}

pub fn lattice_interval(interval: &IntegerBox, nu: &[f64]) -> Result<LatticeInterval> {
    let frame = frame_for(nu)?;
    let direction = frame
        .rational()
        .cloned()
        .ok_or_else(|| Error::OffCatalog(nu.to_vec()))?;
    if interval.lo.len() + 1 != frame.dim() {
        return Err(Error::param("interval", "must live in Z^{n-1}"));
    }
    let (m_nu, scaled_frame) = frame
        .integer_multiple()
        .ok_or_else(|| Error::OffCatalog(nu.to_vec()))?;
    Ok(LatticeInterval {
        interval: interval.clone(),
        direction,
        half_height: interval.half_height(),
        frame,
        m_nu,
        scaled_frame,
    })
}

impl LatticeInterval {
    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    /// `M_nu R_nu (z', 0)`, an integer vector in the plane orthogonal to `nu`.
    pub fn lattice_vector(&self, z: &[i64]) -> Vec<i64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                (0..n - 1)
                    .map(|j| self.scaled_frame[i * n + j] * z[j])
                    .sum()
            })
            .collect()
    }

    /// `(I + z')_nu`.
    pub fn translated(&self, z: &[i64]) -> LatticeInterval {
        LatticeInterval {
            interval: self.interval.translated(z),
            ..self.clone()
        }
    }

    /// Local (frame) coordinates of the box: `M (I x [-c, c))`.
    pub fn local_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.m_nu as f64;
        let mut lo: Vec<f64> = self.interval.lo.iter().map(|&a| m * a as f64).collect();
        let mut hi: Vec<f64> = self.interval.hi.iter().map(|&b| m * b as f64).collect();
        lo.push(-m * self.half_height);
        hi.push(m * self.half_height);
        (lo, hi)
    }

    /// Physical corners `M R (v)` for the vertices `v` of `I x [-c, c]`.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let (lo, hi) = self.local_bounds();
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                let z: Vec<f64> = (0..n)
                    .map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] })
                    .collect();
                let mut y = vec![0.0; n];
                self.frame.apply(&z, &mut y);
                y
            })
            .collect()
    }

    /// The box as a rotated cube; requires a cubic `I`.
    pub fn as_cube(&self) -> Result<RotatedCube> {
        if !self.interval.is_cubic() {
            return Err(Error::param(
                "interval",
                "only cubic intervals give cubic boxes I_nu",
            ));
        }
        let (lo, hi) = self.local_bounds();
        let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let n = self.dim();
        // exact integer arithmetic for the center: M R (mid', 0) with
        // mid' = (a + b) / 2
        let twice: Vec<i64> = self
            .interval
            .lo
            .iter()
            .zip(&self.interval.hi)
            .map(|(a, b)| a + b)
            .collect();
        let v = self.lattice_vector(&twice);
        let center: Vec<f64> = v.iter().map(|&c| 0.5 * c as f64).collect();
        debug_assert!({
            let mut y = vec![0.0; n];
            self.frame.apply(&mid, &mut y);
            y.iter().zip(&center).all(|(a, b)| (a - b).abs() < 1e-9)
        });
        RotatedCube::new(center, hi[0] - lo[0], self.frame.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    fn same_sets(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> bool {
        a.iter().all(|p| {
            b.iter()
                .any(|q| p.iter().zip(q).all(|(x, y)| (x - y).abs() < 1e-12))
        }) && a.len() == b.len()
    }

    fn some_directions() -> Vec<Vec<f64>> {
        let mut v: Vec<Vec<f64>> = (0..24)
            .map(|k| planar_direction(15.0 * k as f64 + 1.0))
            .collect();
        v.extend(rational_catalog(2).iter().map(|d| d.to_unit()));
        v.push(vec![0.3, -0.5, 0.8]);
        v.push(vec![0.0, 0.0, -1.0]);
        v.push(vec![-0.2, 0.1, 0.0]);
        v
    }

    #[test]
    fn frames_are_orthogonal_and_map_en_to_nu() {
        for nu in some_directions() {
            let f = frame_for(&nu).unwrap();
            let n = f.dim();
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = (0..n).map(|k| f.entry(k, i) * f.entry(k, j)).sum();
                    let id = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - id).abs() < 1e-12);
                }
            }
            let norm = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
            for i in 0..n {
                assert!((f.entry(i, n - 1) - nu[i] / norm).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn opposite_normals_give_the_same_cube() {
        for nu in some_directions() {
            let neg: Vec<f64> = nu.iter().map(|v| -v).collect();
            let x = vec![0.3; nu.len()];
            let a = RotatedCube::new(x.clone(), 1.7, frame_for(&nu).unwrap()).unwrap();
            let b = RotatedCube::new(x, 1.7, frame_for(&neg).unwrap()).unwrap();
            assert!(
                same_sets(sorted(a.vertices()), sorted(b.vertices())),
                "{nu:?}"
            );
        }
    }

    #[test]
    fn axis_and_catalog_frames() {
        let f = frame_for(&[0.0, 1.0]).unwrap();
        assert_eq!(f.matrix(), &[1.0, 0.0, 0.0, 1.0]);
        let f = frame_for(&[0.6, 0.8]).unwrap();
        assert_eq!(f.matrix(), &[0.8, 0.6, -0.6, 0.8]);
        let (m, mr) = f.integer_multiple().unwrap();
        assert_eq!(m, 5);
        assert_eq!(mr, vec![4, 3, -3, 4]);
        let f3 = frame_for(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(f3.matrix(), &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        // integer pair input normalises onto the catalog
        let f = frame_for(&[3.0, 4.0]).unwrap();
        assert_eq!(f.rational().unwrap().denom, 5);
        assert!(frame_for(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn catalog_lattice_vectors_lie_in_the_plane() {
        for d in rational_catalog(2) {
            let nu = d.to_unit();
            let li = lattice_interval(&IntegerBox::new(vec![0], vec![1]).unwrap(), &nu).unwrap();
            assert!(li.m_nu > 2);
            for z in -5..=5 {
                let v = li.lattice_vector(&[z]);
                let dot: i64 = v.iter().zip(&d.numer).map(|(a, b)| a * b).sum();
                assert_eq!(dot, 0, "{d:?}");
            }
        }
    }

    #[test]
    fn lattice_interval_examples() {
        let i = IntegerBox::new(vec![-1], vec![1]).unwrap();
        let li = lattice_interval(&i, &[0.0, 1.0]).unwrap();
        assert_eq!(li.m_nu, 3);
        assert_eq!(li.half_height, 1.0);
        assert_eq!(li.local_bounds(), (vec![-3.0, -3.0], vec![3.0, 3.0]));

        let i = IntegerBox::new(vec![0], vec![1]).unwrap();
        let li = lattice_interval(&i, &[0.6, 0.8]).unwrap();
        assert_eq!(li.m_nu, 5);
        assert_eq!(li.half_height, 0.5);
        assert!(li.scaled_frame.iter().all(|_| true));

        assert!(matches!(
            lattice_interval(&i, &planar_direction(10.0)),
            Err(Error::OffCatalog(_))
        ));
        assert!(IntegerBox::new(vec![1], vec![1]).is_err());
    }

    #[test]
    fn translation_of_intervals_matches_lattice_shift() {
        for d in rational_catalog(2) {
            let nu = d.to_unit();
            let li = lattice_interval(&IntegerBox::new(vec![-1], vec![2]).unwrap(), &nu).unwrap();
            for z in [-2, 1, 3] {
                let shifted = li.translated(&[z]);
                let v = li.lattice_vector(&[z]);
                let mut a = sorted(shifted.corners());
                let mut b = sorted(
                    li.corners()
                        .into_iter()
                        .map(|c| c.iter().zip(&v).map(|(x, y)| x + *y as f64).collect())
                        .collect(),
                );
                a.iter_mut().chain(b.iter_mut()).for_each(|_| {});
                assert!(same_sets(a, b));
                let ca = shifted.as_cube().unwrap().center;
                let cb: Vec<f64> = li
                    .as_cube()
                    .unwrap()
                    .center
                    .iter()
                    .zip(&v)
                    .map(|(x, y)| x + *y as f64)
                    .collect();
                assert_eq!(ca, cb);
            }
        }
    }

    #[test]
    fn jump_and_regularised_data() {
        let x = [0.2, -0.1];
        let nu = [0.6, 0.8];
        let u = Profile::default();
        assert_eq!(jump_datum(&x, &nu, &x), 1.0);
        assert_eq!(jump_datum(&x, &nu, &[x[0] - 0.6, x[1] - 0.8]), 0.0);
        assert_eq!(jump_datum(&x, &nu, &[x[0] + 0.6, x[1] + 0.8]), 1.0);
        assert_eq!(regularised_datum(&x, &nu, 0.1, &u, &x), 0.5);
        let eps = 0.1;
        for s in [-1.0, 1.0] {
            let y = [x[0] + s * 2.0 * eps * nu[0], x[1] + s * 2.0 * eps * nu[1]];
            assert_eq!(
                regularised_datum(&x, &nu, eps, &u, &y),
                jump_datum(&x, &nu, &y)
            );
        }
        // eps = 1, x = 0 is the eps-free datum u(y . nu)
        let y = [0.3, 0.1];
        let t = y[0] * nu[0] + y[1] * nu[1];
        assert_eq!(regularised_datum(&[0.0, 0.0], &nu, 1.0, &u, &y), u.value(t));
    }

    #[test]
    fn regularised_datum_monotone_along_normal_and_flat_across() {
        let nu = planar_direction(37.0);
        let tangent = [-nu[1], nu[0]];
        let u = Profile::default();
        let mut last = -1.0;
        for k in -50..=50 {
            let s = k as f64 * 0.01;
            let y = [s * nu[0], s * nu[1]];
            let v = regularised_datum(&[0.0, 0.0], &nu, 0.2, &u, &y);
            assert!(v >= last);
            last = v;
            for m in [-3.0, 2.0] {
                let w = [y[0] + m * tangent[0], y[1] + m * tangent[1]];
                let vw = regularised_datum(&[0.0, 0.0], &nu, 0.2, &u, &w);
                assert!((vw - v).abs() < 1e-12);
            }
        }
    }
}
