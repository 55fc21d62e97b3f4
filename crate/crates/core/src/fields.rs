//! Nodal fields on rotated cubes and the discrete energy
//!
//! ```text
//!     F_eps(u, A) = sum_cells h^n (1/eps) f(y_c, u_c, eps R grad_z u_c)
//! ```
//!
//! with one sample per cell: `u_c` is the mean of the `2^n` corner values,
//! `grad_z u_c` the forward difference from the lower corner and `y_c` the
//! physical cell center.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RotatedCube;
use crate::integrands::Integrand;
use crate::potentials::Profile;
use crate::solver::Objective;

/// Minimum number of cells per axis.
pub const MIN_CELLS: usize = 8;

/// `(N + 1)^n` nodes on `Q^nu_rho(x)`, spacing `h = rho / N`.
///
/// The physical position of the local point `z` is `anchor + R z + center`;
/// the integer `anchor` carries lattice translations exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    cube: RotatedCube,
    cells: usize,
    h: f64,
    anchor: Vec<i64>,
}

impl Grid {
    pub fn new(cube: RotatedCube, cells: usize) -> Result<Self> {
        if cells < MIN_CELLS {
            return Err(Error::param(
                "N",
                format!("need at least {MIN_CELLS} cells per axis"),
            ));
        }
        let h = cube.side / cells as f64;
        let anchor = vec![0; cube.dim()];
        Ok(Self {
            cube,
            cells,
            h,
            anchor,
        })
    }

    /// The same grid translated by the integer vector `v`.
    pub fn with_anchor(mut self, anchor: Vec<i64>) -> Result<Self> {
        if anchor.len() != self.dim() {
            return Err(Error::param("anchor", "dimension mismatch"));
        }
        self.anchor = anchor;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.cube.dim()
    }
    pub fn cells(&self) -> usize {
        self.cells
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn cube(&self) -> &RotatedCube {
        &self.cube
    }
    pub fn anchor(&self) -> &[i64] {
        &self.anchor
    }
    pub fn side(&self) -> f64 {
        self.cube.side
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.cells + 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis().pow(self.dim() as u32)
    }

    pub fn cell_count(&self) -> usize {
        self.cells.pow(self.dim() as u32)
    }

    /// Flat-index strides, first axis fastest.
    pub fn strides(&self) -> Vec<usize> {
        let m = self.nodes_per_axis();
        (0..self.dim()).map(|k| m.pow(k as u32)).collect()
    }

    pub fn node_index(&self, multi: &[usize]) -> usize {
        let m = self.nodes_per_axis();
        multi.iter().rev().fold(0, |acc, &i| acc * m + i)
    }

    pub fn node_multi(&self, mut flat: usize) -> Vec<usize> {
        let m = self.nodes_per_axis();
        (0..self.dim())
            .map(|_| {
                let i = flat % m;
                flat /= m;
                i
            })
            .collect()
    }

    /// Local coordinate of node index `i` along an axis: `(i - N/2) h`.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (2 * i as i64 - self.cells as i64) as f64 * 0.5 * self.h
    }

    pub fn node_local(&self, flat: usize) -> Vec<f64> {
        self.node_multi(flat)
            .iter()
            .map(|&i| self.coord(i))
            .collect()
    }

    /// `R z + center`, without the anchor.
    pub fn node_relative(&self, flat: usize) -> Vec<f64> {
        let z = self.node_local(flat);
        let mut y = vec![0.0; self.dim()];
        self.cube.to_physical(&z, &mut y);
        y
    }

    pub fn node_physical(&self, flat: usize) -> Vec<f64> {
        let mut y = self.node_relative(flat);
        for (v, a) in y.iter_mut().zip(&self.anchor) {
            *v += *a as f64;
        }
        y
    }

    /// Number of node layers between the node and the cube boundary.
    pub fn boundary_layer(&self, flat: usize) -> usize {
        self.node_multi(flat)
            .iter()
            .map(|&i| i.min(self.cells - i))
            .min()
            .unwrap_or(0)
    }

    pub fn compatible(&self, other: &Grid) -> bool {
        self == other
    }
}

/// The regularised datum `u((y - x) . nu / eps)`, stored relative to the
/// grid: `(y - x) . nu = (R z) . nu + offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Datum {
    pub normal: Vec<f64>,
    pub eps: f64,
    pub offset: f64,
    pub profile: Profile,
}

impl Datum {
    /// Datum jumping across the hyperplane through the cube center.
    pub fn centered(normal: &[f64], eps: f64) -> Self {
        Self {
            normal: normal.to_vec(),
            eps,
            offset: 0.0,
            profile: Profile::default(),
        }
    }

    /// Datum jumping across the hyperplane through the physical point `x`.
    pub fn through(grid: &Grid, x: &[f64], normal: &[f64], eps: f64) -> Self {
        let offset = grid
            .cube()
            .center
            .iter()
            .zip(grid.anchor())
            .zip(x)
            .zip(normal)
            .map(|(((c, a), xi), n)| ((c + *a as f64) - xi) * n)
            .sum();
        Self {
            normal: normal.to_vec(),
            eps,
            offset,
            profile: Profile::default(),
        }
    }

    /// Signed distance `(y - x) . nu` at a node.
    pub fn signed_distance(&self, grid: &Grid, flat: usize) -> f64 {
        let z = grid.node_local(flat);
        let frame = &grid.cube().frame;
        if frame.normal() == self.normal.as_slice() {
            // R e_n = nu, so (R z) . nu = z_n
            z[grid.dim() - 1] + self.offset
        } else {
            let mut y = vec![0.0; grid.dim()];
            frame.apply(&z, &mut y);
            y.iter().zip(&self.normal).map(|(a, b)| a * b).sum::<f64>() + self.offset
        }
    }

    pub fn value(&self, grid: &Grid, flat: usize) -> f64 {
        self.profile
            .value(self.signed_distance(grid, flat) / self.eps)
    }

    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.node_count())
            .map(|j| self.value(grid, j))
            .collect()
    }
}

/// Nodal values in `[0, 1]` with a clamp mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub clamped: Vec<bool>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>, clamped: Vec<bool>) -> Result<Self> {
        let count = grid.node_count();
        if values.len() != count || clamped.len() != count {
            return Err(Error::IncompatibleGrids(format!(
                "expected {count} nodal values, got {} values and {} mask entries",
                values.len(),
                clamped.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::param("values", "must lie in [0, 1]"));
        }
        Ok(Self {
            grid,
            values,
            clamped,
        })
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&j| !self.clamped[j])
            .collect()
    }

    pub fn free_count(&self) -> usize {
        self.clamped.iter().filter(|c| !**c).count()
    }

    /// Replaces the free values, keeping clamped ones.
    pub fn with_free_values(&self, free: &[f64]) -> ScalarField {
        let mut out = self.clone();
        for (j, v) in self.free_indices().into_iter().zip(free) {
            out.values[j] = *v;
        }
        out
    }

    /// True when the clamped nodes hold `reference` exactly.
    pub fn respects(&self, reference: &[f64]) -> bool {
        self.clamped
            .iter()
            .zip(&self.values)
            .zip(reference)
            .all(|((c, v), r)| !*c || v == r)
    }
}

/// Clamp mask of the band `Q_rho \ closed Q_{rho - 2 delta_bc}`; boundary
/// nodes are always clamped.
pub fn band_mask(grid: &Grid, delta_bc: f64) -> Vec<bool> {
    let layers = delta_bc / grid.h() - 1e-9;
    (0..grid.node_count())
        .map(|j| {
            let l = grid.boundary_layer(j);
            l == 0 || (l as f64) < layers
        })
        .collect()
}

/// Field initialised to the datum with the boundary band clamped.
pub fn init_with(grid: &Grid, datum: &Datum, delta_bc: f64) -> Result<ScalarField> {
    if !(datum.eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    let h = grid.h();
    if !(delta_bc >= h * (1.0 - 1e-9)) {
        return Err(Error::param(
            "delta_bc",
            format!("band {delta_bc} is thinner than one cell (h = {h})"),
        ));
    }
    if !(delta_bc < 0.5 * grid.side()) {
        return Err(Error::param(
            "delta_bc",
            "must be smaller than half the side",
        ));
    }
    let values = datum.sample(grid);
    let clamped = band_mask(grid, delta_bc);
    ScalarField::new(grid.clone(), values, clamped)
}

/// `init_from_datum(grid, x, nu, eps, delta_bc)`.
pub fn init_from_datum(
    grid: &Grid,
    x: &[f64],
    nu: &[f64],
    eps: f64,
    delta_bc: f64,
) -> Result<ScalarField> {
    init_with(grid, &Datum::through(grid, x, nu, eps), delta_bc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub total: f64,
    pub eps: f64,
    /// `total / rho^{n-1}`.
    pub density: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_cell: Option<Vec<f64>>,
}

/// Per-grid precomputation of the discrete energy.
#[derive(Clone, Debug)]
pub struct EnergyModel {
    integrand: Integrand,
    grid: Grid,
    eps: f64,
    coefficients: Vec<f64>,
    cell_base: Vec<usize>,
    corner_offsets: Vec<usize>,
    strides: Vec<usize>,
}

impl EnergyModel {
    pub fn new(integrand: &Integrand, grid: &Grid, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::param("eps", "must be positive"));
        }
        if integrand.dim() != grid.dim() {
            return Err(Error::IncompatibleGrids(format!(
                "integrand has dimension {}, grid {}",
                integrand.dim(),
                grid.dim()
            )));
        }
        let n = grid.dim();
        let strides = grid.strides();
        let corner_offsets: Vec<usize> = (0..1usize << n)
            .map(|mask| {
                (0..n)
                    .filter(|k| mask >> k & 1 == 1)
                    .map(|k| strides[k])
                    .sum()
            })
            .collect();
        let cells = grid.cells();
        let count = grid.cell_count();
        let mut cell_base = Vec::with_capacity(count);
        let mut coefficients = Vec::with_capacity(count);
        let mut multi = vec![0usize; n];
        let mut z = vec![0.0; n];
        let mut y = vec![0.0; n];
        for _ in 0..count {
            cell_base.push(grid.node_index(&multi));
            for k in 0..n {
                z[k] = grid.coord(multi[k]) + 0.5 * grid.h();
            }
            grid.cube().to_physical(&z, &mut y);
            coefficients.push(integrand.coefficient_at_anchored(grid.anchor(), &y));
            for m in multi.iter_mut() {
                *m += 1;
                if *m < cells {
                    break;
                }
                *m = 0;
            }
        }
        Ok(Self {
            integrand: integrand.clone(),
            grid: grid.clone(),
            eps,
            coefficients,
            cell_base,
            corner_offsets,
            strides,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }
    pub fn integrand(&self) -> &Integrand {
        &self.integrand
    }
    /// Coefficient sampled at each cell center.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }
    /// Flat index of each cell's lower corner.
    pub fn cell_base(&self) -> &[usize] {
        &self.cell_base
    }
    pub fn corner_offsets(&self) -> &[usize] {
        &self.corner_offsets
    }

    /// `h^n / eps`.
    pub fn scale(&self) -> f64 {
        self.grid.h().powi(self.grid.dim() as i32) / self.eps
    }

    #[inline]
    fn cell_state(&self, values: &[f64], c: usize, g: &mut [f64; 3]) -> (f64, f64) {
        let base = self.cell_base[c];
        let mut mean = 0.0;
        for &o in &self.corner_offsets {
            mean += values[base + o];
        }
        mean /= self.corner_offsets.len() as f64;
        let inv_h = 1.0 / self.grid.h();
        let u0 = values[base];
        let mut g2 = 0.0;
        for (k, &s) in self.strides.iter().enumerate() {
            g[k] = (values[base + s] - u0) * inv_h;
            g2 += g[k] * g[k];
        }
        (mean, g2)
    }

    /// Unscaled cell density `a_c (W(u_c) + |xi_c|^p)`.
    #[inline]
    fn cell_density(&self, values: &[f64], c: usize) -> f64 {
        let mut g = [0.0; 3];
        let (mean, g2) = self.cell_state(values, c, &mut g);
        let e2 = self.eps * self.eps;
        self.integrand
            .density_norm2(self.coefficients[c], mean, e2 * g2)
    }

    pub fn energy(&self, values: &[f64]) -> f64 {
        let mut total = 0.0;
        for c in 0..self.cell_base.len() {
            total += self.cell_density(values, c);
        }
        total * self.scale()
    }

    /// Scaled energy of every cell.
    pub fn cell_energies(&self, values: &[f64]) -> Vec<f64> {
        let s = self.scale();
        (0..self.cell_base.len())
            .map(|c| self.cell_density(values, c) * s)
            .collect()
    }

    /// Energy and its gradient with respect to all nodal values.
    pub fn energy_and_gradient(&self, values: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let e2 = self.eps * self.eps;
        let inv_h = 1.0 / self.grid.h();
        let inv_corners = 1.0 / self.corner_offsets.len() as f64;
        let mut g = [0.0; 3];
        let mut total = 0.0;
        for c in 0..self.cell_base.len() {
            let (mean, g2) = self.cell_state(values, c, &mut g);
            let a = self.coefficients[c];
            let norm2 = e2 * g2;
            total += self.integrand.density_norm2(a, mean, norm2);
            let (dw, k) = self.integrand.density_partials(a, mean, norm2);
            let base = self.cell_base[c];
            let dm = dw * inv_corners;
            for &o in &self.corner_offsets {
                grad[base + o] += dm;
            }
            let factor = k * e2 * inv_h;
            for (kk, &s) in self.strides.iter().enumerate() {
                let d = factor * g[kk];
                grad[base + s] += d;
                grad[base] -= d;
            }
        }
        let s = self.scale();
        grad.iter_mut().for_each(|v| *v *= s);
        total * s
    }

    pub fn report(&self, values: &[f64], per_cell: bool) -> EnergyReport {
        let total = self.energy(values);
        EnergyReport {
            total,
            eps: self.eps,
            density: total / self.grid.side().powi(self.grid.dim() as i32 - 1),
            per_cell: per_cell.then(|| self.cell_energies(values)),
        }
    }
}

/// `energy(I, F, eps)`.
pub fn energy(integrand: &Integrand, field: &ScalarField, eps: f64) -> Result<EnergyReport> {
    Ok(EnergyModel::new(integrand, &field.grid, eps)?.report(&field.values, false))
}

/// Gradient of the energy with respect to the free nodal values, in the order
/// of [`ScalarField::free_indices`].
pub fn energy_gradient(integrand: &Integrand, field: &ScalarField, eps: f64) -> Result<Vec<f64>> {
    let model = EnergyModel::new(integrand, &field.grid, eps)?;
    let mut grad = vec![0.0; field.values.len()];
    model.energy_and_gradient(&field.values, &mut grad);
    Ok(field.free_indices().into_iter().map(|j| grad[j]).collect())
}

/// The energy as a function of the free nodal values.
pub struct FieldObjective<'a> {
    model: &'a EnergyModel,
    full: Vec<f64>,
    free: Vec<usize>,
    grad: Vec<f64>,
}

impl<'a> FieldObjective<'a> {
    pub fn new(model: &'a EnergyModel, field: &ScalarField) -> Self {
        Self {
            model,
            full: field.values.clone(),
            free: field.free_indices(),
            grad: vec![0.0; field.values.len()],
        }
    }

    pub fn initial(&self) -> Vec<f64> {
        self.free.iter().map(|&j| self.full[j]).collect()
    }
}

impl Objective for FieldObjective<'_> {
    fn len(&self) -> usize {
        self.free.len()
    }

    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        for (&j, &v) in self.free.iter().zip(x) {
            self.full[j] = v;
        }
        let e = self.model.energy_and_gradient(&self.full, &mut self.grad);
        for (g, &j) in grad.iter_mut().zip(&self.free) {
            *g = self.grad[j];
        }
        e
    }
}

/// Cells `lo <= c < hi` (per axis) of a grid; nodes `lo..=hi`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexBox {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
}

impl IndexBox {
    pub fn new(lo: Vec<usize>, hi: Vec<usize>) -> Self {
        Self { lo, hi }
    }

    pub fn whole(grid: &Grid) -> Self {
        Self {
            lo: vec![0; grid.dim()],
            hi: vec![grid.cells(); grid.dim()],
        }
    }

    pub fn contains_cell(&self, cell: &[usize]) -> bool {
        cell.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(c, (a, b))| a <= c && c < b)
    }

    fn strictly_inside(&self, outer: &IndexBox) -> bool {
        self.lo.iter().zip(&outer.lo).all(|(a, b)| a > b)
            && self.hi.iter().zip(&outer.hi).all(|(a, b)| a < b)
    }
}

/// Regions of the gluing construction: `A` compactly inside `A'`, and `B`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlueRegions {
    pub inner: IndexBox,
    pub outer: IndexBox,
    pub other: IndexBox,
}

#[derive(Clone, Debug)]
pub struct GlueOutcome {
    pub field: ScalarField,
    pub chosen_layer: usize,
    pub layers: usize,
    /// `F(w^i, A u B)` for every layer.
    pub layer_energies: Vec<f64>,
    pub energy: f64,
    pub energy_u: f64,
    pub energy_v: f64,
    /// Multiplier `M` in `(1 + M / N)(F(u, A') + F(v, B)) + omega`.
    pub multiplier: f64,
    pub omega: f64,
    pub bound: f64,
    /// `omega` part from `|u - v|^p` on the shells.
    pub omega_difference: f64,
    /// `omega` part from `W(w^i) / eps` on the shells.
    pub omega_well: f64,
    pub admissible: bool,
}

impl GlueOutcome {
    pub fn holds(&self) -> bool {
        self.energy <= self.bound * (1.0 + 1e-12)
    }
}

/// Box gauge: 0 on `inner`, 1 outside `outer`, piecewise linear between.
fn gauge(grid: &Grid, regions: &GlueRegions, flat: usize) -> f64 {
    let idx = grid.node_multi(flat);
    let (a, p) = (&regions.inner, &regions.outer);
    let mut s: f64 = 0.0;
    for k in 0..idx.len() {
        let i = idx[k] as f64;
        let (alo, ahi, plo, phi) = (
            a.lo[k] as f64,
            a.hi[k] as f64,
            p.lo[k] as f64,
            p.hi[k] as f64,
        );
        s = s.max((alo - i) / (alo - plo)).max((i - ahi) / (phi - ahi));
    }
    s.clamp(0.0, 1.0)
}

/// Cut-off gluing `w^i = phi_i u + (1 - phi_i) v` over `layers` nested shells
/// between `A` and `A'`; returns the layer of least energy on `A u B`
/// together with the averaged bound it satisfies.
pub fn glue(
    integrand: &Integrand,
    eps: f64,
    u: &ScalarField,
    v: &ScalarField,
    regions: &GlueRegions,
    layers: usize,
) -> Result<GlueOutcome> {
    if !u.grid.compatible(&v.grid) || u.clamped != v.clamped {
        return Err(Error::IncompatibleGrids(
            "u and v must share grid and clamp mask".into(),
        ));
    }
    if layers < 2 {
        return Err(Error::param("layers", "must be at least 2"));
    }
    let grid = &u.grid;
    let n = grid.dim();
    for b in [&regions.inner, &regions.outer, &regions.other] {
        if b.lo.len() != n || b.hi.len() != n || b.hi.iter().any(|&h| h > grid.cells()) {
            return Err(Error::IncompatibleGrids("region outside the grid".into()));
        }
    }
    if !regions.inner.strictly_inside(&regions.outer) {
        return Err(Error::param(
            "regions",
            "A must be compactly contained in A'",
        ));
    }
    let model = EnergyModel::new(integrand, grid, eps)?;
    let cells = grid.cell_count();
    let cell_multi: Vec<Vec<usize>> = model
        .cell_base()
        .iter()
        .map(|&b| grid.node_multi(b))
        .collect();
    let in_inner: Vec<bool> = cell_multi
        .iter()
        .map(|c| regions.inner.contains_cell(c))
        .collect();
    let in_outer: Vec<bool> = cell_multi
        .iter()
        .map(|c| regions.outer.contains_cell(c))
        .collect();
    let in_other: Vec<bool> = cell_multi
        .iter()
        .map(|c| regions.other.contains_cell(c))
        .collect();
    let in_domain: Vec<bool> = (0..cells).map(|c| in_inner[c] || in_other[c]).collect();

    let eu = model.cell_energies(&u.values);
    let ev = model.cell_energies(&v.values);
    let energy_u: f64 = (0..cells).filter(|&c| in_outer[c]).map(|c| eu[c]).sum();
    let energy_v: f64 = (0..cells).filter(|&c| in_other[c]).map(|c| ev[c]).sum();

    let s: Vec<f64> = (0..grid.node_count())
        .map(|j| gauge(grid, regions, j))
        .collect();
    let p = integrand.p();
    let h = grid.h();
    let scale = model.scale();
    let convex = 3f64.powf(p - 1.0);
    let mut multiplicity = vec![0usize; cells];
    let mut layer_energies = Vec::with_capacity(layers);
    let mut omega_difference = 0.0;
    let mut omega_well = 0.0;
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut w = vec![0.0; grid.node_count()];
    let mut phi = vec![0.0; grid.node_count()];
    let denom = (layers + 2) as f64;

    for i in 1..=layers {
        let (t0, t1) = (i as f64 / denom, (i + 1) as f64 / denom);
        for j in 0..w.len() {
            phi[j] = ((t1 - s[j]) / (t1 - t0)).clamp(0.0, 1.0);
            w[j] = v.values[j] + phi[j] * (u.values[j] - v.values[j]);
        }
        let ew = model.cell_energies(&w);
        let mut total = 0.0;
        for c in 0..cells {
            if !in_domain[c] {
                continue;
            }
            total += ew[c];
            let base = model.cell_base()[c];
            let corner_phi = model.corner_offsets().iter().map(|&o| phi[base + o]);
            let all_one = corner_phi.clone().all(|f| f == 1.0);
            let all_zero = corner_phi.clone().all(|f| f == 0.0);
            if all_one || all_zero {
                continue;
            }
            if !(in_outer[c] && in_other[c]) {
                return Err(Error::IncompatibleGrids(format!(
                    "shell {i} leaves A' n B; use fewer layers or a wider A' \\ A"
                )));
            }
            multiplicity[c] += 1;
            let mut gphi2 = 0.0;
            for &st in &grid.strides() {
                let d = (phi[base + st] - phi[base]) / h;
                gphi2 += d * d;
            }
            let diff = (u.values[base] - v.values[base]).abs();
            let a = model.coefficients()[c];
            let mean = model
                .corner_offsets()
                .iter()
                .map(|&o| w[base + o])
                .sum::<f64>()
                / model.corner_offsets().len() as f64;
            omega_well += scale * a * integrand.well().value(mean);
            omega_difference +=
                scale * a * convex * eps.powf(p) * gphi2.powf(0.5 * p) * diff.powf(p);
        }
        layer_energies.push(total);
        if best.as_ref().is_none_or(|b| total < b.1) {
            best = Some((i, total, w.clone()));
        }
    }
    let nl = layers as f64;
    omega_difference /= nl;
    omega_well /= nl;
    let m = multiplicity.iter().copied().max().unwrap_or(0) as f64;
    let multiplier = m * convex;
    let omega = omega_difference + omega_well;
    let bound = (1.0 + multiplier / nl) * (energy_u + energy_v) + omega;
    let (chosen_layer, energy, values) = best.expect("at least two layers");
    let field = ScalarField {
        grid: grid.clone(),
        values,
        clamped: u.clamped.clone(),
    };
    let admissible = field.respects(&u.values) && field.respects(&v.values);
    Ok(GlueOutcome {
        field,
        chosen_layer,
        layers,
        layer_energies,
        energy,
        energy_u,
        energy_v,
        multiplier,
        omega,
        bound,
        omega_difference,
        omega_well,
        admissible,
    })
}

/// `u_lambda(z) = u(z / lambda)` on the cube scaled by `lambda`.
pub fn rescale_field(field: &ScalarField, lambda: f64) -> Result<ScalarField> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::param("lambda", "must be positive"));
    }
    let g = &field.grid;
    let mut cube = g.cube().clone();
    for (c, a) in cube.center.iter_mut().zip(g.anchor()) {
        *c = (*c + *a as f64) * lambda;
    }
    cube.side *= lambda;
    let grid = Grid::new(cube, g.cells())?;
    Ok(ScalarField {
        grid,
        values: field.values.clone(),
        clamped: field.clamped.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{frame_for, planar_direction};
    use crate::integrands::{CoefficientField, RandomCheckerboard};
    use crate::potentials::DoubleWell;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(nu: &[f64], side: f64, cells: usize) -> Grid {
        let cube = RotatedCube::new(vec![0.1, -0.2], side, frame_for(nu).unwrap()).unwrap();
        Grid::new(cube, cells).unwrap()
    }

    fn mm() -> Integrand {
        Integrand::homogeneous(2, DoubleWell::quartic(), 2.0).unwrap()
    }

    fn random_free(field: &ScalarField, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = field.clone();
        for j in 0..out.values.len() {
            if !out.clamped[j] {
                out.values[j] = rng.gen();
            }
        }
        out
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = square(&[0.0, 1.0], 1.0, 10);
        assert_eq!(g.node_count(), 121);
        for j in [0, 7, 60, 120] {
            assert_eq!(g.node_index(&g.node_multi(j)), j);
        }
        assert_eq!(g.coord(0), -0.5);
        assert_eq!(g.coord(10), 0.5);
        assert_eq!(g.coord(5), 0.0);
        assert!(Grid::new(g.cube().clone(), 4).is_err());
    }

    #[test]
    fn init_clamps_the_band_and_samples_the_datum() {
        let g = square(&[0.6, 0.8], 1.0, 16);
        let x = g.cube().center.clone();
        let f = init_from_datum(&g, &x, &[0.6, 0.8], 0.1, 2.0 * g.h()).unwrap();
        for j in 0..g.node_count() {
            let layer = g.boundary_layer(j);
            assert_eq!(f.clamped[j], layer < 2, "node {j}");
            let z = g.node_local(j);
            if z[1] == 0.0 {
                assert_eq!(f.values[j], 0.5);
            }
        }
        assert!(init_from_datum(&g, &x, &[0.6, 0.8], 0.1, 0.5 * g.h()).is_err());
        assert!(init_from_datum(&g, &x, &[0.6, 0.8], 0.1, 0.5).is_err());
    }

    #[test]
    fn constant_fields_have_zero_energy() {
        let g = square(&[0.0, 1.0], 1.0, 12);
        for c in [0.0, 1.0] {
            let f = ScalarField::new(
                g.clone(),
                vec![c; g.node_count()],
                vec![false; g.node_count()],
            )
            .unwrap();
            assert_eq!(energy(&mm(), &f, 0.1).unwrap().total, 0.0);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let laminate = Integrand::with_coefficient(
            2,
            DoubleWell::quartic(),
            2.0,
            CoefficientField::Laminate {
                axis: 1,
                values: vec![2.0, 1.0],
            },
        )
        .unwrap();
        let p3 = Integrand::homogeneous(2, DoubleWell::quartic(), 3.0).unwrap();
        for (k, integrand) in [mm(), laminate, p3].iter().enumerate() {
            let g = square(&planar_direction(20.0), 1.3, 12);
            let base = init_from_datum(
                &g,
                &g.cube().center.clone(),
                &planar_direction(20.0),
                0.2,
                g.h(),
            )
            .unwrap();
            let f = random_free(&base, k as u64);
            let grad = energy_gradient(integrand, &f, 0.2).unwrap();
            let free = f.free_indices();
            let model = EnergyModel::new(integrand, &f.grid, 0.2).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            for _ in 0..5 {
                let i = rng.gen_range(0..free.len());
                let j = free[i];
                let step = 1e-6;
                let mut plus = f.values.clone();
                plus[j] += step;
                let mut minus = f.values.clone();
                minus[j] -= step;
                let fd = (model.energy(&plus) - model.energy(&minus)) / (2.0 * step);
                assert!(
                    (fd - grad[i]).abs() <= 1e-5 * grad[i].abs().max(1e-3),
                    "{fd} vs {}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn clamped_nodes_get_no_gradient_entries() {
        let g = square(&[0.0, 1.0], 1.0, 10);
        let f = init_from_datum(&g, &[0.1, -0.2], &[0.0, 1.0], 0.2, 2.0 * g.h()).unwrap();
        assert_eq!(
            energy_gradient(&mm(), &f, 0.2).unwrap().len(),
            f.free_count()
        );
        assert_eq!(f.free_count(), 7 * 7);
    }

    #[test]
    fn energy_is_rotation_invariant_for_isotropic_integrands() {
        // the same nodal values on a cube rotated by a catalogued frame
        let a = square(&[0.0, 1.0], 1.0, 16);
        let b = square(&[0.6, 0.8], 1.0, 16);
        let fa = random_free(
            &init_from_datum(&a, &[0.1, -0.2], &[0.0, 1.0], 0.1, a.h()).unwrap(),
            3,
        );
        let fb = ScalarField {
            grid: b,
            ..fa.clone()
        };
        let ea = energy(&mm(), &fa, 0.1).unwrap().total;
        let eb = energy(&mm(), &fb, 0.1).unwrap().total;
        assert!((ea - eb).abs() <= 1e-10 * ea);
    }

    #[test]
    fn anchored_grids_sample_translated_coefficients() {
        let field = RandomCheckerboard::new(7, vec![0.5, 2.0]);
        let i = Integrand::with_coefficient(
            2,
            DoubleWell::quartic(),
            2.0,
            CoefficientField::Random(field.clone()),
        )
        .unwrap();
        let shifted = Integrand::with_coefficient(
            2,
            DoubleWell::quartic(),
            2.0,
            CoefficientField::Random(field.shifted(&[3, -1])),
        )
        .unwrap();
        let g = square(&[0.0, 1.0], 3.0, 24);
        let moved = g.clone().with_anchor(vec![3, -1]).unwrap();
        let ma = EnergyModel::new(&i, &moved, 1.0).unwrap();
        let mb = EnergyModel::new(&shifted, &g, 1.0).unwrap();
        assert_eq!(ma.coefficients(), mb.coefficients());
    }

    #[test]
    fn rescaling_identity_is_exact_for_dyadic_eps() {
        let g = Grid::new(
            RotatedCube::new(vec![0.25, 0.5], 1.0, frame_for(&[0.6, 0.8]).unwrap()).unwrap(),
            64,
        )
        .unwrap();
        let checker = Integrand::with_coefficient(
            2,
            DoubleWell::quartic(),
            2.0,
            CoefficientField::Checkerboard {
                divisions: 2,
                values: vec![0.5, 2.0, 2.0, 0.5],
            },
        )
        .unwrap();
        for eps in [0.25, 0.125] {
            let f = random_free(
                &init_from_datum(&g, &[0.25, 0.5], &[0.6, 0.8], eps, 2.0 * g.h()).unwrap(),
                5,
            );
            let lhs = energy(&checker.oscillating(eps), &f, eps).unwrap().total;
            let big = rescale_field(&f, 1.0 / eps).unwrap();
            let rhs = energy(&checker, &big, 1.0).unwrap().total;
            assert_eq!(lhs, eps * rhs);
        }
        let once = rescale_field(&rescale_field(&g_field(), 2.0).unwrap(), 0.5).unwrap();
        assert_eq!(once, g_field());
    }

    fn g_field() -> ScalarField {
        let g = square(&[0.0, 1.0], 1.0, 8);
        init_from_datum(&g, &[0.1, -0.2], &[0.0, 1.0], 0.25, g.h()).unwrap()
    }

    #[test]
    fn gluing_identical_fields_returns_them() {
        let g = square(&[0.0, 1.0], 1.0, 32);
        let f = init_from_datum(&g, &[0.1, -0.2], &[0.0, 1.0], 0.1, 2.0 * g.h()).unwrap();
        let regions = GlueRegions {
            inner: IndexBox::new(vec![8, 8], vec![24, 24]),
            outer: IndexBox::new(vec![4, 4], vec![28, 28]),
            other: IndexBox::new(vec![0, 0], vec![32, 32]),
        };
        let out = glue(&mm(), 0.1, &f, &f, &regions, 2).unwrap();
        assert_eq!(out.field.values, f.values);
        assert_eq!(out.omega_difference, 0.0);
        assert!(out.admissible && out.holds());
    }

    #[test]
    fn gluing_shifted_data_satisfies_the_bound() {
        let g = square(&[0.0, 1.0], 1.0, 40);
        let u = random_free(
            &init_from_datum(&g, &[0.1, -0.2], &[0.0, 1.0], 0.1, 2.0 * g.h()).unwrap(),
            1,
        );
        let v = init_from_datum(&g, &[0.1, -0.2 + g.h()], &[0.0, 1.0], 0.1, 2.0 * g.h()).unwrap();
        // admissibility needs equal clamped values
        let v = ScalarField {
            values: v
                .values
                .iter()
                .zip(&u.values)
                .zip(&u.clamped)
                .map(|((a, b), c)| if *c { *b } else { *a })
                .collect(),
            ..v
        };
        let regions = GlueRegions {
            inner: IndexBox::new(vec![10, 10], vec![30, 30]),
            outer: IndexBox::new(vec![4, 4], vec![36, 36]),
            other: IndexBox::new(vec![0, 0], vec![40, 40]),
        };
        let out = glue(&mm(), 0.1, &u, &v, &regions, 4).unwrap();
        assert!(out.holds(), "{} > {}", out.energy, out.bound);
        assert!(out.admissible);
        let many = glue(&mm(), 0.1, &u, &v, &regions, 40).unwrap();
        assert!(many.holds() && many.multiplier >= out.multiplier);
    }
}
