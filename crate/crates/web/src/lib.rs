//! WebAssembly bindings for the static demo page in `www/`.

use phasecell::cell::{solve_cell, CellProblem};
use phasecell::geometry::planar_direction;
use phasecell::integrands::{make_integrand, CoefficientField, Integrand, IntegrandSpec};
use phasecell::potentials::{compute_cp, DoubleWell};
use wasm_bindgen::prelude::*;

const MAX_CELLS: usize = 160;

fn well(name: &str) -> Result<DoubleWell, String> {
    match name {
        "quartic" => Ok(DoubleWell::Quartic { scale: 1.0 }),
        "quadratic-wells" => Ok(DoubleWell::QuadraticWells { scale: 1.0 }),
        other => Err(format!("unknown potential {other:?}")),
    }
}

fn medium(coefficient: &str, values: &[f64], p: f64) -> Result<Integrand, String> {
    let values = values.to_vec();
    let coefficient = match coefficient {
        "constant" => CoefficientField::Constant {
            value: values.first().copied().unwrap_or(1.0),
        },
        "laminate" => CoefficientField::Laminate { axis: 1, values },
        "checkerboard" => CoefficientField::Checkerboard {
            divisions: 2,
            values,
        },
        other => return Err(format!("unknown coefficient {other:?}")),
    };
    let spec = IntegrandSpec {
        p,
        coefficient,
        ..IntegrandSpec::default()
    };
    make_integrand(&spec).map_err(|e| e.to_string())
}

/// Planar cell solve at angle `degrees`, unit side.
#[wasm_bindgen]
pub struct CellView {
    density: f64,
    iterations: usize,
    converged: bool,
    nodes: usize,
    values: Vec<f64>,
}

#[wasm_bindgen]
impl CellView {
    #[wasm_bindgen(getter)]
    pub fn density(&self) -> f64 {
        self.density
    }
    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.iterations
    }
    #[wasm_bindgen(getter)]
    pub fn converged(&self) -> bool {
        self.converged
    }
    /// Nodes per axis of the field grid.
    #[wasm_bindgen(getter)]
    pub fn nodes(&self) -> usize {
        self.nodes
    }
    /// Nodal values, first axis fastest (cube-local frame).
    #[wasm_bindgen(getter)]
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }
}

fn solve(integrand: Integrand, degrees: f64, eps: f64, cells: usize) -> Result<CellView, String> {
    if cells > MAX_CELLS {
        return Err(format!("at most {MAX_CELLS} cells per axis in the browser"));
    }
    let problem = CellProblem::new(integrand, &planar_direction(degrees), 1.0, eps, cells);
    let r = solve_cell(&problem).map_err(|e| e.to_string())?;
    let field = r.field.ok_or("solver returned no field")?;
    Ok(CellView {
        density: r.density,
        iterations: r.iterations,
        converged: r.converged,
        nodes: cells + 1,
        values: field.values,
    })
}

/// Optimal one-dimensional transition cost.
#[wasm_bindgen]
pub fn transition_cost(potential: &str, p: f64) -> Result<f64, JsError> {
    let w = well(potential).map_err(|e| JsError::new(&e))?;
    compute_cp(&w, p, 256).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn cell_solve(
    coefficient: &str,
    values: Vec<f64>,
    p: f64,
    degrees: f64,
    eps: f64,
    cells: usize,
) -> Result<CellView, JsError> {
    medium(coefficient, &values, p)
        .and_then(|i| solve(i, degrees, eps, cells))
        .map_err(|e| JsError::new(&e))
}

/// Densities for `directions` equally spaced angles in `[0, 180)`.
#[wasm_bindgen]
pub fn polar_scan(
    coefficient: &str,
    values: Vec<f64>,
    p: f64,
    eps: f64,
    cells: usize,
    directions: usize,
) -> Result<Vec<f64>, JsError> {
    polar(coefficient, &values, p, eps, cells, directions).map_err(|e| JsError::new(&e))
}

fn polar(
    coefficient: &str,
    values: &[f64],
    p: f64,
    eps: f64,
    cells: usize,
    directions: usize,
) -> Result<Vec<f64>, String> {
    let integrand = medium(coefficient, values, p)?;
    let k = directions.clamp(1, 64);
    (0..k)
        .map(|j| {
            solve(integrand.clone(), 180.0 * j as f64 / k as f64, eps, cells).map(|v| v.density)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartic_cost() {
        let w = well("quartic").unwrap();
        assert!((compute_cp(&w, 2.0, 256).unwrap() - 1.0 / 3.0).abs() < 1e-8);
        assert!(well("sextic").is_err());
    }

    #[test]
    fn cell_view_shape() {
        let v = solve(medium("constant", &[1.0], 2.0).unwrap(), 30.0, 0.125, 24).unwrap();
        assert_eq!(v.nodes, 25);
        assert_eq!(v.values.len(), 25 * 25);
        assert!(v.converged && v.density > 0.0);
        assert!(v.values.iter().all(|u| (0.0..=1.0).contains(u)));
        assert!(solve(medium("constant", &[1.0], 2.0).unwrap(), 0.0, 0.125, 1000).is_err());
    }

    #[test]
    fn polar_is_flat_for_constant_medium() {
        let d = polar("constant", &[1.0], 2.0, 0.125, 32, 4).unwrap();
        assert_eq!(d.len(), 4);
        let (lo, hi) = d
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        assert!(hi / lo < 1.1, "{d:?}");
        assert!(medium("hexagonal", &[1.0], 2.0).is_err());
    }
}
