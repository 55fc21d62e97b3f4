//! Run configuration. Every key is optional in the TOML file; command-line
//! flags are applied on top.
//!
//! ```toml
//! seed = 0
//!
//! [integrand]
//! dim = 2
//! p = 2.0
//! length_scale = 1.0
//! potential = { kind = "quartic", scale = 1.0 }
//! coefficient = { kind = "laminate", axis = 1, values = [1.0, 2.0] }
//!
//! [solver]          # max_iters, tol_pg, tol_rel, bb_variant, window, restarts, perturbation
//! [cp]              # quad_points
//! [profile1d]       # grid
//! [cell]            # nu, x, rho, eps, cells, band_cells
//! [gamma]           # nu, x, rho_list, eps_list, cells, per_unit, richardson
//! [periodic]        # nu, x_list, r_list, cells_per_unit, band_cells, max_cells_per_axis,
//!                   # polar_directions, polar_r, tiling
//! [stochastic]      # values, nu, r_list, seeds, cells_per_unit, band_cells, max_cells_per_axis
//! [verify]          # level = "fast" | "full"
//! ```

use std::path::Path;

use anyhow::{Context, Result};
use phasecell::integrands::IntegrandSpec;
use phasecell::solver::SolverConfig;
use phasecell::verify::Level;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub integrand: IntegrandSpec,
    pub solver: SolverConfig,
    pub cp: CpSection,
    pub profile1d: ProfileSection,
    pub cell: CellSection,
    pub gamma: GammaSection,
    pub periodic: PeriodicSection,
    pub stochastic: StochasticSection,
    pub verify: VerifySection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpSection {
    pub quad_points: usize,
}

impl Default for CpSection {
    fn default() -> Self {
        Self { quad_points: 256 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSection {
    pub grid: usize,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self { grid: 512 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellSection {
    pub nu: Vec<f64>,
    pub x: Option<Vec<f64>>,
    pub rho: f64,
    pub eps: f64,
    pub cells: usize,
    pub band_cells: f64,
}

impl Default for CellSection {
    fn default() -> Self {
        Self {
            nu: vec![0.0, 1.0],
            x: None,
            rho: 1.0,
            eps: 0.0625,
            cells: 96,
            band_cells: 2.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaSection {
    pub nu: Vec<f64>,
    pub x: Option<Vec<f64>>,
    pub rho_list: Vec<f64>,
    pub eps_list: Vec<f64>,
    /// Cells per axis for every cube; ignored when `per_unit` is set.
    pub cells: usize,
    pub per_unit: Option<usize>,
    pub richardson: bool,
}

impl Default for GammaSection {
    fn default() -> Self {
        Self {
            nu: vec![0.0, 1.0],
            x: None,
            rho_list: vec![0.5, 1.0],
            eps_list: vec![0.125, 0.0625, 0.03125],
            cells: 96,
            per_unit: None,
            richardson: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeriodicSection {
    pub nu: Vec<f64>,
    pub x_list: Vec<Vec<f64>>,
    pub r_list: Vec<f64>,
    pub cells_per_unit: usize,
    pub band_cells: f64,
    pub max_cells_per_axis: usize,
    /// Number of equally spaced angles in `[0, 180)` for the polar scan.
    pub polar_directions: usize,
    /// Side of the polar scan cubes; the largest `r` when absent.
    pub polar_r: Option<f64>,
    /// `[r, s]` for the tiling check.
    pub tiling: Option<[f64; 2]>,
}

impl Default for PeriodicSection {
    fn default() -> Self {
        Self {
            nu: vec![0.0, 1.0],
            x_list: vec![vec![0.0, 0.0]],
            r_list: vec![4.0, 8.0],
            cells_per_unit: 16,
            band_cells: 2.0,
            max_cells_per_axis: 512,
            polar_directions: 16,
            polar_r: None,
            tiling: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StochasticSection {
    pub values: Vec<f64>,
    pub nu: Vec<f64>,
    pub r_list: Vec<f64>,
    pub seeds: usize,
    pub cells_per_unit: usize,
    pub band_cells: f64,
    pub max_cells_per_axis: usize,
}

impl Default for StochasticSection {
    fn default() -> Self {
        Self {
            values: vec![0.5, 2.0],
            nu: vec![0.0, 1.0],
            r_list: vec![4.0, 8.0, 16.0],
            seeds: 16,
            cells_per_unit: 8,
            band_cells: 2.0,
            max_cells_per_axis: 512,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub level: Level,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self { level: Level::Fast }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}
