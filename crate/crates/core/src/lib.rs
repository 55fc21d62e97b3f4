//! Numerical cell problems for the surface tension of diffuse-interface
//! two-phase energies
//!
//! ```text
//!     F_eps(u, A) = (1/eps) * \int_A f(y, u, eps * grad u) dy,   0 <= u <= 1,
//! ```
//!
//! with `c1 (W(u) + |xi|^p) <= f(y, u, xi) <= c2 (W(u) + |xi|^p)`.
//!
//! The crate minimises `F_eps` on rotated cubes `Q^nu_rho(x)` subject to a
//! regularised jump datum near the boundary, and builds on that the surface
//! density sweeps (`cell`), periodic homogenisation (`homogenize`), the
//! lattice subadditive process and Monte-Carlo averages for random media
//! (`stochastic`), and an invariant suite binding the quantitative
//! inequalities together (`verify`).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cell;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod homogenize;
pub mod integrands;
pub mod io;
pub mod potentials;
pub mod quadrature;
pub mod solver;
pub mod stochastic;
pub mod verify;

mod par;

pub use error::{Error, Result};
