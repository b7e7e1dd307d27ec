//! Field algebra on `Omega = T^2 x [0, kappa]`: grids, horizontal spectral
//! and vertical finite-difference calculus, quadrature and snapshots.

pub mod field;
pub mod grid;
pub mod norms;
pub mod snapshot;
pub mod spectral;
pub mod vertical;

pub use field::{Field2, Field3, Planar, Vec2, Vec3};
pub use grid::Grid;
pub use norms::{l2_norm, sobolev_norm, SobolevMode};
pub use spectral::{dealias_product, dh, dh_mixed, Axis};
pub use vertical::{dz, dz_even, dz_sbp, vbar, vint, vint_balanced, vtilde};
