use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use super::grid::Grid;
use crate::error::{Error, Result};

/// Common surface of fields that are stacks of horizontal planes.
///
/// `Field3` has `nz` planes, `Field2` exactly one. Horizontal spectral
/// operators and quadratures are written once against this trait.
pub trait Planar: Clone {
    fn grid(&self) -> &Arc<Grid>;
    fn values(&self) -> &[f64];
    fn n_planes(&self) -> usize;
    /// New field on the same grid with the given samples.
    fn with_values(&self, values: Vec<f64>) -> Self;
    /// Vertical quadrature weight of plane `k` (1 for `Field2`).
    fn plane_weight(&self, k: usize) -> f64;
    /// Vertical derivative, `None` for z-independent storage.
    fn z_derivative(&self, order: usize) -> Option<Self>;

    fn plane(&self, k: usize) -> &[f64] {
        let n = self.grid().plane_len();
        &self.values()[k * n..(k + 1) * n]
    }

    fn norm_inf(&self) -> f64 {
        self.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn min_value(&self) -> f64 {
        self.values().iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn max_value(&self) -> f64 {
        self.values()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_values(self.values().iter().map(|&v| f(v)).collect())
    }

    fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_same_grid(self.grid(), other.grid());
        self.with_values(
            self.values()
                .iter()
                .zip(other.values())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// Pointwise product without dealiasing.
    fn pointwise(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }
}

pub(crate) fn assert_same_grid(a: &Arc<Grid>, b: &Arc<Grid>) {
    assert!(
        Arc::ptr_eq(a, b) || **a == **b,
        "fields live on different grids"
    );
}

/// Real samples on `Omega = T^2 x [0, kappa]`, indexed `(k * ny + j) * nx + i`.
#[derive(Clone, Debug)]
pub struct Field3 {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

/// Real samples on `T^2`, indexed `j * nx + i`.
#[derive(Clone, Debug)]
pub struct Field2 {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field3 {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        Field3 {
            grid: grid.clone(),
            values: vec![c; grid.len3()],
        }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len3());
        for k in 0..grid.nz() {
            let z = grid.z(k);
            for j in 0..grid.ny() {
                let y = grid.y(j);
                for i in 0..grid.nx() {
                    values.push(f(grid.x(i), y, z));
                }
            }
        }
        Field3 {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len3() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.len3(),
                values.len()
            )));
        }
        Ok(Field3 {
            grid: grid.clone(),
            values,
        })
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[(k * self.grid.ny() + j) * self.grid.nx() + i]
    }

    /// Horizontal slice at vertical node `k`.
    pub fn level(&self, k: usize) -> Field2 {
        Field2 {
            grid: self.grid.clone(),
            values: self.plane(k).to_vec(),
        }
    }

    /// Stack horizontal planes into a 3-D field.
    pub fn from_levels(grid: &Arc<Grid>, levels: &[Field2]) -> Self {
        assert_eq!(levels.len(), grid.nz());
        let mut values = Vec::with_capacity(grid.len3());
        for l in levels {
            assert_same_grid(grid, &l.grid);
            values.extend_from_slice(&l.values);
        }
        Field3 {
            grid: grid.clone(),
            values,
        }
    }
}

impl Field2 {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        Field2 {
            grid: grid.clone(),
            values: vec![c; grid.plane_len()],
        }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.plane_len());
        for j in 0..grid.ny() {
            let y = grid.y(j);
            for i in 0..grid.nx() {
                values.push(f(grid.x(i), y));
            }
        }
        Field2 {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.plane_len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.plane_len(),
                values.len()
            )));
        }
        Ok(Field2 {
            grid: grid.clone(),
            values,
        })
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.nx() + i]
    }

    /// Constant-in-z extension to `Omega`.
    pub fn lift(&self) -> Field3 {
        let mut values = Vec::with_capacity(self.grid.len3());
        for _ in 0..self.grid.nz() {
            values.extend_from_slice(&self.values);
        }
        Field3 {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Mean over the torus (equal-weight collocation average).
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

impl Planar for Field3 {
    fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn n_planes(&self) -> usize {
        self.grid.nz()
    }
    fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Field3 {
            grid: self.grid.clone(),
            values,
        }
    }
    fn plane_weight(&self, k: usize) -> f64 {
        self.grid.weights()[k]
    }
    fn z_derivative(&self, order: usize) -> Option<Self> {
        Some(super::vertical::dz(self, order))
    }
}

impl Planar for Field2 {
    fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn n_planes(&self) -> usize {
        1
    }
    fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Field2 {
            grid: self.grid.clone(),
            values,
        }
    }
    fn plane_weight(&self, _k: usize) -> f64 {
        1.0
    }
    fn z_derivative(&self, _order: usize) -> Option<Self> {
        None
    }
}

macro_rules! field_arith {
    ($t:ty) => {
        impl Add<&$t> for &$t {
            type Output = $t;
            fn add(self, rhs: &$t) -> $t {
                self.zip_map(rhs, |a, b| a + b)
            }
        }
        impl Sub<&$t> for &$t {
            type Output = $t;
            fn sub(self, rhs: &$t) -> $t {
                self.zip_map(rhs, |a, b| a - b)
            }
        }
        impl Add<$t> for $t {
            type Output = $t;
            fn add(self, rhs: $t) -> $t {
                &self + &rhs
            }
        }
        impl Sub<$t> for $t {
            type Output = $t;
            fn sub(self, rhs: $t) -> $t {
                &self - &rhs
            }
        }
        impl Mul<f64> for &$t {
            type Output = $t;
            fn mul(self, c: f64) -> $t {
                self.scale(c)
            }
        }
        impl Mul<f64> for $t {
            type Output = $t;
            fn mul(self, c: f64) -> $t {
                self.scale(c)
            }
        }
        impl Neg for &$t {
            type Output = $t;
            fn neg(self) -> $t {
                self.map(|v| -v)
            }
        }
        impl Neg for $t {
            type Output = $t;
            fn neg(self) -> $t {
                self.map(|v| -v)
            }
        }
    };
}

field_arith!(Field3);
field_arith!(Field2);

/// Horizontal vector field on `Omega` (components `u_1`, `u_2`).
pub type Vec3 = [Field3; 2];
/// Horizontal vector field on `T^2`.
pub type Vec2 = [Field2; 2];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lift_then_level_roundtrip() {
        let g = Grid::new(8, 8, 9, 1.0).unwrap();
        let r = Field2::from_fn(&g, |x, y| x.sin() + y.cos());
        let l = r.lift();
        for k in 0..g.nz() {
            assert_eq!(l.level(k).values(), r.values());
        }
    }

    #[test]
    fn arithmetic() {
        let g = Grid::new(8, 8, 9, 1.0).unwrap();
        let a = Field3::constant(&g, 2.0);
        let b = Field3::from_fn(&g, |_, _, z| z);
        let c = &(&a + &b) * 3.0 - b.clone();
        assert!((c.at(0, 0, 8) - (9.0 - 1.0)).abs() < 1e-15);
        assert_eq!((-&a).max_value(), -2.0);
    }

    #[test]
    #[should_panic]
    fn mismatched_grids_panic() {
        let g1 = Grid::new(8, 8, 9, 1.0).unwrap();
        let g2 = Grid::new(8, 8, 9, 2.0).unwrap();
        let _ = &Field3::zeros(&g1) + &Field3::zeros(&g2);
    }
}
