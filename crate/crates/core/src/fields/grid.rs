use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Default retained-mode fraction for products (2/3 rule).
pub const DEFAULT_DEALIAS_FRACTION: f64 = 2.0 / 3.0;

/// Tensor-product mesh on `T^2 x [0, kappa]`.
///
/// Horizontal nodes are Fourier collocation points `x_i = 2 pi i / nx`,
/// vertical nodes are uniform and include both plates. The grid owns the
/// FFT plans and the trapezoidal vertical weights, so it is shared behind
/// an `Arc` by every field built on it.
pub struct Grid {
    nx: usize,
    ny: usize,
    nz: usize,
    kappa: f64,
    dz: f64,
    dealias_fraction: f64,
    weights: Vec<f64>,
    kx: Vec<f64>,
    ky: Vec<f64>,
    keep_x: Vec<bool>,
    keep_y: Vec<bool>,
    fft_x: Arc<dyn Fft<f64>>,
    ifft_x: Arc<dyn Fft<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("nz", &self.nz)
            .field("kappa", &self.kappa)
            .field("dealias_fraction", &self.dealias_fraction)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.nz == other.nz
            && self.kappa == other.kappa
            && self.dealias_fraction == other.dealias_fraction
    }
}

fn wavenumbers(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i <= n / 2 {
                i as f64
            } else {
                i as f64 - n as f64
            }
        })
        .collect()
}

fn dealias_keep(n: usize, fraction: f64) -> Vec<bool> {
    let cutoff = fraction * (n / 2) as f64;
    wavenumbers(n)
        .into_iter()
        .map(|k| k.abs() <= cutoff)
        .collect()
}

impl Grid {
    pub fn new(nx: usize, ny: usize, nz: usize, kappa: f64) -> Result<Arc<Grid>> {
        Self::with_dealias(nx, ny, nz, kappa, DEFAULT_DEALIAS_FRACTION)
    }

    pub fn with_dealias(
        nx: usize,
        ny: usize,
        nz: usize,
        kappa: f64,
        dealias_fraction: f64,
    ) -> Result<Arc<Grid>> {
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < 8 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "{name} = {n} must be even and >= 8"
                )));
            }
        }
        if nz < 8 {
            return Err(Error::InvalidGrid(format!("nz = {nz} must be >= 8")));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "kappa = {kappa} must be positive"
            )));
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            return Err(Error::InvalidGrid(format!(
                "dealias fraction {dealias_fraction} outside (0, 1]"
            )));
        }
        let dz = kappa / (nz - 1) as f64;
        let mut weights = vec![dz; nz];
        weights[0] = 0.5 * dz;
        weights[nz - 1] = 0.5 * dz;

        let mut planner = FftPlanner::new();
        Ok(Arc::new(Grid {
            nx,
            ny,
            nz,
            kappa,
            dz,
            dealias_fraction,
            weights,
            kx: wavenumbers(nx),
            ky: wavenumbers(ny),
            keep_x: dealias_keep(nx, dealias_fraction),
            keep_y: dealias_keep(ny, dealias_fraction),
            fft_x: planner.plan_fft_forward(nx),
            ifft_x: planner.plan_fft_inverse(nx),
            fft_y: planner.plan_fft_forward(ny),
            ifft_y: planner.plan_fft_inverse(ny),
        }))
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn nz(&self) -> usize {
        self.nz
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn dz(&self) -> f64 {
        self.dz
    }
    pub fn dealias_fraction(&self) -> f64 {
        self.dealias_fraction
    }

    /// Horizontal spacing (the smaller of the two directions).
    pub fn dx(&self) -> f64 {
        2.0 * PI / self.nx.max(self.ny) as f64
    }

    /// Area element of the horizontal quadrature, `(2 pi / nx) (2 pi / ny)`.
    pub fn cell_area(&self) -> f64 {
        (2.0 * PI / self.nx as f64) * (2.0 * PI / self.ny as f64)
    }

    /// Trapezoidal vertical weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn plane_len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn len3(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn x(&self, i: usize) -> f64 {
        2.0 * PI * i as f64 / self.nx as f64
    }
    pub fn y(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.ny as f64
    }
    pub fn z(&self, k: usize) -> f64 {
        if k + 1 == self.nz {
            self.kappa
        } else {
            k as f64 * self.dz
        }
    }

    pub(crate) fn kx(&self) -> &[f64] {
        &self.kx
    }
    pub(crate) fn ky(&self) -> &[f64] {
        &self.ky
    }

    pub(crate) fn keeps(&self, i: usize, j: usize) -> bool {
        self.keep_x[i] && self.keep_y[j]
    }

    /// 2-D forward DFT of one horizontal plane, layout `j * nx + i`.
    pub(crate) fn forward(&self, plane: &[f64]) -> Vec<Complex64> {
        let (nx, ny) = (self.nx, self.ny);
        let mut rows: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft_x.process(&mut rows);
        let mut cols = vec![Complex64::new(0.0, 0.0); nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                cols[i * ny + j] = rows[j * nx + i];
            }
        }
        self.fft_y.process(&mut cols);
        for j in 0..ny {
            for i in 0..nx {
                rows[j * nx + i] = cols[i * ny + j];
            }
        }
        rows
    }

    /// Inverse of [`Grid::forward`], keeping the real part.
    pub(crate) fn inverse(&self, spec: Vec<Complex64>, out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        let mut cols = vec![Complex64::new(0.0, 0.0); nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                cols[i * ny + j] = spec[j * nx + i];
            }
        }
        self.ifft_y.process(&mut cols);
        let mut rows = spec;
        for j in 0..ny {
            for i in 0..nx {
                rows[j * nx + i] = cols[i * ny + j];
            }
        }
        self.ifft_x.process(&mut rows);
        let norm = 1.0 / (nx * ny) as f64;
        for (o, c) in out.iter_mut().zip(rows) {
            *o = c.re * norm;
        }
    }
}
