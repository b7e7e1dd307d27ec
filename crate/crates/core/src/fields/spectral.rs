//! Horizontal Fourier calculus on `T^2`.
//!
//! All operators act plane by plane. First-order (odd) derivatives drop the
//! Nyquist mode, even orders keep it with symbol `-k^2`; this keeps the
//! discrete gradient and divergence mutually adjoint so projections are
//! exact on the grid.

use rustfft::num_complex::Complex64;

use super::field::{Field2, Field3, Planar, Vec2, Vec3};
use super::grid::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X1,
    X2,
}

fn i_pow(order: u32) -> Complex64 {
    match order % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Fourier symbol of `d^order/dx^order` at index `idx` of an `n`-point axis.
pub(crate) fn derivative_symbol(k: f64, n: usize, idx: usize, order: u32) -> Complex64 {
    if order == 0 {
        return Complex64::new(1.0, 0.0);
    }
    if order % 2 == 1 && idx == n / 2 {
        return Complex64::new(0.0, 0.0);
    }
    i_pow(order) * k.powi(order as i32)
}

/// Apply a Fourier multiplier `symbol(i, j)` to every plane of `f`.
pub fn apply_symbol<F: Planar>(f: &F, symbol: impl Fn(usize, usize) -> Complex64) -> F {
    let g = f.grid().clone();
    let (nx, ny, n) = (g.nx(), g.ny(), g.plane_len());
    let mut out = vec![0.0; f.values().len()];
    for k in 0..f.n_planes() {
        let mut spec = g.forward(f.plane(k));
        for j in 0..ny {
            for i in 0..nx {
                spec[j * nx + i] *= symbol(i, j);
            }
        }
        g.inverse(spec, &mut out[k * n..(k + 1) * n]);
    }
    f.with_values(out)
}

fn mixed_symbol(g: &Grid, ax: u32, ay: u32) -> impl Fn(usize, usize) -> Complex64 + '_ {
    move |i, j| {
        derivative_symbol(g.kx()[i], g.nx(), i, ax) * derivative_symbol(g.ky()[j], g.ny(), j, ay)
    }
}

/// Horizontal derivative `d^order / dx_axis^order`.
pub fn dh<F: Planar>(f: &F, axis: Axis, order: u32) -> F {
    match axis {
        Axis::X1 => dh_mixed(f, order, 0),
        Axis::X2 => dh_mixed(f, 0, order),
    }
}

/// Mixed horizontal derivative `d^{ax}_{x1} d^{ay}_{x2} f` in one transform.
pub fn dh_mixed<F: Planar>(f: &F, ax: u32, ay: u32) -> F {
    if ax == 0 && ay == 0 {
        return f.clone();
    }
    let g = f.grid().clone();
    apply_symbol(f, mixed_symbol(&g, ax, ay))
}

pub fn grad_h<F: Planar>(f: &F) -> [F; 2] {
    [dh(f, Axis::X1, 1), dh(f, Axis::X2, 1)]
}

pub fn div_h<F: Planar>(v: &[F; 2]) -> F {
    let g = v[0].grid().clone();
    let (nx, ny, n) = (g.nx(), g.ny(), g.plane_len());
    let mut out = vec![0.0; v[0].values().len()];
    for k in 0..v[0].n_planes() {
        let a = g.forward(v[0].plane(k));
        let b = g.forward(v[1].plane(k));
        let mut spec = a;
        for j in 0..ny {
            for i in 0..nx {
                let sx = derivative_symbol(g.kx()[i], nx, i, 1);
                let sy = derivative_symbol(g.ky()[j], ny, j, 1);
                spec[j * nx + i] = sx * spec[j * nx + i] + sy * b[j * nx + i];
            }
        }
        g.inverse(spec, &mut out[k * n..(k + 1) * n]);
    }
    v[0].with_values(out)
}

/// `curl_h u = d_1 u_2 - d_2 u_1`.
pub fn curl_h<F: Planar>(v: &[F; 2]) -> F {
    dh(&v[1], Axis::X1, 1).zip_map(&dh(&v[0], Axis::X2, 1), |a, b| a - b)
}

pub fn laplacian_h<F: Planar>(f: &F) -> F {
    let g = f.grid().clone();
    apply_symbol(f, |i, j| {
        derivative_symbol(g.kx()[i], g.nx(), i, 2) + derivative_symbol(g.ky()[j], g.ny(), j, 2)
    })
}

/// Zero-mean solution of `div_h grad_h phi = f`, built from the same
/// first-derivative symbols as [`grad_h`] and [`div_h`] so that
/// `div_h grad_h` inverts it exactly on the modes it does not annihilate.
pub fn solve_div_grad<F: Planar>(f: &F) -> F {
    let g = f.grid().clone();
    apply_symbol(f, |i, j| {
        let sx = derivative_symbol(g.kx()[i], g.nx(), i, 1);
        let sy = derivative_symbol(g.ky()[j], g.ny(), j, 1);
        let s = sx * sx + sy * sy;
        if s.norm() == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            1.0 / s
        }
    })
}

/// Zero every horizontal mode outside the retained band.
pub fn dealias<F: Planar>(f: &F) -> F {
    let g = f.grid().clone();
    apply_symbol(f, |i, j| {
        if g.keeps(i, j) {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Pointwise product with modes above the dealiasing cutoff removed.
pub fn dealias_product<F: Planar>(f: &F, g: &F) -> F {
    dealias(&f.pointwise(g))
}

/// Lift-free product of a z-independent factor with a 3-D field.
pub fn dealias_product_lifted(r: &Field2, f: &Field3) -> Field3 {
    dealias_product(&r.lift(), f)
}

/// `a . b` for two horizontal vectors, dealiased.
pub fn dot_dealiased<F: Planar>(a: &[F; 2], b: &[F; 2]) -> F {
    dealias(
        &a[0]
            .pointwise(&b[0])
            .zip_map(&a[1].pointwise(&b[1]), |p, q| p + q),
    )
}

/// Horizontal advection `(a . grad_h) f`, dealiased.
pub fn advect_h<F: Planar>(a: &[F; 2], f: &F) -> F {
    let g = grad_h(f);
    dot_dealiased(a, &g)
}

/// Rotate by +90 degrees: `u^perp = (-u_2, u_1)`.
pub fn perp<F: Planar>(v: &[F; 2]) -> [F; 2] {
    [v[1].scale(-1.0), v[0].clone()]
}

pub fn vec3_zeros(g: &std::sync::Arc<Grid>) -> Vec3 {
    [Field3::zeros(g), Field3::zeros(g)]
}

pub fn vec2_zeros(g: &std::sync::Arc<Grid>) -> Vec2 {
    [Field2::zeros(g), Field2::zeros(g)]
}
