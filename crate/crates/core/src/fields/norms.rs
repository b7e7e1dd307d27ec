//! Quadratures and Sobolev norms.
//!
//! Every reduction sums each horizontal plane in index order first and then
//! combines planes with the trapezoidal weights, so results are
//! bit-reproducible regardless of how the fields were produced.

use super::field::{assert_same_grid, Planar};
use super::spectral::dh_mixed;
use crate::error::{Error, Result};

/// Derivative families admitted by [`sobolev_norm`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SobolevMode {
    /// All multi-indices `(a, b, c)` with `a + b + c <= k`.
    Full,
    /// Horizontal multi-indices only (`c = 0`).
    HorizontalOnly,
}

fn reduce<F: Planar>(f: &F, point: impl Fn(usize, usize) -> f64) -> f64 {
    let n = f.grid().plane_len();
    let mut total = 0.0;
    for k in 0..f.n_planes() {
        let mut s = 0.0;
        for p in 0..n {
            s += point(k, k * n + p);
        }
        total += f.plane_weight(k) * s;
    }
    total * f.grid().cell_area()
}

/// `int f` over the domain of `f`.
pub fn integrate<F: Planar>(f: &F) -> f64 {
    let v = f.values();
    reduce(f, |_, idx| v[idx])
}

/// `int f g`.
pub fn inner<F: Planar>(f: &F, g: &F) -> f64 {
    assert_same_grid(f.grid(), g.grid());
    let (a, b) = (f.values(), g.values());
    reduce(f, |_, idx| a[idx] * b[idx])
}

/// `int weight f^2` without positivity checks.
pub fn weighted_sq<F: Planar>(f: &F, weight: &F) -> f64 {
    assert_same_grid(f.grid(), weight.grid());
    let (a, w) = (f.values(), weight.values());
    reduce(f, |_, idx| w[idx] * a[idx] * a[idx])
}

pub fn l2_sq<F: Planar>(f: &F) -> f64 {
    let a = f.values();
    reduce(f, |_, idx| a[idx] * a[idx])
}

/// `(int weight f^2)^{1/2}`; `weight` must be strictly positive.
pub fn l2_norm<F: Planar>(f: &F, weight: Option<&F>) -> Result<f64> {
    match weight {
        None => Ok(l2_sq(f).sqrt()),
        Some(w) => {
            let min = w.min_value();
            if !(min > 0.0) {
                return Err(Error::NegativeWeight { min });
            }
            Ok(weighted_sq(f, w).sqrt())
        }
    }
}

/// Unweighted L2 norm.
pub fn norm<F: Planar>(f: &F) -> f64 {
    l2_sq(f).sqrt()
}

/// L2 norm of a horizontal vector field.
pub fn norm_vec<F: Planar>(v: &[F; 2]) -> f64 {
    (l2_sq(&v[0]) + l2_sq(&v[1])).sqrt()
}

/// Vertical derivative of arbitrary order built from the stencils of
/// [`super::vertical::dz`].
fn z_derivative<F: Planar>(f: &F, c: usize) -> Option<F> {
    match c {
        0 => Some(f.clone()),
        1 | 2 => f.z_derivative(c),
        _ => f.z_derivative(2).and_then(|g| z_derivative(&g, c - 2)),
    }
}

/// Sum of `||d^alpha f||^2` over multi-indices with `|alpha| <= k`.
pub fn sobolev_sq<F: Planar>(f: &F, k: u32, mode: SobolevMode) -> f64 {
    assert!(k <= 3, "Sobolev order at most 3");
    let has_z = f.z_derivative(1).is_some();
    let mut total = 0.0;
    for order in 0..=k {
        for a in 0..=order {
            for b in 0..=(order - a) {
                let c = (order - a - b) as usize;
                if c > 0 && (mode == SobolevMode::HorizontalOnly || !has_z) {
                    continue;
                }
                let h = dh_mixed(f, a, b);
                let d = z_derivative(&h, c).expect("z derivative exists for 3-D fields");
                total += l2_sq(&d);
            }
        }
    }
    total
}

/// `||f||_{H^k}`, or its horizontal-derivative part.
pub fn sobolev_norm<F: Planar>(f: &F, k: u32, mode: SobolevMode) -> f64 {
    sobolev_sq(f, k, mode).sqrt()
}

/// `sum_{|alpha| = k} ||d_h^alpha f||^2` (pure horizontal derivatives of order exactly `k`).
pub fn horizontal_seminorm_sq<F: Planar>(f: &F, k: u32) -> f64 {
    let mut total = 0.0;
    for a in 0..=k {
        total += l2_sq(&dh_mixed(f, a, k - a));
    }
    total
}

pub fn sobolev_norm_vec<F: Planar>(v: &[F; 2], k: u32, mode: SobolevMode) -> f64 {
    (sobolev_sq(&v[0], k, mode) + sobolev_sq(&v[1], k, mode)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::field::{Field2, Field3};
    use crate::fields::grid::Grid;
    use crate::fields::vertical::{vbar, vtilde};
    use std::f64::consts::PI;

    #[test]
    fn measure_of_domain() {
        let g = Grid::new(8, 8, 9, 1.0).unwrap();
        let one = Field3::constant(&g, 1.0);
        assert!((l2_norm(&one, None).unwrap() - 2.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn norm_of_sine() {
        let g = Grid::new(16, 16, 9, 1.0).unwrap();
        let f = Field3::from_fn(&g, |x, _, _| x.sin());
        assert!((norm(&f) - PI * 2f64.sqrt()).abs() < 1e-13);
        let f2 = Field2::from_fn(&g, |x, _| x.sin());
        assert!((norm(&f2) - PI * 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn weighted_by_linear_profile() {
        // Trapezoid is exact on the linear background of gamma = 2.
        let g = Grid::new(8, 8, 17, 1.0).unwrap();
        let one = Field3::constant(&g, 1.0);
        let w = Field3::from_fn(&g, |_, _, z| 1.0 - 0.5 * z);
        let n = l2_norm(&one, Some(&w)).unwrap();
        assert!((n - 2.0 * PI * 0.75f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn rejects_nonpositive_weight() {
        let g = Grid::new(8, 8, 9, 1.0).unwrap();
        let one = Field3::constant(&g, 1.0);
        let w = Field3::from_fn(&g, |_, _, z| z);
        assert!(matches!(
            l2_norm(&one, Some(&w)),
            Err(Error::NegativeWeight { .. })
        ));
    }

    #[test]
    fn sobolev_of_sine() {
        let g = Grid::new(16, 16, 9, 1.0).unwrap();
        let f = Field3::from_fn(&g, |x, _, _| x.sin());
        assert!((sobolev_norm(&f, 1, SobolevMode::Full) - 2.0 * PI).abs() < 1e-12);
        let c = Field3::constant(&g, 2.0);
        for k in 0..=3 {
            assert!((sobolev_norm(&c, k, SobolevMode::Full) - norm(&c)).abs() < 1e-10);
        }
        let r = Field2::from_fn(&g, |x, _| x.sin());
        let h3 = sobolev_norm(&r, 3, SobolevMode::Full);
        assert!((h3 - 2.0 * PI * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pythagoras_for_bar_and_tilde() {
        let g = Grid::new(8, 8, 17, 1.3).unwrap();
        let f = Field3::from_fn(&g, |x, y, z| (x + z).sin() * (2.0 * y).cos() + z * z * z);
        let lhs = g.kappa() * l2_sq(&vbar(&f)) + l2_sq(&vtilde(&f));
        let rhs = l2_sq(&f);
        assert!((lhs - rhs).abs() <= 1e-12 * rhs);
    }

    #[test]
    fn parseval() {
        let g = Grid::new(8, 10, 9, 1.0).unwrap();
        let f = Field2::from_fn(&g, |x, y| (x + 2.0 * y).cos() + 0.3 * (3.0 * x).sin() + 0.1);
        let spec = g.forward(f.values());
        let s: f64 = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / g.plane_len() as f64;
        let spectral = (s * g.cell_area()).sqrt();
        assert!((spectral - norm(&f)).abs() <= 1e-12 * norm(&f));
    }
}
