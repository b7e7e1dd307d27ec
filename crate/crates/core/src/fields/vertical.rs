//! Vertical calculus on uniform nodes with trapezoidal quadrature.

use super::field::{Field2, Field3, Planar};

/// Stencil family used at the plates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Closure {
    /// One-sided fourth-order stencils, no boundary assumption.
    OneSided,
    /// Even reflection `f_{-m} = f_m` about each plate (homogeneous Neumann).
    Even,
}

fn column_op(f: &Field3, order: usize, closure: Closure) -> Field3 {
    assert!(order == 1 || order == 2, "dz supports orders 1 and 2");
    let g = f.grid();
    let nz = g.nz();
    let n = g.plane_len();
    let h = g.dz();
    let v = f.values();
    let mut out = vec![0.0; v.len()];
    let at = |k: isize, p: usize| -> f64 {
        // Reflection index for the even closure.
        let k = if k < 0 {
            -k
        } else if k >= nz as isize {
            2 * (nz as isize - 1) - k
        } else {
            k
        };
        v[k as usize * n + p]
    };
    for k in 0..nz {
        let near_bottom = k < 2;
        let near_top = k + 2 >= nz;
        for p in 0..n {
            let ki = k as isize;
            let val = if closure == Closure::Even || !(near_bottom || near_top) {
                let (fm2, fm1, f0, fp1, fp2) = (
                    at(ki - 2, p),
                    at(ki - 1, p),
                    at(ki, p),
                    at(ki + 1, p),
                    at(ki + 2, p),
                );
                if order == 1 {
                    (8.0 * (fp1 - fm1) + (fm2 - fp2)) / (12.0 * h)
                } else {
                    (-fm2 + 16.0 * fm1 - 30.0 * f0 + 16.0 * fp1 - fp2) / (12.0 * h * h)
                }
            } else {
                // One-sided closures, mirrored at the top with the sign of
                // the first derivative flipped.
                let (base, dir, kk) = if near_bottom {
                    (0usize, 1.0, k)
                } else {
                    (nz - 1, -1.0, nz - 1 - k)
                };
                let s = |m: usize| -> f64 {
                    let idx = if dir > 0.0 { base + m } else { base - m };
                    v[idx * n + p]
                };
                if order == 1 {
                    let d = if kk == 0 {
                        -25.0 * s(0) + 48.0 * s(1) - 36.0 * s(2) + 16.0 * s(3) - 3.0 * s(4)
                    } else {
                        -3.0 * s(0) - 10.0 * s(1) + 18.0 * s(2) - 6.0 * s(3) + s(4)
                    };
                    dir * d / (12.0 * h)
                } else {
                    let d = if kk == 0 {
                        45.0 * s(0) - 154.0 * s(1) + 214.0 * s(2) - 156.0 * s(3) + 61.0 * s(4)
                            - 10.0 * s(5)
                    } else {
                        10.0 * s(0) - 15.0 * s(1) - 4.0 * s(2) + 14.0 * s(3) - 6.0 * s(4) + s(5)
                    };
                    d / (12.0 * h * h)
                }
            };
            out[k * n + p] = val;
        }
    }
    f.with_values(out)
}

/// Fourth-order vertical derivative with one-sided closures at the plates.
pub fn dz(f: &Field3, order: usize) -> Field3 {
    column_op(f, order, Closure::OneSided)
}

/// Fourth-order vertical derivative of a field obeying `d_z f = 0` at both
/// plates, using even ghost reflection. The first derivative vanishes at the
/// plates exactly.
pub fn dz_even(f: &Field3, order: usize) -> Field3 {
    column_op(f, order, Closure::Even)
}

/// Vertical average `(1/kappa) int_0^kappa f dz` with trapezoidal weights.
pub fn vbar(f: &Field3) -> Field2 {
    let g = f.grid();
    let n = g.plane_len();
    let mut acc = vec![0.0; n];
    for (k, w) in g.weights().iter().enumerate() {
        for (a, v) in acc.iter_mut().zip(f.plane(k)) {
            *a += w * v;
        }
    }
    let inv = 1.0 / g.kappa();
    Field2::from_values(g, acc.into_iter().map(|a| a * inv).collect())
        .expect("plane length matches grid")
}

/// Fluctuation `f - vbar(f)`.
pub fn vtilde(f: &Field3) -> Field3 {
    f - &vbar(f).lift()
}

/// Cumulative trapezoidal integral `int_0^z f`, zero on the bottom plate.
pub fn vint(f: &Field3) -> Field3 {
    let g = f.grid();
    let n = g.plane_len();
    let h = g.dz();
    let v = f.values();
    let mut out = vec![0.0; v.len()];
    for k in 1..g.nz() {
        for p in 0..n {
            out[k * n + p] = out[(k - 1) * n + p] + 0.5 * h * (v[(k - 1) * n + p] + v[k * n + p]);
        }
    }
    f.with_values(out)
}

/// Second-order vertical derivative that is summation-by-parts with respect
/// to the trapezoidal weights: `sum W f Dg + sum W g Df = f_N g_N - f_0 g_0`.
pub fn dz_sbp(f: &Field3) -> Field3 {
    let g = f.grid();
    let nz = g.nz();
    let n = g.plane_len();
    let h = g.dz();
    let v = f.values();
    let mut out = vec![0.0; v.len()];
    for p in 0..n {
        out[p] = (v[n + p] - v[p]) / h;
        out[(nz - 1) * n + p] = (v[(nz - 1) * n + p] - v[(nz - 2) * n + p]) / h;
    }
    for k in 1..nz - 1 {
        for p in 0..n {
            out[k * n + p] = (v[(k + 1) * n + p] - v[(k - 1) * n + p]) / (2.0 * h);
        }
    }
    f.with_values(out)
}

/// Cumulative trapezoidal integral with an end correction that makes the
/// discrete Fubini identity exact:
/// `sum_k W_k (int_0^{z_k} f) = sum_j W_j (kappa - z_j) f_j`.
///
/// The correction is `O(dz^2)`, spread over a parabolic profile vanishing on
/// both plates, so the value on the top plate is still `sum_j W_j f_j`.
pub fn vint_balanced(f: &Field3) -> Field3 {
    let g = f.grid();
    let nz = g.nz();
    let n = g.plane_len();
    let h = g.dz();
    let kappa = g.kappa();
    let shape: Vec<f64> = (0..nz).map(|k| g.z(k) * (kappa - g.z(k))).collect();
    let norm: f64 = shape.iter().zip(g.weights()).map(|(s, w)| s * w).sum();
    let mut out = vint(f).into_values();
    let v = f.values();
    for p in 0..n {
        let jump = 0.25 * h * h * (v[(nz - 1) * n + p] - v[p]);
        for k in 1..nz - 1 {
            out[k * n + p] -= shape[k] / norm * jump;
        }
    }
    f.with_values(out)
}
