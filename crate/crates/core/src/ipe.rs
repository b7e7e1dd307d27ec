//! Inhomogeneous incompressible primitive equations: the `delta -> 0` limit.
//!
//! The pressure `Pi` is z-independent, so enforcing
//! `div_h(bar(rho^L u^L)) = 0` is one constant-coefficient Poisson solve per
//! projection. Each RK4 stage tendency is projected, which keeps every stage
//! on the constraint and the scheme fourth order.

use std::sync::Arc;

use crate::cpe::{
    conservative_tendency, continuity, stress, velocity_tendency, w_fixed_point, Continuity,
    Scheme, StepControl,
};
use crate::error::{Error, Result};
use crate::fields::spectral::{div_h, grad_h, solve_div_grad};
use crate::fields::{vbar, Field2, Field3, Grid, Planar, Vec3};
use crate::hydrostatics::{BackgroundProfile, Params};

#[derive(Clone, Debug)]
pub struct IpeState {
    pub t: f64,
    pub u_l: Vec3,
    /// Zero-mean multiplier; the pressure gradient of the last step is `grad_h pi`.
    pub pi: Field2,
    pub w_l: Field3,
    pub scheme: Scheme,
    cont: Option<Continuity>,
}

impl IpeState {
    /// Build a state with its diagnosed `w^L`. `u_l` is taken as given; use
    /// [`pressure_project`] first if it may violate the constraint.
    pub fn new(
        t: f64,
        u_l: Vec3,
        pi: Field2,
        b: &BackgroundProfile,
        p: &Params,
        ctl: &StepControl,
    ) -> Result<Self> {
        match ctl.scheme {
            Scheme::Averaged => {
                let w_l = w_fixed_point(&b.xi_l, &u_l, None, p, ctl.w_tol, ctl.w_max_iter)?.w;
                Ok(IpeState {
                    t,
                    u_l,
                    pi,
                    w_l,
                    scheme: Scheme::Averaged,
                    cont: None,
                })
            }
            Scheme::Conservative => {
                let cont = continuity(&b.rho_l, &u_l, None);
                let w_l = cont.flux.zip_map(&b.rho_l, |f, r| f / r);
                Ok(IpeState {
                    t,
                    u_l,
                    pi,
                    w_l,
                    scheme: Scheme::Conservative,
                    cont: Some(cont),
                })
            }
        }
    }

    pub fn rest(b: &BackgroundProfile, p: &Params) -> Result<Self> {
        let g = b.grid();
        let z = Field3::zeros(g);
        Self::new(
            0.0,
            [z.clone(), z],
            Field2::zeros(g),
            b,
            p,
            &StepControl::default(),
        )
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.pi.grid()
    }

    pub fn u_inf(&self) -> f64 {
        self.u_l[0].norm_inf().max(self.u_l[1].norm_inf())
    }

    pub fn w_boundary(&self) -> f64 {
        let nz = self.grid().nz();
        let edge = |k: usize| {
            self.w_l
                .plane(k)
                .iter()
                .fold(0.0_f64, |m, v| m.max(v.abs()))
        };
        edge(0).max(edge(nz - 1))
    }
}

/// Fixed point of the limit `w^L` map; identical bits to
/// [`crate::cpe::diagnose_w`] at `r = 0`.
pub fn diagnose_w_l(u_l: &Vec3, b: &BackgroundProfile, p: &Params) -> Result<Field3> {
    let ctl = StepControl::default();
    Ok(w_fixed_point(&b.xi_l, u_l, None, p, ctl.w_tol, ctl.w_max_iter)?.w)
}

/// `|div_h(bar(rho^L u))|_inf`.
pub fn constraint_residual(u: &Vec3, b: &BackgroundProfile) -> f64 {
    let m = [
        vbar(&b.rho_l.pointwise(&u[0])),
        vbar(&b.rho_l.pointwise(&u[1])),
    ];
    div_h(&m).norm_inf()
}

/// `u_new = u* - dt grad_h Pi` with
/// `div_h grad_h Pi = div_h(bar(rho^L u*)) / (dt bar(rho^L))`.
pub fn pressure_project(u_star: &Vec3, b: &BackgroundProfile, dt: f64) -> (Vec3, Field2) {
    let m = [
        vbar(&b.rho_l.pointwise(&u_star[0])),
        vbar(&b.rho_l.pointwise(&u_star[1])),
    ];
    let rho_bar = vbar(&b.rho_l).mean();
    let source = div_h(&m).scale(1.0 / (dt * rho_bar));
    let pi = solve_div_grad(&source);
    let gp = grad_h(&pi);
    let u_new = [0, 1].map(|c| {
        let plane = gp[c].values();
        let len = plane.len();
        let mut out = u_star[c].clone();
        for (idx, v) in out.values_mut().iter_mut().enumerate() {
            *v -= dt * plane[idx % len];
        }
        out
    });
    (u_new, pi)
}

/// `-u.grad_h u - w^L d_z u - (1/Ro) u^perp + S u / rho^L`, before projection.
pub fn rhs_u_l(s: &IpeState, b: &BackgroundProfile, p: &Params) -> Vec3 {
    rhs_with_stress(s, b, p).0
}

fn rhs_with_stress(s: &IpeState, b: &BackgroundProfile, p: &Params) -> (Vec3, Vec3) {
    let su = stress(&s.u_l, p);
    let du = match &s.cont {
        Some(cont) => conservative_tendency(&s.u_l, &b.rho_l, cont, &su, p.inv_ro(), |_| None),
        None => velocity_tendency(&s.u_l, &s.w_l, &b.rho_l, &su, p.inv_ro(), |_| None),
    };
    (du, su)
}

/// Advective and viscous limits only.
pub fn stable_dt_l(s: &IpeState, b: &BackgroundProfile, p: &Params, ctl: &StepControl) -> f64 {
    let g = s.grid();
    let mut dt = ctl.dt_max;
    let umax = s.u_inf();
    if umax > 0.0 {
        dt = dt.min(ctl.cfl_adv * g.dx() / umax);
    }
    if p.mu > 0.0 {
        dt = dt.min(b.rho_l.min_value() * g.dz() * g.dz() / (4.0 * p.mu));
    }
    dt
}

/// One projected RK4 step at the stable step.
pub fn step_l(
    s: &IpeState,
    b: &BackgroundProfile,
    p: &Params,
    ctl: &StepControl,
) -> Result<IpeState> {
    let dt = stable_dt_l(s, b, p, ctl);
    step_l_with_dt(s, b, p, ctl, dt)
}

pub fn step_l_with_dt(
    s: &IpeState,
    b: &BackgroundProfile,
    p: &Params,
    ctl: &StepControl,
    dt: f64,
) -> Result<IpeState> {
    const B: [f64; 4] = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];
    const C: [f64; 4] = [0.0, 0.5, 0.5, 1.0];
    let mut ks: Vec<Vec3> = Vec::with_capacity(4);
    let mut pi_acc = Field2::zeros(s.grid());
    for i in 0..4 {
        let y = if i == 0 {
            s.clone()
        } else {
            let h = C[i] * dt;
            let prev = &ks[i - 1];
            let u = [0, 1].map(|c| s.u_l[c].zip_map(&prev[c], |a, k| a + h * k));
            IpeState::new(
                s.t + h,
                u,
                s.pi.clone(),
                b,
                p,
                &StepControl {
                    scheme: s.scheme,
                    ..*ctl
                },
            )?
        };
        let (du, _) = rhs_with_stress(&y, b, p);
        let (k, pi) = pressure_project(&du, b, 1.0);
        pi_acc = pi_acc.zip_map(&pi, |a, q| a + B[i] * q);
        ks.push(k);
    }
    let u_star = [0, 1].map(|c| {
        let vals = (0..s.u_l[c].values().len())
            .map(|i| {
                s.u_l[c].values()[i]
                    + dt * (B[0] * ks[0][c].values()[i]
                        + B[1] * ks[1][c].values()[i]
                        + B[2] * ks[2][c].values()[i]
                        + B[3] * ks[3][c].values()[i])
            })
            .collect();
        s.u_l[c].with_values(vals)
    });
    // Removes the roundoff drift of the stage projections.
    let (u_new, correction) = pressure_project(&u_star, b, dt);
    let pi = pi_acc.zip_map(&correction, |a, q| a + q);
    let state = IpeState::new(
        s.t + dt,
        u_new,
        pi,
        b,
        p,
        &StepControl {
            scheme: s.scheme,
            ..*ctl
        },
    )?;
    let u_inf = state.u_inf();
    if !(u_inf <= ctl.u_max) {
        return Err(Error::BlowUp {
            t: state.t,
            u_inf,
            bound: ctl.u_max,
        });
    }
    Ok(state)
}

/// Advance to `t_end`, landing on it exactly.
pub fn advance_l_to(
    s: &IpeState,
    t_end: f64,
    b: &BackgroundProfile,
    p: &Params,
    ctl: &StepControl,
    mut observe: impl FnMut(&IpeState),
) -> Result<IpeState> {
    let mut cur = s.clone();
    while cur.t < t_end - 1e-14 * t_end.max(1.0) {
        let dt = stable_dt_l(&cur, b, p, ctl).min(t_end - cur.t);
        cur = step_l_with_dt(&cur, b, p, ctl, dt)?;
        observe(&cur);
    }
    Ok(cur)
}

/// `(1/2) int rho^L |u^L|^2`.
pub fn kinetic_energy_l(s: &IpeState, b: &BackgroundProfile) -> f64 {
    0.5 * (crate::fields::norms::weighted_sq(&s.u_l[0], &b.rho_l)
        + crate::fields::norms::weighted_sq(&s.u_l[1], &b.rho_l))
}

/// `int S u^L . u^L`, the (non-positive) dissipation rate.
pub fn dissipation_rate_l(s: &IpeState, p: &Params) -> f64 {
    let su = stress(&s.u_l, p);
    crate::fields::norms::inner(&su[0], &s.u_l[0]) + crate::fields::norms::inner(&su[1], &s.u_l[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpe::diagnose_w;

    fn setup(gamma: f64, theta: f64) -> (Arc<Grid>, Params, BackgroundProfile) {
        let g = Grid::new(16, 16, 17, 1.0).unwrap();
        let p = Params {
            gamma,
            theta,
            kappa: 1.0,
            delta: 0.1,
            ro: 1.0,
            mu: 0.05,
            nu: 0.05,
        };
        let b = BackgroundProfile::new(&g, &p).unwrap();
        (g, p, b)
    }

    fn rough_u(g: &Arc<Grid>) -> Vec3 {
        let pi = std::f64::consts::PI;
        [
            Field3::from_fn(g, |x, y, z| {
                x.sin() + 0.5 * (y + 2.0 * x).cos() * (pi * z).cos() + 0.3 * z
            }),
            Field3::from_fn(g, |x, y, z| {
                (x - y).sin() * (1.0 + z) + 0.2 * (2.0 * y).cos()
            }),
        ]
    }

    #[test]
    fn w_l_matches_cpe_path_bitwise() {
        for gamma in [1.4, 2.0] {
            let (g, p, b) = setup(gamma, 0.1);
            let u = rough_u(&g);
            let wl = diagnose_w_l(&u, &b, &p).unwrap();
            let w = diagnose_w(&Field2::zeros(&g), &u, &p).unwrap();
            assert_eq!(wl.values(), w.values());
        }
    }

    #[test]
    fn w_l_examples() {
        let (g, p, b) = setup(2.0, 0.5);
        let u = [Field3::from_fn(&g, |x, _, _| x.sin()), Field3::zeros(&g)];
        let wl = diagnose_w_l(&u, &b, &p).unwrap();
        assert!((wl.at(0, 0, 8) + 1.0 / 12.0).abs() < 1e-12);
        assert_eq!(
            diagnose_w_l(&[Field3::zeros(&g), Field3::zeros(&g)], &b, &p)
                .unwrap()
                .norm_inf(),
            0.0
        );

        let (g, p, b) = setup(1.4, 0.1);
        let u = [
            Field3::from_fn(&g, |_, y, _| y.sin()),
            Field3::from_fn(&g, |x, _, _| x.cos()),
        ];
        assert!(diagnose_w_l(&u, &b, &p).unwrap().norm_inf() < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let (g, _, b) = setup(1.4, 0.1);
        let dt = 0.01;
        let u = [Field3::from_fn(&g, |x, _, _| x.sin()), Field3::zeros(&g)];
        let (un, pi) = pressure_project(&u, &b, dt);
        assert!(un[0].norm_inf() < 1e-12 && un[1].norm_inf() < 1e-12);
        let exact = Field2::from_fn(&g, |x, _| -x.cos() / dt);
        assert!((&pi - &exact).norm_inf() < 1e-10);

        let (un, _) = pressure_project(&rough_u(&g), &b, dt);
        assert!(constraint_residual(&un, &b) < 1e-12);
        let (again, pi2) = pressure_project(&un, &b, dt);
        assert!(pi2.norm_inf() * dt < 1e-12);
        for c in 0..2 {
            assert!((&again[c] - &un[c]).norm_inf() < 1e-12);
        }
    }

    #[test]
    fn tendency_examples() {
        let g = Grid::new(16, 16, 17, 1.0).unwrap();
        let p = Params {
            gamma: 2.0,
            theta: 0.0,
            kappa: 1.0,
            delta: 0.3,
            ro: f64::INFINITY,
            mu: 1.0,
            nu: 0.0,
        };
        let b = BackgroundProfile::new(&g, &p).unwrap();
        for scheme in [Scheme::Conservative, Scheme::Averaged] {
            let ctl = StepControl {
                scheme,
                ..StepControl::default()
            };
            let u = [Field3::from_fn(&g, |x, _, _| x.sin()), Field3::zeros(&g)];
            let s = IpeState::new(0.0, u, Field2::zeros(&g), &b, &p, &ctl).unwrap();
            let du = rhs_u_l(&s, &b, &p);
            let exact = Field3::from_fn(&g, |x, _, _| -x.sin() - 0.5 * (2.0 * x).sin());
            assert!((&du[0] - &exact).norm_inf() < 1e-12);

            let p2 = Params {
                ro: 1.0,
                mu: 0.0,
                ..p
            };
            let u = [Field3::constant(&g, 0.7), Field3::zeros(&g)];
            let s = IpeState::new(0.0, u, Field2::zeros(&g), &b, &p2, &ctl).unwrap();
            let du = rhs_u_l(&s, &b, &p2);
            assert!(du[0].norm_inf() < 1e-14);
            assert!((&du[1] - &Field3::constant(&g, -0.7)).norm_inf() < 1e-14);
        }
    }

    #[test]
    fn constraint_kept_over_many_steps() {
        let (g, p, b) = setup(1.4, 0.1);
        let ctl = StepControl::default();
        let (u0, _) = pressure_project(&rough_u(&g), &b, 1.0);
        let mut s = IpeState::new(0.0, u0, Field2::zeros(&g), &b, &p, &ctl).unwrap();
        let mut worst: f64 = 0.0;
        let e0 = kinetic_energy_l(&s, &b);
        for _ in 0..50 {
            s = step_l(&s, &b, &p, &ctl).unwrap();
            worst = worst.max(constraint_residual(&s.u_l, &b));
            assert!(s.w_boundary() < 1e-10);
        }
        assert!(worst < 1e-10, "{worst}");
        assert!(kinetic_energy_l(&s, &b) < e0);
    }

    #[test]
    fn rest_is_fixed() {
        let (_, p, b) = setup(1.4, 0.1);
        let s = IpeState::rest(&b, &p).unwrap();
        let n = step_l(&s, &b, &p, &StepControl::default()).unwrap();
        assert_eq!(n.u_inf(), 0.0);
        assert_eq!(n.pi.norm_inf(), 0.0);
    }
}
