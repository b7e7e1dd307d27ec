//! Compressible primitive equations in the `(r, u)` formulation.
//!
//! Two semi-discretizations share the state and the RK4 driver:
//!
//! * [`Scheme::Conservative`] (default): `r` follows the trapezoid-weighted
//!   column integral of the continuity equation, `rho w` is the discrete
//!   mass flux, and advection is written in skew-symmetric form with a
//!   summation-by-parts vertical derivative. The energy balance and the
//!   weighted-mass balance then hold exactly before time discretization.
//! * [`Scheme::Averaged`]: `r` follows the vertically averaged density
//!   equation and `w` is the fixed point of the integrated continuity
//!   equation, with 2/3-dealiased advective products. Both balances carry
//!   an `O(dz^2)` defect for `gamma != 2`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::norms::{inner, integrate, norm};
use crate::fields::spectral::{
    advect_h, dealias, dealias_product, div_h, dot_dealiased, grad_h, laplacian_h,
};
use crate::fields::{
    dz_even, dz_sbp, vbar, vint, vint_balanced, vtilde, Field2, Field3, Grid, Planar, Vec2, Vec3,
};
use crate::hydrostatics::{relative_entropy, rho_from_xi, xi_of, BackgroundProfile, Params};

/// Largest tolerated `|w|` on the plates after a step.
pub const W_BOUNDARY_TOL: f64 = 1e-10;

/// Semi-discretization used by the solvers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Conservative,
    Averaged,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepControl {
    pub scheme: Scheme,
    pub cfl_adv: f64,
    pub cfl_ac: f64,
    pub dt_max: f64,
    pub w_tol: f64,
    pub w_max_iter: usize,
    /// `|u|_inf` beyond which a run is declared blown up.
    pub u_max: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            scheme: Scheme::Conservative,
            cfl_adv: 0.4,
            cfl_ac: 0.4,
            dt_max: 0.01,
            w_tol: 1e-12,
            w_max_iter: 60,
            u_max: 1e6,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        let ok = self.cfl_adv > 0.0
            && self.cfl_ac > 0.0
            && self.dt_max > 0.0
            && self.w_tol > 0.0
            && self.w_max_iter > 0
            && self.u_max > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "step control entries must be positive: {self:?}"
            )))
        }
    }
}

/// Result of the vertical-velocity fixed point.
#[derive(Clone, Debug)]
pub struct WSolve {
    pub w: Field3,
    /// Number of map evaluations.
    pub iterations: usize,
    /// Largest observed ratio of successive L2 increments (0 for a single pass).
    pub contraction: f64,
    /// Sup-norm of the last increment.
    pub residual: f64,
}

/// Fixed point of
/// `w = -(1/xi) int_0^z (div_h(~(xi u)) - c_r ~u . grad_h r) - c_w/xi int_0^z ~w`,
/// with `c_r = delta (gamma-2)/(gamma-1)` and `c_w = (gamma-2) theta/(gamma-1)`.
///
/// The limit system calls this with `grad_r = None`; with `r = 0` the two
/// paths produce identical bits.
pub(crate) fn w_fixed_point(
    xi: &Field3,
    u: &Vec3,
    grad_r: Option<&Vec2>,
    p: &Params,
    tol: f64,
    max_iter: usize,
) -> Result<WSolve> {
    let xu = [dealias_product(xi, &u[0]), dealias_product(xi, &u[1])];
    let mut source = div_h(&[vtilde(&xu[0]), vtilde(&xu[1])]);
    if let Some(gr) = grad_r {
        let c_r = p.delta * (p.gamma - 2.0) / (p.gamma - 1.0);
        let ut = [vtilde(&u[0]), vtilde(&u[1])];
        let lifted = [gr[0].lift(), gr[1].lift()];
        let adv = dot_dealiased(&ut, &lifted);
        source = source.zip_map(&adv, |s, a| s - c_r * a);
    }
    let a = vint(&source);
    let c_w = (p.gamma - 2.0) * p.theta / (p.gamma - 1.0);
    let apply = |w: &Field3| -> Field3 {
        if c_w == 0.0 {
            a.zip_map(xi, |av, x| -av / x)
        } else {
            let b = vint(&vtilde(w));
            let vals = a
                .values()
                .iter()
                .zip(b.values())
                .zip(xi.values())
                .map(|((&av, &bv), &x)| -(av + c_w * bv) / x)
                .collect();
            a.with_values(vals)
        }
    };

    let mut w = apply(&Field3::zeros(xi.grid()));
    if c_w == 0.0 {
        return Ok(WSolve {
            w,
            iterations: 1,
            contraction: 0.0,
            residual: 0.0,
        });
    }
    let mut contraction: f64 = 0.0;
    let mut prev_inc = norm(&w);
    let mut residual = w.norm_inf();
    for it in 2..=max_iter {
        let next = apply(&w);
        let diff = &next - &w;
        residual = diff.norm_inf();
        let inc = norm(&diff);
        // Ratios in the roundoff regime carry no information.
        if prev_inc > 1e-13 * (1.0 + norm(&next)) {
            contraction = contraction.max(inc / prev_inc);
        }
        prev_inc = inc;
        w = next;
        if residual <= tol {
            return Ok(WSolve {
                w,
                iterations: it,
                contraction,
                residual,
            });
        }
    }
    Err(Error::NoContraction {
        iterations: max_iter,
        residual,
    })
}

/// Discrete continuity data of the conservative scheme.
#[derive(Clone, Debug)]
pub(crate) struct Continuity {
    /// `rho u`
    pub m: Vec3,
    /// `d_t rho`, zero for the limit system.
    pub rho_t: Option<Field3>,
    /// `rho w = -int_0^z (d_t rho + div_h(rho u))`.
    pub flux: Field3,
}

pub(crate) fn continuity(rho: &Field3, u: &Vec3, rho_t: Option<Field3>) -> Continuity {
    let m = [rho.pointwise(&u[0]), rho.pointwise(&u[1])];
    let mut source = div_h(&m);
    if let Some(rt) = &rho_t {
        source = source.zip_map(rt, |a, b| a + b);
    }
    let flux = -vint_balanced(&source);
    Continuity { m, rho_t, flux }
}

/// Column-mass tendency
/// `r_t = -div_h(bar(rho u)) / (delta/(gamma-1) bar(rho/xi))`,
/// i.e. the trapezoid-weighted vertical integral of `rho_t + div_h(rho u) = -d_z(rho w)`.
pub fn column_mass_rt(xi: &Field3, rho: &Field3, u: &Vec3, p: &Params) -> Field2 {
    let m = [vbar(&rho.pointwise(&u[0])), vbar(&rho.pointwise(&u[1]))];
    let div = div_h(&m);
    let a_delta = p.delta / (p.gamma - 1.0);
    let dens = vbar(&rho.zip_map(xi, |r, x| r / x));
    div.zip_map(&dens, |d, q| -d / (a_delta * q))
}

/// Prognostic pair `(r, u)` with the diagnosed `xi`, `rho`, `w` and the
/// density tendency of the active scheme.
#[derive(Clone, Debug)]
pub struct CpeState {
    pub t: f64,
    pub r: Field2,
    pub u: Vec3,
    pub xi: Field3,
    pub rho: Field3,
    pub w: Field3,
    pub drdt: Field2,
    pub w_iterations: usize,
    pub w_contraction: f64,
    pub scheme: Scheme,
    pub(crate) cont: Option<Continuity>,
}

impl CpeState {
    /// Build a state and its diagnostics.
    pub fn new(t: f64, r: Field2, u: Vec3, p: &Params, ctl: &StepControl) -> Result<Self> {
        let xi = xi_of(&r, p)?;
        let rho = rho_from_xi(&xi, p.gamma)?;
        match ctl.scheme {
            Scheme::Averaged => {
                let gr = grad_h(&r);
                let ws = w_fixed_point(&xi, &u, Some(&gr), p, ctl.w_tol, ctl.w_max_iter)?;
                let drdt = averaged_rt(&xi, &u, &ws.w, &r, p);
                Ok(CpeState {
                    t,
                    r,
                    u,
                    xi,
                    rho,
                    w: ws.w,
                    drdt,
                    w_iterations: ws.iterations,
                    w_contraction: ws.contraction,
                    scheme: Scheme::Averaged,
                    cont: None,
                })
            }
            Scheme::Conservative => {
                let drdt = column_mass_rt(&xi, &rho, &u, p);
                let a_delta = p.delta / (p.gamma - 1.0);
                let factor = rho.zip_map(&xi, |r, x| a_delta * r / x);
                let rt3 = drdt.lift();
                let rho_t = factor.pointwise(&rt3);
                let cont = continuity(&rho, &u, Some(rho_t));
                let w = cont.flux.zip_map(&rho, |f, r| f / r);
                Ok(CpeState {
                    t,
                    r,
                    u,
                    xi,
                    rho,
                    w,
                    drdt,
                    w_iterations: 1,
                    w_contraction: 0.0,
                    scheme: Scheme::Conservative,
                    cont: Some(cont),
                })
            }
        }
    }

    pub fn rest(grid: &Arc<Grid>, p: &Params) -> Result<Self> {
        let z = Field3::zeros(grid);
        Self::new(
            0.0,
            Field2::zeros(grid),
            [z.clone(), z],
            p,
            &StepControl::default(),
        )
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.r.grid()
    }

    pub fn u_inf(&self) -> f64 {
        self.u[0].norm_inf().max(self.u[1].norm_inf())
    }

    /// Largest `|w|` on the two plates.
    pub fn w_boundary(&self) -> f64 {
        let nz = self.grid().nz();
        let top = self
            .w
            .plane(nz - 1)
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        let bottom = self.w.plane(0).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        top.max(bottom)
    }
}

/// Diagnose `w` for `(r, u)` with the default iteration control.
pub fn diagnose_w(r: &Field2, u: &Vec3, p: &Params) -> Result<Field3> {
    Ok(solve_w(r, u, p, &StepControl::default())?.w)
}

/// Diagnose `w` and report the iteration history.
pub fn solve_w(r: &Field2, u: &Vec3, p: &Params, ctl: &StepControl) -> Result<WSolve> {
    let xi = xi_of(r, p)?;
    w_fixed_point(&xi, u, Some(&grad_h(r)), p, ctl.w_tol, ctl.w_max_iter)
}

/// `S u = mu lap_h u + mu d_z^2 u + nu grad_h div_h u`, with `d_z u = 0` on the plates.
pub fn stress(u: &Vec3, p: &Params) -> Vec3 {
    let gd = grad_h(&div_h(u));
    let one = |c: usize| {
        let lap = laplacian_h(&u[c]);
        let uzz = dz_even(&u[c], 2);
        let vals = lap
            .values()
            .iter()
            .zip(uzz.values())
            .zip(gd[c].values())
            .map(|((&a, &b), &g)| p.mu * (a + b) + p.nu * g)
            .collect();
        lap.with_values(vals)
    };
    [one(0), one(1)]
}

/// Tendency of the averaged density equation,
/// `-(gamma-1)/delta div_h(bar(xi u)) + (gamma-2) bar(u) . grad_h r - (gamma-2) theta/delta bar(w)`.
pub fn averaged_rt(xi: &Field3, u: &Vec3, w: &Field3, r: &Field2, p: &Params) -> Field2 {
    let g = p.gamma;
    let xu = [
        vbar(&dealias_product(xi, &u[0])),
        vbar(&dealias_product(xi, &u[1])),
    ];
    let flux = div_h(&xu);
    let mut out = flux.scale(-(g - 1.0) / p.delta);
    if g != 2.0 {
        let ubar = [vbar(&u[0]), vbar(&u[1])];
        let adv = dot_dealiased(&ubar, &grad_h(r));
        let wbar = vbar(w);
        let c_w = (g - 2.0) * p.theta / p.delta;
        out = out
            .zip_map(&adv, |o, a| o + (g - 2.0) * a)
            .zip_map(&wbar, |o, wb| o - c_w * wb);
    }
    out
}

/// Density tendency of the state's scheme. Both schemes reduce to
/// `-(1/delta) div_h(bar(xi u))` for `gamma = 2`.
pub fn rhs_r(s: &CpeState, _p: &Params) -> Field2 {
    s.drdt.clone()
}

/// Velocity tendency together with `S u`, which the energy budget reuses.
pub struct VelocityTendency {
    pub du: Vec3,
    pub su: Vec3,
}

pub fn rhs_u_with_stress(s: &CpeState, p: &Params) -> VelocityTendency {
    let su = stress(&s.u, p);
    let gr = grad_h(&s.r);
    let c_p = 1.0 / ((p.gamma - 1.0) * p.delta);
    let pressure = |c: usize| Some((&gr[c], c_p));
    let du = match &s.cont {
        Some(cont) => conservative_tendency(&s.u, &s.rho, cont, &su, p.inv_ro(), pressure),
        None => velocity_tendency(&s.u, &s.w, &s.rho, &su, p.inv_ro(), pressure),
    };
    VelocityTendency { du, su }
}

/// `-u.grad_h u - w d_z u - (1/Ro) u^perp - grad_h r/((gamma-1) delta) + S u / rho`.
pub fn rhs_u(s: &CpeState, p: &Params) -> Vec3 {
    rhs_u_with_stress(s, p).du
}

/// Momentum tendency of the conservative scheme,
/// `rho u_t = -1/2 [div_h(rho u u) + rho u.grad_h u] - 1/2 [D(F u) + F D u] - 1/2 u rho_t + ...`
/// with `F = rho w` and `D` the summation-by-parts vertical derivative.
pub(crate) fn conservative_tendency<'a>(
    u: &Vec3,
    rho: &Field3,
    cont: &Continuity,
    su: &Vec3,
    inv_ro: f64,
    pressure: impl Fn(usize) -> Option<(&'a Field2, f64)>,
) -> Vec3 {
    let m = &cont.m;
    let f = &cont.flux;
    let one = |c: usize| -> Field3 {
        let uc = &u[c];
        let flux_div = div_h(&[m[0].pointwise(uc), m[1].pointwise(uc)]);
        let gu = grad_h(uc);
        let vert_cons = dz_sbp(&f.pointwise(uc));
        let duz = dz_sbp(uc);
        let (perp, sign) = if c == 0 { (&u[1], -1.0) } else { (&u[0], 1.0) };
        let n = rho.values().len();
        let mut out = Vec::with_capacity(n);
        for idx in 0..n {
            let mut adv = flux_div.values()[idx]
                + m[0].values()[idx] * gu[0].values()[idx]
                + m[1].values()[idx] * gu[1].values()[idx]
                + vert_cons.values()[idx]
                + f.values()[idx] * duz.values()[idx];
            if let Some(rt) = &cont.rho_t {
                adv += uc.values()[idx] * rt.values()[idx];
            }
            out.push(
                (su[c].values()[idx] - 0.5 * adv) / rho.values()[idx]
                    - inv_ro * sign * perp.values()[idx],
            );
        }
        let mut fc = rho.with_values(out);
        if let Some((g, coef)) = pressure(c) {
            let plane = g.values();
            let len = plane.len();
            for (idx, v) in fc.values_mut().iter_mut().enumerate() {
                *v -= coef * plane[idx % len];
            }
        }
        fc
    };
    [one(0), one(1)]
}

/// Shared momentum tendency; `pressure(c)` supplies an optional
/// z-independent gradient component and its coefficient.
pub(crate) fn velocity_tendency<'a>(
    u: &Vec3,
    w: &Field3,
    rho: &Field3,
    su: &Vec3,
    inv_ro: f64,
    pressure: impl Fn(usize) -> Option<(&'a Field2, f64)>,
) -> Vec3 {
    let one = |c: usize| -> Field3 {
        let adv_h = advect_h(u, &u[c]);
        let adv_z = dealias_product(w, &dz_even(&u[c], 1));
        // u^perp = (-u_2, u_1)
        let (perp, sign) = if c == 0 { (&u[1], -1.0) } else { (&u[0], 1.0) };
        let n = rho.values().len();
        let mut out = Vec::with_capacity(n);
        for idx in 0..n {
            out.push(
                -adv_h.values()[idx] - adv_z.values()[idx] - inv_ro * sign * perp.values()[idx]
                    + su[c].values()[idx] / rho.values()[idx],
            );
        }
        let mut f = rho.with_values(out);
        if let Some((g, coef)) = pressure(c) {
            let plane = g.values();
            let len = plane.len();
            for (idx, v) in f.values_mut().iter_mut().enumerate() {
                *v -= coef * plane[idx % len];
            }
        }
        f
    };
    [one(0), one(1)]
}

/// `dt = min(cfl_adv dx/|u|_inf, cfl_ac delta dx (gamma-1), min(rho) dz^2/(4 mu), dt_max)`.
pub fn stable_dt(s: &CpeState, p: &Params, ctl: &StepControl) -> f64 {
    let g = s.grid();
    let dx = g.dx();
    let mut dt = ctl.dt_max.min(ctl.cfl_ac * p.delta * dx * (p.gamma - 1.0));
    let umax = s.u_inf();
    if umax > 0.0 {
        dt = dt.min(ctl.cfl_adv * dx / umax);
    }
    if p.mu > 0.0 {
        dt = dt.min(s.rho.min_value() * g.dz() * g.dz() / (4.0 * p.mu));
    }
    dt
}

/// Everything one RK4 step produces.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: CpeState,
    pub dt: f64,
    /// RK-weighted quadrature of `int S u . u` over the step.
    pub dissipation: f64,
    /// RK-weighted quadrature of `int rho w` over the step.
    pub rho_w: f64,
    /// Largest w-iteration count over the stages.
    pub w_iterations: usize,
}

/// One RK4 step with the stable time step.
pub fn step(s: &CpeState, p: &Params, ctl: &StepControl) -> Result<CpeState> {
    let dt = stable_dt(s, p, ctl);
    Ok(step_detailed(s, p, ctl, dt)?.state)
}

/// One RK4 step with a prescribed `dt`.
pub fn step_with_dt(s: &CpeState, p: &Params, ctl: &StepControl, dt: f64) -> Result<CpeState> {
    Ok(step_detailed(s, p, ctl, dt)?.state)
}

fn stage(
    base: &CpeState,
    dr: &Field2,
    du: &Vec3,
    h: f64,
    p: &Params,
    ctl: &StepControl,
) -> Result<CpeState> {
    let r = base.r.zip_map(dr, |a, b| a + h * b);
    let u = [
        base.u[0].zip_map(&du[0], |a, b| a + h * b),
        base.u[1].zip_map(&du[1], |a, b| a + h * b),
    ];
    CpeState::new(base.t + h, r, u, p, ctl)
}

fn dissipation_rate(su: &Vec3, u: &Vec3) -> f64 {
    inner(&su[0], &u[0]) + inner(&su[1], &u[1])
}

pub fn step_detailed(s: &CpeState, p: &Params, ctl: &StepControl, dt: f64) -> Result<StepOutcome> {
    const B: [f64; 4] = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];
    const C: [f64; 4] = [0.0, 0.5, 0.5, 1.0];
    let mut drs: Vec<Field2> = Vec::with_capacity(4);
    let mut dus: Vec<Vec3> = Vec::with_capacity(4);
    let mut dissipation = 0.0;
    let mut rho_w = 0.0;
    let mut w_iterations = s.w_iterations;
    for i in 0..4 {
        let y = if i == 0 {
            s.clone()
        } else {
            stage(s, &drs[i - 1], &dus[i - 1], C[i] * dt, p, ctl)?
        };
        w_iterations = w_iterations.max(y.w_iterations);
        let tend = rhs_u_with_stress(&y, p);
        dissipation += B[i] * dt * dissipation_rate(&tend.su, &y.u);
        rho_w += B[i] * dt * inner(&y.rho, &y.w);
        drs.push(y.drdt.clone());
        dus.push(tend.du);
    }
    let combine2 = |base: &Field2, ks: &[Field2]| -> Field2 {
        let vals = (0..base.values().len())
            .map(|i| {
                base.values()[i]
                    + dt * (B[0] * ks[0].values()[i]
                        + B[1] * ks[1].values()[i]
                        + B[2] * ks[2].values()[i]
                        + B[3] * ks[3].values()[i])
            })
            .collect();
        base.with_values(vals)
    };
    let combine3 = |base: &Field3, c: usize| -> Field3 {
        let vals = (0..base.values().len())
            .map(|i| {
                base.values()[i]
                    + dt * (B[0] * dus[0][c].values()[i]
                        + B[1] * dus[1][c].values()[i]
                        + B[2] * dus[2][c].values()[i]
                        + B[3] * dus[3][c].values()[i])
            })
            .collect();
        base.with_values(vals)
    };
    let r = combine2(&s.r, &drs);
    let u = [combine3(&s.u[0], 0), combine3(&s.u[1], 1)];
    let state = CpeState::new(s.t + dt, r, u, p, ctl)?;
    let u_inf = state.u_inf();
    if !(u_inf <= ctl.u_max) || !state.r.is_finite() {
        return Err(Error::BlowUp {
            t: state.t,
            u_inf,
            bound: ctl.u_max,
        });
    }
    let wb = state.w_boundary();
    if wb > W_BOUNDARY_TOL {
        return Err(Error::BoundaryViolation { value: wb });
    }
    Ok(StepOutcome {
        state,
        dt,
        dissipation,
        rho_w,
        w_iterations,
    })
}

/// Advance to `t_end`, shortening the last step to land on it exactly.
pub fn advance_to(
    s: &CpeState,
    t_end: f64,
    p: &Params,
    ctl: &StepControl,
    mut observe: impl FnMut(&StepOutcome),
) -> Result<CpeState> {
    let mut cur = s.clone();
    while cur.t < t_end - 1e-14 * t_end.max(1.0) {
        let dt = stable_dt(&cur, p, ctl).min(t_end - cur.t);
        let out = step_detailed(&cur, p, ctl, dt)?;
        observe(&out);
        cur = out.state;
    }
    Ok(cur)
}

/// `(1/2) int (rho |u|^2 + 2/(gamma (gamma-1) delta^2) H(rho))`.
pub fn energy(s: &CpeState, b: &BackgroundProfile, p: &Params) -> f64 {
    let kinetic = 0.5
        * (crate::fields::norms::weighted_sq(&s.u[0], &s.rho)
            + crate::fields::norms::weighted_sq(&s.u[1], &s.rho));
    let h = relative_entropy(&s.rho, b, p);
    kinetic + integrate(&h) / (p.gamma * (p.gamma - 1.0) * p.delta * p.delta)
}

/// `int xi^L rho`.
pub fn weighted_mass(s: &CpeState, b: &BackgroundProfile) -> f64 {
    inner(&b.xi_l, &s.rho)
}

/// `int rho w`.
pub fn rho_w(s: &CpeState) -> f64 {
    inner(&s.rho, &s.w)
}

/// Sup-norm distance between the state's `w` and the fixed point of the
/// integrated continuity equation. Zero for the averaged scheme.
pub fn w_consistency(s: &CpeState, p: &Params, ctl: &StepControl) -> Result<f64> {
    let ws = w_fixed_point(
        &s.xi,
        &s.u,
        Some(&grad_h(&s.r)),
        p,
        ctl.w_tol,
        ctl.w_max_iter,
    )?;
    Ok((&ws.w - &s.w).norm_inf())
}

/// Residual of the pointwise density equation against the averaged one:
/// `r_t + (gamma-1)/delta (div_h(xi u) + d_z(xi w)) - (gamma-2) u.grad_h r + (gamma-2) theta/delta w`,
/// with `r_t` from [`rhs_r`]. Reported as its L2 norm.
pub fn pointwise_density_residual(s: &CpeState, p: &Params) -> f64 {
    let g = p.gamma;
    let rt = rhs_r(s, p).lift();
    let xu = [
        dealias_product(&s.xi, &s.u[0]),
        dealias_product(&s.xi, &s.u[1]),
    ];
    let div = div_h(&xu);
    let dzw = crate::fields::dz(&dealias(&s.xi.pointwise(&s.w)), 1);
    let adv = dot_dealiased(&s.u, &[grad_h(&s.r)[0].lift(), grad_h(&s.r)[1].lift()]);
    let vals = (0..rt.values().len())
        .map(|i| {
            rt.values()[i] + (g - 1.0) / p.delta * (div.values()[i] + dzw.values()[i])
                - (g - 2.0) * adv.values()[i]
                + (g - 2.0) * p.theta / p.delta * s.w.values()[i]
        })
        .collect();
    norm(&rt.with_values(vals))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(gamma: f64, theta: f64) -> (Arc<Grid>, Params) {
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
        (g, p)
    }

    fn sine_u(g: &Arc<Grid>) -> Vec3 {
        [Field3::from_fn(g, |x, _, _| x.sin()), Field3::zeros(g)]
    }

    #[test]
    fn zero_velocity_gives_zero_w() {
        let (g, p) = setup(1.4, 0.1);
        let r = Field2::from_fn(&g, |x, y| (x + y).cos());
        let w = diagnose_w(&r, &[Field3::zeros(&g), Field3::zeros(&g)], &p).unwrap();
        assert_eq!(w.norm_inf(), 0.0);
    }

    #[test]
    fn single_mode_w_closed_form() {
        let (g, p) = setup(2.0, 0.5);
        let sol = solve_w(&Field2::zeros(&g), &sine_u(&g), &p, &StepControl::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        // w = theta (z^2 - kappa z)/2 cos x / (1 - theta z)
        let exact = Field3::from_fn(&g, |x, _, z| {
            0.5 * (z * z - z) / 2.0 * x.cos() / (1.0 - 0.5 * z)
        });
        let err = (&sol.w - &exact).norm_inf();
        assert!(err < 1e-12, "{err}");
        assert!((sol.w.at(0, 0, 8) + 1.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn contraction_for_gamma_one_point_four() {
        let (g, p) = setup(1.4, 0.1);
        let r = Field2::from_fn(&g, |x, _| 0.5 * x.cos());
        let u = [
            Field3::from_fn(&g, |x, y, z| {
                x.sin() + 0.3 * (2.0 * y).cos() * (std::f64::consts::PI * z).cos()
            }),
            Field3::from_fn(&g, |x, y, _| (x + y).sin()),
        ];
        let sol = solve_w(&r, &u, &p, &StepControl::default()).unwrap();
        assert!(
            sol.iterations > 1 && sol.iterations <= 45,
            "{}",
            sol.iterations
        );
        assert!(
            sol.contraction <= p.contraction_bound(),
            "{}",
            sol.contraction
        );
        assert!(sol.contraction <= 0.5);
    }

    #[test]
    fn no_contraction_reported() {
        let (g, p) = setup(1.4, 0.1);
        let ctl = StepControl {
            w_max_iter: 2,
            ..StepControl::default()
        };
        let res = solve_w(&Field2::zeros(&g), &sine_u(&g), &p, &ctl);
        assert!(matches!(
            res,
            Err(Error::NoContraction { iterations: 2, .. })
        ));
    }

    #[test]
    fn density_tendency_examples() {
        let (g, p) = setup(2.0, 0.5);
        let ctl = StepControl::default();
        let s = CpeState::new(0.0, Field2::zeros(&g), sine_u(&g), &p, &ctl).unwrap();
        let rt = rhs_r(&s, &p);
        let exact = Field2::from_fn(&g, |x, _| -0.75 * x.cos() / p.delta);
        assert!((&rt - &exact).norm_inf() < 1e-12);

        let (g, p) = setup(1.4, 0.1);
        let s = CpeState::new(
            0.0,
            Field2::from_fn(&g, |x, _| x.sin()),
            [Field3::zeros(&g), Field3::zeros(&g)],
            &p,
            &ctl,
        )
        .unwrap();
        assert_eq!(rhs_r(&s, &p).norm_inf(), 0.0);
    }

    #[test]
    fn rotation_only_tendency() {
        let (g, mut p) = setup(2.0, 0.1);
        p.mu = 0.0;
        p.nu = 0.0;
        let c = 0.7;
        let s = CpeState::new(
            0.0,
            Field2::zeros(&g),
            [Field3::constant(&g, c), Field3::zeros(&g)],
            &p,
            &StepControl::default(),
        )
        .unwrap();
        let du = rhs_u(&s, &p);
        assert!(du[0].norm_inf() < 1e-14);
        assert!((&du[1] - &Field3::constant(&g, -c)).norm_inf() < 1e-14);
    }

    #[test]
    fn viscous_single_mode() {
        // theta = 0 makes rho = 1 for r = 0; Ro = infinity switches rotation off.
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
        let u = sine_u(&g);
        let su = stress(&u, &p);
        assert!((&su[0] + &u[0]).norm_inf() < 1e-12);
        let s = CpeState::new(0.0, Field2::zeros(&g), u, &p, &StepControl::default()).unwrap();
        let du = rhs_u(&s, &p);
        // Self-advection u_1 d_1 u_1 = sin x cos x is part of the tendency.
        let exact = Field3::from_fn(&g, |x, _, _| -x.sin() - 0.5 * (2.0 * x).sin());
        assert!((&du[0] - &exact).norm_inf() < 1e-12);
        assert!(du[1].norm_inf() < 1e-12);
    }

    #[test]
    fn rest_state_is_steady() {
        let (g, p) = setup(1.4, 0.1);
        let s = CpeState::rest(&g, &p).unwrap();
        let n = step(&s, &p, &StepControl::default()).unwrap();
        assert!(n.t > 0.0);
        assert_eq!(n.r.norm_inf(), 0.0);
        assert_eq!(n.u[0].norm_inf(), 0.0);
        assert_eq!(n.u[1].norm_inf(), 0.0);
    }

    #[test]
    fn cached_density_matches_reconstruction() {
        let (g, p) = setup(1.4, 0.1);
        let r = Field2::from_fn(&g, |x, y| 0.3 * (x - y).sin());
        let s = CpeState::new(0.0, r.clone(), sine_u(&g), &p, &StepControl::default()).unwrap();
        let s = step(&s, &p, &StepControl::default()).unwrap();
        let rho = crate::hydrostatics::rho_of(&s.r, &p).unwrap();
        assert_eq!(rho.values(), s.rho.values());
        assert!(s.w_boundary() <= W_BOUNDARY_TOL);
    }

    fn generic_state(gamma: f64, nz: usize) -> (Arc<Grid>, Params, CpeState) {
        let g = Grid::new(16, 16, nz, 1.0).unwrap();
        let p = Params {
            gamma,
            theta: 0.2,
            kappa: 1.0,
            delta: 0.1,
            ro: 0.5,
            mu: 0.05,
            nu: 0.03,
        };
        let pi = std::f64::consts::PI;
        let r = Field2::from_fn(&g, |x, y| {
            0.3 * (x + 0.4).sin() * (2.0 * y + 1.1).cos() + 0.1 * (x - y).cos()
        });
        let u = [
            Field3::from_fn(&g, |x, y, z| {
                (y + 0.3).sin() + 0.4 * (2.0 * x + 0.7).cos() * (pi * z).cos() + 0.2 * z
            }),
            Field3::from_fn(&g, |x, y, z| {
                (x + 0.9).cos() * (1.0 + 0.3 * (y + 2.0 * z).sin())
            }),
        ];
        let s = CpeState::new(0.0, r, u, &p, &StepControl::default()).unwrap();
        (g, p, s)
    }

    #[test]
    fn conservative_energy_balance_is_exact() {
        for gamma in [1.4, 2.0, 1.7] {
            let (_, p, s) = generic_state(gamma, 17);
            let b = BackgroundProfile::new(s.grid(), &p).unwrap();
            let tend = rhs_u_with_stress(&s, &p);
            let rho_t = s.cont.as_ref().unwrap().rho_t.clone().unwrap();
            let ke2 = s.u[0].pointwise(&s.u[0]) + s.u[1].pointwise(&s.u[1]);
            let mut de = 0.5 * inner(&rho_t, &ke2);
            for c in 0..2 {
                de += inner(&s.rho.pointwise(&s.u[c]), &tend.du[c]);
            }
            let dh = s
                .rho
                .zip_map(&b.xi_l, |r, xl| p.gamma * (r.powf(p.gamma - 1.0) - xl));
            de += inner(&dh, &rho_t) / (p.gamma * (p.gamma - 1.0) * p.delta * p.delta);
            let d = dissipation_rate(&tend.su, &s.u);
            assert!(
                (de - d).abs() < 1e-11 * d.abs().max(1.0),
                "gamma {gamma}: {de} vs {d}"
            );
        }
    }

    #[test]
    fn conservative_mass_balance_is_exact() {
        for gamma in [1.4, 1.6, 2.0] {
            let (_, p, s) = generic_state(gamma, 17);
            let b = BackgroundProfile::new(s.grid(), &p).unwrap();
            let rho_t = s.cont.as_ref().unwrap().rho_t.clone().unwrap();
            let lhs = inner(&b.xi_l, &rho_t) + p.theta * rho_w(&s);
            assert!(lhs.abs() < 1e-13, "gamma {gamma}: {lhs}");
            assert!(s.w_boundary() < 1e-12);
        }
    }

    #[test]
    fn schemes_agree_to_second_order_in_w() {
        let mut prev = f64::INFINITY;
        for nz in [17, 33, 65] {
            let (_, p, s) = generic_state(1.4, nz);
            let d = w_consistency(&s, &p, &StepControl::default()).unwrap();
            assert!(d < prev / 3.5, "nz {nz}: {d} vs {prev}");
            prev = d;
        }
    }
}
