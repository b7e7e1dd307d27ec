//! Functionals, projections and balance monitors measured on solver states.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::cpe::{CpeState, StepOutcome};
use crate::error::{Error, Result};
use crate::fields::norms::{horizontal_seminorm_sq, integrate, l2_sq, sobolev_sq, weighted_sq};
use crate::fields::spectral::{
    curl_h, dealias, div_h, dot_dealiased, grad_h, perp, solve_div_grad,
};
use crate::fields::{dh_mixed, dz_even, Field3, Planar, SobolevMode, Vec3};
use crate::hydrostatics::{relative_entropy, BackgroundProfile, Params};
use crate::ipe::IpeState;

/// Functional values at one time.
#[derive(Clone, Debug, Default, Serialize)]
pub struct FunctionalSample {
    pub t: f64,
    pub a_star: f64,
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub e: f64,
    pub extras: BTreeMap<String, f64>,
}

impl FunctionalSample {
    pub fn is_valid(&self) -> bool {
        [self.a_star, self.a, self.b, self.d, self.e]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Log-log least-squares fit of values against `delta`.
#[derive(Clone, Debug, Serialize)]
pub struct RateFit {
    pub deltas: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

fn vec_sq(v: &Vec3, f: impl Fn(&Field3) -> f64) -> f64 {
    f(&v[0]) + f(&v[1])
}

/// All pure horizontal derivatives of order `k`, as `(a, b)` exponents.
fn horizontal_indices(k: u32) -> impl Iterator<Item = (u32, u32)> {
    (0..=k).map(move |a| (a, k - a))
}

/// `||u||_{H^2} + ||d_h^3 u|| + ||r||_{H^3}`.
pub fn functional_a_star(s: &CpeState) -> f64 {
    let u_h2 = vec_sq(&s.u, |f| sobolev_sq(f, 2, SobolevMode::Full)).sqrt();
    let u_h3 = vec_sq(&s.u, |f| horizontal_seminorm_sq(f, 3)).sqrt();
    let r_h3 = sobolev_sq(&s.r, 3, SobolevMode::Full).sqrt();
    u_h2 + u_h3 + r_h3
}

/// Square root of the full weighted integral: `rho`-weighted horizontal
/// velocity terms, unweighted `d_z` terms, the entropy and the `delta^{-2}`
/// density-gradient terms.
pub fn functional_a(s: &CpeState, b: &BackgroundProfile, p: &Params) -> Result<f64> {
    let rho = &s.rho;
    if !(rho.min_value() > 0.0) {
        return Err(Error::Vacuum {
            min_xi: s.xi.min_value(),
        });
    }
    let mut total = 0.0;
    for uc in &s.u {
        total += weighted_sq(uc, rho);
        for k in 1..=3 {
            for (a, bb) in horizontal_indices(k) {
                total += weighted_sq(&dh_mixed(uc, a, bb), rho);
            }
        }
        let uz = dz_even(uc, 1);
        total += l2_sq(&uz) + l2_sq(&dz_even(uc, 2));
        for (a, bb) in horizontal_indices(1) {
            total += l2_sq(&dh_mixed(&uz, a, bb));
        }
    }
    let h = relative_entropy(rho, b, p);
    total += 2.0 / (p.gamma * (p.gamma - 1.0) * p.delta * p.delta) * integrate(&h);
    let weight = rho.map(|r| r.powf(p.gamma - 2.0));
    for k in 1..=3 {
        for (a, bb) in horizontal_indices(k) {
            total += weighted_sq(&dh_mixed(rho, a, bb), &weight) / (p.delta * p.delta);
        }
    }
    Ok(total.max(0.0).sqrt())
}

/// `||grad_h v||_{H^k} + ||d_z v||_{H^k}` plus, for `with_fourth`, the two
/// fourth-order horizontal terms of the `B` functional.
fn dissipation_norm(v: &Vec3, k: u32, with_fourth: bool) -> f64 {
    let mut grad = 0.0;
    let mut vert = 0.0;
    let mut fourth_h = 0.0;
    let mut fourth_z = 0.0;
    for vc in v {
        for gc in grad_h(vc) {
            grad += sobolev_sq(&gc, k, SobolevMode::Full);
        }
        vert += sobolev_sq(&dz_even(vc, 1), k, SobolevMode::Full);
        if with_fourth {
            for (a, bb) in horizontal_indices(3) {
                let d3 = dh_mixed(vc, a, bb);
                fourth_h += l2_sq(&dh_mixed(&d3, 1, 0)) + l2_sq(&dh_mixed(&d3, 0, 1));
                fourth_z += l2_sq(&dz_even(&d3, 1));
            }
        }
    }
    grad.sqrt() + vert.sqrt() + fourth_h.sqrt() + fourth_z.sqrt()
}

/// Norm form `||grad_h u||_{H^2} + ||d_z u||_{H^2} + ||grad_h d_h^3 u|| + ||d_z d_h^3 u||`.
pub fn functional_b(s: &CpeState) -> f64 {
    functional_b_of(&s.u)
}

pub fn functional_b_of(u: &Vec3) -> f64 {
    dissipation_norm(u, 2, true)
}

fn difference(cpe: &CpeState, ipe: &IpeState) -> Vec3 {
    [0, 1].map(|c| &cpe.u[c] - &ipe.u_l[c])
}

/// Distance between the compressible and the limit solution,
/// `int rho^L (|v|^2 + |d_h v|^2) + |d_z v|^2 + rho^{2-gamma} (|r|^2 + |d_h r|^2)/(gamma-1)^2`, `v = u - u^L`.
pub fn functional_d(cpe: &CpeState, ipe: &IpeState, b: &BackgroundProfile, p: &Params) -> f64 {
    let v = difference(cpe, ipe);
    let mut total = 0.0;
    for vc in &v {
        total += weighted_sq(vc, &b.rho_l);
        for (a, bb) in horizontal_indices(1) {
            total += weighted_sq(&dh_mixed(vc, a, bb), &b.rho_l);
        }
        total += l2_sq(&dz_even(vc, 1));
    }
    let weight = cpe.rho.map(|r| r.powf(2.0 - p.gamma));
    let mut dens = weighted_sq(&cpe.r.lift(), &weight);
    for g in grad_h(&cpe.r) {
        dens += weighted_sq(&g.lift(), &weight);
    }
    total += dens / ((p.gamma - 1.0) * (p.gamma - 1.0));
    total.max(0.0).sqrt()
}

/// Norm form `||grad_h v||_{H^1} + ||d_z v||_{H^1}`.
pub fn functional_e(cpe: &CpeState, ipe: &IpeState) -> f64 {
    functional_e_of(&difference(cpe, ipe))
}

pub fn functional_e_of(v: &Vec3) -> f64 {
    dissipation_norm(v, 1, false)
}

/// `P f = f - grad_h lap_h^{-1} div_h f`; mean modes pass through.
pub fn leray_project<F: Planar>(f: &[F; 2]) -> [F; 2] {
    let phi = solve_div_grad(&div_h(f));
    let g = grad_h(&phi);
    [
        f[0].zip_map(&g[0], |a, b| a - b),
        f[1].zip_map(&g[1], |a, b| a - b),
    ]
}

/// `int xi^L rho` and `int rho w` at one time.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MassSample {
    pub t: f64,
    pub weighted_mass: f64,
    pub rho_w: f64,
}

pub fn mass_sample(s: &CpeState, b: &BackgroundProfile) -> MassSample {
    MassSample {
        t: s.t,
        weighted_mass: crate::cpe::weighted_mass(s, b),
        rho_w: crate::cpe::rho_w(s),
    }
}

/// Residual of `d/dt int xi^L rho + theta int rho w = 0` at every interior
/// sample: the centred difference of the mass over `[t_{n-1}, t_{n+1}]`
/// plus `theta` times the Simpson mean of `int rho w` over the same
/// interval (nonuniform spacing allowed).
pub fn conservation_residual(samples: &[MassSample], theta: f64) -> Vec<(f64, f64)> {
    samples
        .windows(3)
        .map(|w| {
            let (h1, h2) = (w[1].t - w[0].t, w[2].t - w[1].t);
            let span = h1 + h2;
            let g = [w[0].rho_w, w[1].rho_w, w[2].rho_w];
            let mean =
                ((2.0 - h2 / h1) * g[0] + span * span / (h1 * h2) * g[1] + (2.0 - h1 / h2) * g[2])
                    / 6.0;
            let dfdt = (w[2].weighted_mass - w[0].weighted_mass) / span;
            (w[1].t, dfdt + theta * mean)
        })
        .collect()
}

/// One-step energy residual `E(after) - E(before) - int_step int S u . u`,
/// the dissipation integral taken from the step's stage quadrature.
pub fn energy_residual(
    before: &CpeState,
    out: &StepOutcome,
    b: &BackgroundProfile,
    p: &Params,
) -> f64 {
    crate::cpe::energy(&out.state, b, p) - crate::cpe::energy(before, b, p) - out.dissipation
}

/// Sup-norm of `u.grad_h u - (1/2 grad_h |u|^2 + curl_h u u^perp)`, dealiased products.
pub fn vorticity_split_check(u: &Vec3) -> f64 {
    let half_sq = dealias(&dot_dealiased(u, u)).scale(0.5);
    let gsq = grad_h(&half_sq);
    let curl = curl_h(u);
    let up = perp(u);
    let mut worst: f64 = 0.0;
    for c in 0..2 {
        let lhs = dot_dealiased(u, &grad_h(&u[c]));
        let rot = dealias(&curl.pointwise(&up[c]));
        let res = lhs
            .zip_map(&gsq[c], |a, b| a - b)
            .zip_map(&rot, |a, b| a - b);
        worst = worst.max(res.norm_inf());
    }
    worst
}

/// Least-squares slope of `ln value` against `ln delta`.
pub fn fit_rate(sweep: &[(f64, f64)]) -> Result<RateFit> {
    if sweep.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 points, got {}",
            sweep.len()
        )));
    }
    if let Some(&(d, v)) = sweep.iter().find(|(d, v)| !(*v > 0.0) || !(*d > 0.0)) {
        return Err(Error::DegenerateFit(format!(
            "non-positive entry (delta {d}, value {v})"
        )));
    }
    let mut pts = sweep.to_vec();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all delta values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(RateFit {
        deltas: pts.iter().map(|p| p.0).collect(),
        values: pts.iter().map(|p| p.1).collect(),
        slope,
        intercept,
        r2,
    })
}

/// L2 errors between a compressible and a limit velocity at one time.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct LimitErrors {
    /// `||(d_z v, curl_h v)||`
    pub strong: f64,
    /// `||v||`
    pub l2: f64,
    /// `||v||_{H^1}`
    pub h1: f64,
}

pub fn limit_errors(u: &Vec3, u_l: &Vec3) -> LimitErrors {
    let v: Vec3 = [0, 1].map(|c| &u[c] - &u_l[c]);
    let dz_sq = l2_sq(&dz_even(&v[0], 1)) + l2_sq(&dz_even(&v[1], 1));
    let curl_sq = l2_sq(&curl_h(&v));
    LimitErrors {
        strong: (dz_sq + curl_sq).sqrt(),
        l2: (l2_sq(&v[0]) + l2_sq(&v[1])).sqrt(),
        h1: vec_sq(&v, |f| sobolev_sq(f, 1, SobolevMode::Full)).sqrt(),
    }
}

/// Sup-in-time limit errors for one `delta`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IllPreparedRow {
    pub delta: f64,
    pub strong: f64,
    pub l2: f64,
    pub h1: f64,
}

impl IllPreparedRow {
    pub fn ratio(&self) -> f64 {
        self.strong / self.l2
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IllPreparedReport {
    pub rows: Vec<IllPreparedRow>,
    /// Strong-component error strictly decreases across each halving.
    pub strong_decreasing: bool,
    /// `strong / l2` strictly decreases across each halving.
    pub ratio_decreasing: bool,
}

/// Order rows by decreasing `delta` and check both monotonicity claims.
pub fn ill_prepared_convergence(rows: &[IllPreparedRow]) -> IllPreparedReport {
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    let strong_decreasing = rows.windows(2).all(|w| w[1].strong < w[0].strong);
    let ratio_decreasing = rows.windows(2).all(|w| w[1].ratio() < w[0].ratio());
    IllPreparedReport {
        rows,
        strong_decreasing,
        ratio_decreasing,
    }
}

/// `||w - w^L|| / (delta ||r||_{H^1} + ||u - u^L||_{H^1})`; `None` when the
/// denominator vanishes.
pub fn w_control_ratio(cpe: &CpeState, ipe: &IpeState, p: &Params) -> Option<f64> {
    let dw = l2_sq(&(&cpe.w - &ipe.w_l)).sqrt();
    let denom = p.delta * sobolev_sq(&cpe.r, 1, SobolevMode::Full).sqrt()
        + limit_errors(&cpe.u, &ipe.u_l).h1;
    (denom > 0.0).then(|| dw / denom)
}

/// `(2/(gamma (gamma-1) delta^2)) int H` over `||r||^2_{L2(T^2)} kappa mean(rho^{2-gamma})`.
pub fn entropy_ratio(s: &CpeState, b: &BackgroundProfile, p: &Params) -> Option<f64> {
    let h = 2.0 / (p.gamma * (p.gamma - 1.0) * p.delta * p.delta)
        * integrate(&relative_entropy(&s.rho, b, p));
    let weight = s.rho.map(|r| r.powf(2.0 - p.gamma));
    let g = s.grid();
    let mean_w =
        integrate(&weight) / (4.0 * std::f64::consts::PI * std::f64::consts::PI * g.kappa());
    let denom = l2_sq(&s.r) * g.kappa() * mean_w / (p.gamma - 1.0).powi(2);
    (denom > 0.0).then(|| h / denom)
}

/// Every functional for a matched pair of states, with the residual extras.
pub fn sample(
    cpe: &CpeState,
    ipe: &IpeState,
    b: &BackgroundProfile,
    p: &Params,
) -> Result<FunctionalSample> {
    let a_star = functional_a_star(cpe);
    let a = functional_a(cpe, b, p)?;
    let mut extras = BTreeMap::new();
    let le = limit_errors(&cpe.u, &ipe.u_l);
    extras.insert("strong_err".to_string(), le.strong);
    extras.insert("v_l2".to_string(), le.l2);
    extras.insert("v_h1".to_string(), le.h1);
    extras.insert(
        "constraint".to_string(),
        crate::ipe::constraint_residual(&ipe.u_l, b),
    );
    extras.insert("w_boundary".to_string(), cpe.w_boundary());
    extras.insert("w_iterations".to_string(), cpe.w_iterations as f64);
    if a_star > 0.0 {
        extras.insert("a_over_a_star".to_string(), a / a_star);
    }
    if let Some(k) = w_control_ratio(cpe, ipe, p) {
        extras.insert("w_control".to_string(), k);
    }
    if let Some(q) = entropy_ratio(cpe, b, p) {
        extras.insert("entropy_ratio".to_string(), q);
    }
    Ok(FunctionalSample {
        t: cpe.t,
        a_star,
        a,
        b: functional_b(cpe),
        d: functional_d(cpe, ipe, b, p),
        e: functional_e(cpe, ipe),
        extras,
    })
}
