//! Hydrostatic reconstruction: `xi = 1 - theta z + delta r`, `rho = xi^{1/(gamma-1)}`,
//! the background profile, the relative entropy and the admissibility gates.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::norms::{sobolev_norm, SobolevMode};
use crate::fields::spectral::{dh, Axis};
use crate::fields::{Field2, Field3, Grid, Planar};

/// `xi` at or below this value is treated as vacuum.
pub const VACUUM_THRESHOLD: f64 = 1e-10;

/// Non-dimensional constants of the compressible system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub gamma: f64,
    pub theta: f64,
    pub kappa: f64,
    pub delta: f64,
    /// Rossby number; `f64::INFINITY` switches rotation off.
    pub ro: f64,
    pub mu: f64,
    pub nu: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            gamma: 1.4,
            theta: 0.1,
            kappa: 1.0,
            delta: 0.1,
            ro: 1.0,
            mu: 0.05,
            nu: 0.05,
        }
    }
}

impl Params {
    /// Range checks on the individual constants.
    ///
    /// `theta = 0` (no gravity) and vanishing viscosities are accepted; the
    /// coupled bound on `theta kappa` is reported by [`check_admissible`].
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return bad(format!("gamma = {} must exceed 1", self.gamma));
        }
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return bad(format!("theta = {} must be non-negative", self.theta));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa = {} must be positive", self.kappa));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta = {} must be positive", self.delta));
        }
        if !(self.ro > 0.0) {
            return bad(format!("Ro = {} must be positive", self.ro));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite() && self.nu >= 0.0 && self.nu.is_finite()) {
            return bad(format!(
                "viscosities mu = {}, nu = {} must be non-negative",
                self.mu, self.nu
            ));
        }
        if self.theta * self.kappa >= 1.0 {
            return bad(format!(
                "theta kappa = {} leaves no fluid at the top",
                self.theta * self.kappa
            ));
        }
        Ok(())
    }

    pub fn inv_ro(&self) -> f64 {
        if self.ro.is_infinite() {
            0.0
        } else {
            1.0 / self.ro
        }
    }

    /// Largest admissible `theta kappa`: `1/2`, further capped by
    /// `sqrt(2)(gamma-1)/(8|gamma-2|)` when `gamma != 2`.
    pub fn theta_kappa_bound(&self) -> f64 {
        let g = self.gamma;
        if g == 2.0 {
            0.5
        } else {
            0.5_f64.min(2f64.sqrt() * (g - 1.0) / (8.0 * (g - 2.0).abs()))
        }
    }

    /// Bound on the per-iteration contraction of the vertical-velocity map,
    /// `4 |gamma-2| theta kappa / (sqrt(2) (gamma-1))`.
    pub fn contraction_bound(&self) -> f64 {
        4.0 * (self.gamma - 2.0).abs() * self.theta * self.kappa
            / (2f64.sqrt() * (self.gamma - 1.0))
    }

    pub fn with_delta(&self, delta: f64) -> Params {
        Params { delta, ..*self }
    }
}

/// `pow(x, 1/(gamma-1))` for positive `x`, shared by every density evaluation.
fn density_power(xi: f64, gamma: f64) -> f64 {
    if gamma == 2.0 {
        xi
    } else {
        (xi.ln() / (gamma - 1.0)).exp()
    }
}

fn check_vacuum(xi: &Field3) -> Result<()> {
    let m = xi.min_value();
    if !(m > VACUUM_THRESHOLD) {
        return Err(Error::Vacuum { min_xi: m });
    }
    Ok(())
}

/// Density from `xi`, with the vacuum check.
pub fn rho_from_xi(xi: &Field3, gamma: f64) -> Result<Field3> {
    check_vacuum(xi)?;
    Ok(xi.map(|x| density_power(x, gamma)))
}

/// `xi = 1 - theta z + delta r`.
pub fn xi_of(r: &Field2, p: &Params) -> Result<Field3> {
    let g = r.grid();
    let n = g.plane_len();
    let mut values = Vec::with_capacity(g.len3());
    for k in 0..g.nz() {
        let base = 1.0 - p.theta * g.z(k);
        values.extend(r.values().iter().map(|&rv| base + p.delta * rv));
        debug_assert_eq!(values.len(), (k + 1) * n);
    }
    let xi = Field3::from_values(g, values)?;
    check_vacuum(&xi)?;
    Ok(xi)
}

/// `rho = xi^{1/(gamma-1)}`.
pub fn rho_of(r: &Field2, p: &Params) -> Result<Field3> {
    rho_from_xi(&xi_of(r, p)?, p.gamma)
}

/// The rest state `xi^L = 1 - theta z`, `rho^L = (xi^L)^{1/(gamma-1)}` on a grid.
#[derive(Clone, Debug)]
pub struct BackgroundProfile {
    pub xi_l: Field3,
    pub rho_l: Field3,
}

impl BackgroundProfile {
    pub fn new(grid: &Arc<Grid>, p: &Params) -> Result<Self> {
        let zero = Field2::zeros(grid);
        let xi_l = xi_of(&zero, p)?;
        let rho_l = rho_from_xi(&xi_l, p.gamma)?;
        Ok(BackgroundProfile { xi_l, rho_l })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.xi_l.grid()
    }
}

/// `H(rho) = rho^gamma - gamma xi^L rho + (gamma-1) (xi^L)^{gamma/(gamma-1)}`.
pub fn relative_entropy(rho: &Field3, b: &BackgroundProfile, p: &Params) -> Field3 {
    let g = p.gamma;
    let vals = rho
        .values()
        .iter()
        .zip(b.xi_l.values())
        .zip(b.rho_l.values())
        .map(|((&r, &xl), &rl)| r.powf(g) - g * xl * r + (g - 1.0) * xl * rl)
        .collect();
    rho.with_values(vals)
}

/// Outcome of the admissibility gates; a report, never an error.
#[derive(Clone, Debug, Serialize)]
pub struct AdmissibilityReport {
    pub theta_kappa: f64,
    pub theta_kappa_bound: f64,
    pub theta_kappa_ok: bool,
    /// `delta |r0|_inf` on the grid.
    pub delta_r_inf: f64,
    /// `delta |r0|_inf <= 1/4`.
    pub vacuum_gate_ok: bool,
    /// `(1/2 - delta |r0|_inf)^{1/(gamma-1)}`, when the base is positive.
    pub rho_min_bound: Option<f64>,
    /// `(1 - theta kappa - delta |r0|_inf)^{1/(gamma-1)}`, the sharper bound.
    pub rho_min_sharp: Option<f64>,
    pub r0_h3: f64,
    pub b_in: f64,
    pub b_in_ok: bool,
    pub params_ok: bool,
    pub messages: Vec<String>,
}

impl AdmissibilityReport {
    pub fn is_admissible(&self) -> bool {
        self.params_ok && self.theta_kappa_ok && self.vacuum_gate_ok && self.b_in_ok
    }
}

/// Evaluate every gate for the parameters `p` and initial fluctuation `r0`.
pub fn check_admissible(p: &Params, r0: &Field2, b_in: f64) -> AdmissibilityReport {
    let mut messages = Vec::new();
    let params_ok = match p.validate() {
        Ok(()) => true,
        Err(e) => {
            messages.push(e.to_string());
            false
        }
    };
    let theta_kappa = p.theta * p.kappa;
    let theta_kappa_bound = p.theta_kappa_bound();
    let theta_kappa_ok = theta_kappa <= theta_kappa_bound;
    if !theta_kappa_ok {
        messages.push(format!(
            "theta kappa = {theta_kappa} exceeds {theta_kappa_bound}"
        ));
    }
    let delta_r_inf = p.delta * r0.norm_inf();
    let vacuum_gate_ok = delta_r_inf <= 0.25;
    if !vacuum_gate_ok {
        messages.push(format!("delta |r0|_inf = {delta_r_inf} exceeds 1/4"));
    }
    let expo = |base: f64| (base > 0.0).then(|| density_power(base, p.gamma));
    let r0_h3 = sobolev_norm(r0, 3, SobolevMode::Full);
    let b_in_ok = r0_h3 <= b_in;
    if !b_in_ok {
        messages.push(format!("|r0|_H3 = {r0_h3} exceeds B_in = {b_in}"));
    }
    AdmissibilityReport {
        theta_kappa,
        theta_kappa_bound,
        theta_kappa_ok,
        delta_r_inf,
        vacuum_gate_ok,
        rho_min_bound: expo(0.5 - delta_r_inf),
        rho_min_sharp: expo(1.0 - theta_kappa - delta_r_inf),
        r0_h3,
        b_in,
        b_in_ok,
        params_ok,
        messages,
    }
}

/// Max-norm gaps between spectral horizontal derivatives of `rho` and the
/// closed forms obtained from `rho = xi^{1/(gamma-1)}` by the chain rule.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ChainRuleResiduals {
    pub first: f64,
    pub second: f64,
    pub third: f64,
}

pub fn chain_rule_check(r: &Field2, p: &Params) -> Result<ChainRuleResiduals> {
    let g = p.gamma;
    let d = p.delta;
    let rho = rho_of(r, p)?;
    let c1 = d / (g - 1.0);
    let c2 = (2.0 - g) * d * d / ((g - 1.0) * (g - 1.0));
    let c3 = (2.0 - g) * (3.0 - 2.0 * g) * d.powi(3) / (g - 1.0).powi(3);
    let mut res = ChainRuleResiduals::default();
    let gap = |a: &Field3, b: &Field3| -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
    };
    for axis in [Axis::X1, Axis::X2] {
        let r1 = dh(r, axis, 1).lift();
        let r2 = dh(r, axis, 2).lift();
        let r3 = dh(r, axis, 3).lift();
        let n = rho.values().len();
        let (mut e1, mut e2, mut e3) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for idx in 0..n {
            let rv = rho.values()[idx];
            let (a, b, c) = (r1.values()[idx], r2.values()[idx], r3.values()[idx]);
            let p1 = rv.powf(2.0 - g);
            let p2 = rv.powf(3.0 - 2.0 * g);
            let p3 = rv.powf(4.0 - 3.0 * g);
            e1[idx] = c1 * p1 * a;
            e2[idx] = c1 * p1 * b + c2 * p2 * a * a;
            e3[idx] = c1 * p1 * c + 3.0 * c2 * p2 * a * b + c3 * p3 * a * a * a;
        }
        res.first = res.first.max(gap(&dh(&rho, axis, 1), &rho.with_values(e1)));
        res.second = res
            .second
            .max(gap(&dh(&rho, axis, 2), &rho.with_values(e2)));
        res.third = res.third.max(gap(&dh(&rho, axis, 3), &rho.with_values(e3)));
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(gamma: f64, theta: f64, kappa: f64, delta: f64) -> Params {
        Params {
            gamma,
            theta,
            kappa,
            delta,
            ..Params::default()
        }
    }

    #[test]
    fn theta_kappa_gate() {
        let g = Grid::new(8, 8, 9, 1.0).unwrap();
        let r0 = Field2::zeros(&g);
        assert!(check_admissible(&params(2.0, 0.5, 1.0, 0.1), &r0, 1.0).theta_kappa_ok);
        let p = params(1.4, 0.1, 1.0, 0.1);
        assert!((p.theta_kappa_bound() - 0.117851).abs() < 1e-6);
        assert!(check_admissible(&p, &r0, 1.0).theta_kappa_ok);
        assert!(!check_admissible(&params(1.4, 0.2, 1.0, 0.1), &r0, 1.0).theta_kappa_ok);
    }

    #[test]
    fn density_floor_at_one_eighth() {
        let g = Grid::new(8, 8, 9, 1.0).unwrap();
        let r0 = Field2::from_fn(&g, |x, _| x.cos());
        let p = params(1.4, 0.1, 1.0, 0.125);
        let rep = check_admissible(&p, &r0, 100.0);
        assert!((rep.delta_r_inf - 0.125).abs() < 1e-15);
        assert!((rep.rho_min_bound.unwrap() - 0.375f64.powf(2.5)).abs() < 1e-15);
    }

    #[test]
    fn xi_values() {
        let g = Grid::new(8, 8, 9, 1.0).unwrap();
        let p = params(2.0, 0.5, 1.0, 0.1);
        let b = BackgroundProfile::new(&g, &p).unwrap();
        let xi0 = xi_of(&Field2::zeros(&g), &p).unwrap();
        assert_eq!(xi0.values(), b.xi_l.values());
        let xi = xi_of(&Field2::constant(&g, 1.0), &p).unwrap();
        assert!((xi.at(0, 0, 8) - 0.6).abs() < 1e-15);
        let bad = xi_of(&Field2::constant(&g, -20.0), &p);
        assert!(matches!(bad, Err(Error::Vacuum { .. })));
    }

    #[test]
    fn rho_values() {
        let g = Grid::new(8, 8, 9, 1.0).unwrap();
        let p = params(2.0, 0.5, 1.0, 0.1);
        let rho = rho_of(&Field2::zeros(&g), &p).unwrap();
        for k in 0..9 {
            assert!((rho.at(3, 2, k) - (1.0 - 0.5 * g.z(k))).abs() < 1e-15);
        }
        let p = params(1.4, 0.25, 1.0, 0.1);
        let rho = rho_of(&Field2::zeros(&g), &p).unwrap();
        assert!((rho.at(0, 0, 8) - 0.487_139_289_628_746_7).abs() < 1e-12);
        let b = BackgroundProfile::new(&g, &p).unwrap();
        assert_eq!(rho.values(), b.rho_l.values());
    }

    #[test]
    fn entropy_values() {
        let g = Grid::new(8, 8, 9, 1.0).unwrap();
        let p = params(2.0, 0.0, 1.0, 0.1);
        let b = BackgroundProfile::new(&g, &p).unwrap();
        assert!(relative_entropy(&b.rho_l, &b, &p).norm_inf() < 1e-15);
        let rho = Field3::constant(&g, 1.3);
        let h = relative_entropy(&rho, &b, &p);
        assert!(h.values().iter().all(|v| (v - 0.09).abs() < 1e-14));

        // gamma = 1.4 at xi^L = 0.8 (z = 1 with theta = 0.2), rho = 1.
        let p = params(1.4, 0.2, 1.0, 0.1);
        let b = BackgroundProfile::new(&g, &p).unwrap();
        let h = relative_entropy(&Field3::constant(&g, 1.0), &b, &p);
        assert!((h.at(0, 0, 8) - 0.063_178_688_716_782_77).abs() < 1e-9);
    }

    #[test]
    fn chain_rule_residuals() {
        let g = Grid::new(32, 32, 9, 1.0).unwrap();
        let r = Field2::from_fn(&g, |x, _| x.sin());
        let res = chain_rule_check(&r, &params(2.0, 0.1, 1.0, 0.05)).unwrap();
        assert!(
            res.first <= 1e-12 && res.second <= 1e-12 && res.third <= 1e-12,
            "{res:?}"
        );
        let res = chain_rule_check(&r, &params(1.4, 0.1, 1.0, 0.05)).unwrap();
        assert!(
            res.first <= 1e-8 && res.second <= 1e-8 && res.third <= 1e-8,
            "{res:?}"
        );
        let c = Field2::constant(&g, 0.7);
        let res = chain_rule_check(&c, &params(1.4, 0.1, 1.0, 0.05)).unwrap();
        assert!(res.first <= 1e-14 && res.second <= 1e-14);
    }
}
