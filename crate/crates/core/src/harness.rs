//! Run configuration, initial data, delta sweeps and result files.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpe::{advance_to, CpeState, StepControl};
use crate::diagnostics::{
    fit_rate, functional_a_star, ill_prepared_convergence, leray_project, sample, FunctionalSample,
    IllPreparedReport, IllPreparedRow, RateFit,
};
use crate::error::{Error, Result};
use crate::fields::norms::sobolev_sq;
use crate::fields::snapshot::{write_field2, write_field3};
use crate::fields::{vbar, Field2, Field3, Grid, Planar, SobolevMode, Vec3};
use crate::hydrostatics::{check_admissible, AdmissibilityReport, BackgroundProfile, Params};
use crate::ipe::{advance_l_to, pressure_project, IpeState};

/// Which initial data a run starts from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    /// `r0 = delta psi`, `u0 = u0^L + delta phi`.
    #[default]
    WellPrepared,
    /// `r0 = O(1)` and a fixed `u0` with a gradient part, both independent of `delta`.
    IllPrepared,
    /// `r0 = 0` and a closed-form `u0 = u0^L`.
    Manufactured,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            nx: 32,
            ny: 32,
            nz: 17,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: Params,
    pub grid: GridConfig,
    pub control: StepControl,
    pub t_end: f64,
    /// Spacing of the sampled times.
    pub sample_dt: f64,
    pub delta_sweep: Vec<f64>,
    pub data_mode: DataMode,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Bound on the initial data; defaults to the measured `A*(0)`.
    pub b_in: Option<f64>,
    /// `|r0|_inf` of the ill-prepared density fluctuation.
    pub r0_amplitude: f64,
    pub snapshots: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: Params::default(),
            grid: GridConfig::default(),
            control: StepControl::default(),
            t_end: 0.5,
            sample_dt: 0.05,
            delta_sweep: vec![0.1, 0.05, 0.025, 0.0125],
            data_mode: DataMode::WellPrepared,
            seed: 7,
            output_dir: PathBuf::from("primlow-out"),
            b_in: None,
            r0_amplitude: 1.0,
            snapshots: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.control.validate()?;
        self.grid()?;
        if !(self.t_end > 0.0 && self.sample_dt > 0.0) {
            return Err(Error::Config("t_end and sample_dt must be positive".into()));
        }
        if self
            .delta_sweep
            .iter()
            .any(|d| !(*d > 0.0 && d.is_finite()))
        {
            return Err(Error::Config("delta_sweep entries must be positive".into()));
        }
        if self.delta_sweep.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config(
                "delta_sweep must be strictly decreasing".into(),
            ));
        }
        if !(self.r0_amplitude >= 0.0) {
            return Err(Error::Config("r0_amplitude must be non-negative".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Grid::new(self.grid.nx, self.grid.ny, self.grid.nz, self.params.kappa)
    }

    /// `0, sample_dt, 2 sample_dt, ...`, ending exactly at `t_end`.
    pub fn sample_times(&self) -> Vec<f64> {
        let n = (self.t_end / self.sample_dt - 1e-9).ceil().max(1.0) as usize;
        let mut ts: Vec<f64> = (0..n).map(|k| k as f64 * self.sample_dt).collect();
        ts.push(self.t_end);
        ts
    }
}

/// Dimensional scales of a flow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionalInputs {
    pub u: f64,
    pub l: f64,
    pub l_z: f64,
    pub f: f64,
    pub g: f64,
    pub rho_b: f64,
    pub mu_dim: f64,
    pub nu_dim: f64,
}

/// Non-dimensional constants; `delta` is the Mach number `U/sqrt(gamma rho_b^{gamma-1})`.
pub fn nondimensionalize(d: &DimensionalInputs, gamma: f64) -> Result<Params> {
    let all = [d.u, d.l, d.l_z, d.f, d.g, d.rho_b, d.mu_dim, d.nu_dim];
    if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(gamma > 1.0) {
        return Err(Error::InvalidParams(format!(
            "dimensional inputs must be positive: {d:?}"
        )));
    }
    let sound_sq = gamma * d.rho_b.powf(gamma - 1.0);
    Ok(Params {
        gamma,
        theta: (gamma - 1.0) * d.g * d.l / sound_sq,
        kappa: d.l_z / d.l,
        delta: d.u / sound_sq.sqrt(),
        ro: d.u / (d.f * d.l),
        mu: d.mu_dim / (d.rho_b * d.l * d.u),
        nu: d.nu_dim / (d.rho_b * d.l * d.u),
    })
}

// Independent random streams per generated field.
const STREAM_BASE: u64 = 1;
const STREAM_PSI: u64 = 2;
const STREAM_PHI: u64 = 3;
const STREAM_R_ILL: u64 = 4;
const STREAM_GRAD: u64 = 5;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Horizontal wavevectors with `max(|k1|, |k2|) <= max_mode`, one per `+-` pair.
fn modes(max_mode: i32) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for k1 in 0..=max_mode {
        for k2 in -max_mode..=max_mode {
            if k1 == 0 && k2 <= 0 {
                continue;
            }
            out.push((k1 as f64, k2 as f64));
        }
    }
    out
}

/// Seeded trigonometric polynomial in `x` with coefficients decaying like `1/(1+|k|^2)`.
fn seeded_plane(g: &Arc<Grid>, rng: &mut ChaCha8Rng, max_mode: i32) -> Field2 {
    let terms: Vec<(f64, f64, f64, f64)> = modes(max_mode)
        .into_iter()
        .map(|(k1, k2)| {
            let a = rng.random_range(-1.0..1.0) / (1.0 + k1 * k1 + k2 * k2);
            let ph = rng.random_range(0.0..std::f64::consts::TAU);
            (k1, k2, a, ph)
        })
        .collect();
    Field2::from_fn(g, |x, y| {
        terms
            .iter()
            .map(|&(k1, k2, a, ph)| a * (k1 * x + k2 * y + ph).cos())
            .sum()
    })
}

/// Seeded velocity with vertical profiles `cos(m pi z / kappa)`, `m < n_vertical`,
/// so `d_z u` vanishes on both plates.
fn seeded_velocity(g: &Arc<Grid>, rng: &mut ChaCha8Rng, max_mode: i32, n_vertical: usize) -> Vec3 {
    let kappa = g.kappa();
    [0, 1].map(|_| {
        let layers: Vec<Field2> = (0..n_vertical)
            .map(|_| seeded_plane(g, rng, max_mode))
            .collect();
        let levels: Vec<Field2> = (0..g.nz())
            .map(|k| {
                let z = g.z(k);
                let mut acc = Field2::zeros(g);
                for (m, layer) in layers.iter().enumerate() {
                    let c = (m as f64 * std::f64::consts::PI * z / kappa).cos() / (1.0 + m as f64);
                    acc = acc.zip_map(layer, |a, l| a + c * l);
                }
                acc
            })
            .collect();
        Field3::from_levels(g, &levels)
    })
}

fn h1_vec(v: &Vec3) -> f64 {
    (sobolev_sq(&v[0], 1, SobolevMode::Full) + sobolev_sq(&v[1], 1, SobolevMode::Full)).sqrt()
}

fn scale_vec(v: &Vec3, c: f64) -> Vec3 {
    [v[0].scale(c), v[1].scale(c)]
}

/// Limit-state velocity for the well-prepared runs, before projection,
/// normalized to `|u|_inf = 1`.
pub fn default_u0_l(g: &Arc<Grid>, seed: u64) -> Vec3 {
    let u = seeded_velocity(g, &mut rng(seed, STREAM_BASE), 2, 2);
    let m = u[0].norm_inf().max(u[1].norm_inf());
    scale_vec(&u, 1.0 / m)
}

/// Closed-form limit velocity of the manufactured mode.
pub fn manufactured_u0(g: &Arc<Grid>) -> Vec3 {
    let pi = std::f64::consts::PI;
    let kappa = g.kappa();
    [
        Field3::from_fn(g, |x, y, z| {
            -y.sin() + 0.3 * (x + y).cos() * (pi * z / kappa).cos()
        }),
        Field3::from_fn(g, |x, y, z| {
            x.sin() - 0.3 * (x + y).cos() * (pi * z / kappa).cos()
        }),
    ]
}

/// Unit-H^1 perturbations `(psi, phi)` of the well-prepared data.
pub fn well_prepared_perturbations(g: &Arc<Grid>, seed: u64) -> (Field2, Vec3) {
    let psi = seeded_plane(g, &mut rng(seed, STREAM_PSI), 3);
    let psi = psi.scale(1.0 / sobolev_sq(&psi, 1, SobolevMode::Full).sqrt());
    let phi = seeded_velocity(g, &mut rng(seed, STREAM_PHI), 3, 3);
    let phi = scale_vec(&phi, 1.0 / h1_vec(&phi));
    (psi, phi)
}

/// The ill-prepared pair `(r0, u0)`; neither depends on `delta`.
pub fn ill_prepared_data(g: &Arc<Grid>, seed: u64, r0_amplitude: f64) -> (Field2, Vec3) {
    let shape = seeded_plane(g, &mut rng(seed, STREAM_R_ILL), 2);
    let r0 = shape.scale(r0_amplitude / shape.norm_inf());
    let base = default_u0_l(g, seed);
    let chi = seeded_plane(g, &mut rng(seed, STREAM_GRAD), 2);
    let grad = crate::fields::spectral::grad_h(&chi);
    let gm = grad[0].norm_inf().max(grad[1].norm_inf());
    let u0 = [0, 1].map(|c| {
        let lifted = grad[c].lift().scale(0.5 / gm);
        &base[c] + &lifted
    });
    (r0, u0)
}

/// Limit initial velocity for ill-prepared data: the 2-D projector acts on
/// the vertical average, the fluctuation passes through, and the weighted
/// constraint is then enforced by [`pressure_project`].
pub fn ill_prepared_limit(u0: &Vec3, b: &BackgroundProfile) -> Vec3 {
    let bar = [vbar(&u0[0]), vbar(&u0[1])];
    let pbar = leray_project(&bar);
    let mixed = [0, 1].map(|c| {
        let mean = bar[c].lift();
        let proj = pbar[c].lift();
        u0[c]
            .zip_map(&mean, |u, m| u - m)
            .zip_map(&proj, |u, q| u + q)
    });
    pressure_project(&mixed, b, 1.0).0
}

/// Initial states of one case together with the admissibility report.
pub struct InitialData {
    pub cpe: CpeState,
    pub ipe: IpeState,
    pub admissibility: AdmissibilityReport,
}

fn admit(p: &Params, r0: &Field2, b_in: f64) -> Result<AdmissibilityReport> {
    let rep = check_admissible(p, r0, b_in);
    if rep.is_admissible() {
        Ok(rep)
    } else {
        Err(Error::Inadmissible(format!(
            "delta = {}: {}",
            p.delta,
            rep.messages.join("; ")
        )))
    }
}

/// `r0 = delta psi`, `u0 = u0^L + delta phi` with `u0^L` projected onto the constraint.
pub fn gen_well_prepared(cfg: &RunConfig, p: &Params, u0_l: &Vec3) -> Result<InitialData> {
    let g = u0_l[0].grid().clone();
    let b = BackgroundProfile::new(&g, p)?;
    let (ul, _) = pressure_project(u0_l, &b, 1.0);
    let (psi, phi) = well_prepared_perturbations(&g, cfg.seed);
    let r0 = psi.scale(p.delta);
    let u0 = [0, 1].map(|c| &ul[c] + &phi[c].scale(p.delta));
    finish(cfg, p, &b, r0, u0, ul)
}

/// Ill-prepared data for one `delta`; the limit run starts from [`ill_prepared_limit`].
pub fn gen_ill_prepared(
    cfg: &RunConfig,
    p: &Params,
    r0: &Field2,
    u0: &Vec3,
) -> Result<InitialData> {
    let b = BackgroundProfile::new(r0.grid(), p)?;
    let ul = ill_prepared_limit(u0, &b);
    finish(cfg, p, &b, r0.clone(), u0.clone(), ul)
}

fn gen_manufactured(cfg: &RunConfig, p: &Params) -> Result<InitialData> {
    let g = cfg.grid()?;
    let b = BackgroundProfile::new(&g, p)?;
    let (ul, _) = pressure_project(&manufactured_u0(&g), &b, 1.0);
    finish(cfg, p, &b, Field2::zeros(&g), ul.clone(), ul)
}

fn finish(
    cfg: &RunConfig,
    p: &Params,
    b: &BackgroundProfile,
    r0: Field2,
    u0: Vec3,
    ul: Vec3,
) -> Result<InitialData> {
    let g = r0.grid().clone();
    // Gate before building states so a vacuum shows up as inadmissible.
    let pre = check_admissible(p, &r0, f64::INFINITY);
    if !pre.is_admissible() {
        return Err(Error::Inadmissible(format!(
            "delta = {}: {}",
            p.delta,
            pre.messages.join("; ")
        )));
    }
    let cpe = CpeState::new(0.0, r0, u0, p, &cfg.control)?;
    let b_in = cfg.b_in.unwrap_or_else(|| functional_a_star(&cpe));
    let admissibility = admit(p, &cpe.r, b_in)?;
    let ipe = IpeState::new(0.0, ul, Field2::zeros(&g), b, p, &cfg.control)?;
    Ok(InitialData {
        cpe,
        ipe,
        admissibility,
    })
}

/// Initial data for `delta` according to the configured mode.
pub fn initial_data(cfg: &RunConfig, delta: f64) -> Result<InitialData> {
    let p = cfg.params.with_delta(delta);
    let g = cfg.grid()?;
    match cfg.data_mode {
        DataMode::WellPrepared => gen_well_prepared(cfg, &p, &default_u0_l(&g, cfg.seed)),
        DataMode::IllPrepared => {
            let (r0, u0) = ill_prepared_data(&g, cfg.seed, cfg.r0_amplitude);
            gen_ill_prepared(cfg, &p, &r0, &u0)
        }
        DataMode::Manufactured => gen_manufactured(cfg, &p),
    }
}

/// Admissibility of every sweep entry, without running anything.
pub fn check_config(cfg: &RunConfig) -> Vec<(f64, Result<AdmissibilityReport>)> {
    cfg.delta_sweep
        .iter()
        .map(|&d| (d, initial_data(cfg, d).map(|i| i.admissibility)))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", content = "message", rename_all = "snake_case")]
pub enum CaseStatus {
    Ok,
    Failed(String),
}

/// Outcome of one `delta`.
#[derive(Clone, Debug, Serialize)]
pub struct CaseReport {
    pub delta: f64,
    pub status: CaseStatus,
    /// `true` when the failure was a solver error rather than bad input.
    pub solver_error: bool,
    #[serde(skip)]
    pub samples: Vec<FunctionalSample>,
    #[serde(skip)]
    pub final_state: Option<CpeState>,
    pub steps: usize,
    pub sup_d: f64,
    pub sup_a_star: f64,
    pub sup_strong: f64,
    pub sup_v_l2: f64,
    pub sup_v_h1: f64,
    /// Largest `||w - w^L|| / (delta ||r||_{H^1} + ||u - u^L||_{H^1})` over the samples.
    pub w_control_k: f64,
    pub a_ratio_min: f64,
    pub a_ratio_max: f64,
    pub entropy_ratio_min: f64,
    pub entropy_ratio_max: f64,
    pub max_w_boundary: f64,
}

impl CaseReport {
    fn failed(delta: f64, e: &Error) -> Self {
        let solver_error = matches!(
            e,
            Error::Vacuum { .. }
                | Error::NoContraction { .. }
                | Error::BlowUp { .. }
                | Error::BoundaryViolation { .. }
        );
        CaseReport {
            delta,
            status: CaseStatus::Failed(e.to_string()),
            solver_error,
            samples: Vec::new(),
            final_state: None,
            steps: 0,
            sup_d: f64::NAN,
            sup_a_star: f64::NAN,
            sup_strong: f64::NAN,
            sup_v_l2: f64::NAN,
            sup_v_h1: f64::NAN,
            w_control_k: f64::NAN,
            a_ratio_min: f64::NAN,
            a_ratio_max: f64::NAN,
            entropy_ratio_min: f64::NAN,
            entropy_ratio_max: f64::NAN,
            max_w_boundary: f64::NAN,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self.status, CaseStatus::Ok)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub cases: Vec<CaseReport>,
    /// Fit of `sup_t D` against `delta` over the successful cases.
    pub d_fit: Option<RateFit>,
    /// `max_delta sup_t A* / min_delta sup_t A*`.
    pub a_star_spread: Option<f64>,
    /// Measured `C5 C6 = max(A/A*) / min(A/A*)`.
    pub c5c6: Option<f64>,
    pub ill_prepared: Option<IllPreparedReport>,
}

impl SweepReport {
    pub fn any_solver_failure(&self) -> bool {
        self.cases.iter().any(|c| c.solver_error)
    }
}

fn extra(s: &FunctionalSample, key: &str) -> Option<f64> {
    s.extras.get(key).copied()
}

fn summarize(
    delta: f64,
    samples: Vec<FunctionalSample>,
    steps: usize,
    final_state: CpeState,
) -> CaseReport {
    let sup = |f: &dyn Fn(&FunctionalSample) -> Option<f64>| {
        samples
            .iter()
            .filter_map(f)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let inf = |f: &dyn Fn(&FunctionalSample) -> Option<f64>| {
        samples.iter().filter_map(f).fold(f64::INFINITY, f64::min)
    };
    CaseReport {
        delta,
        status: CaseStatus::Ok,
        solver_error: false,
        steps,
        sup_d: sup(&|s| Some(s.d)),
        sup_a_star: sup(&|s| Some(s.a_star)),
        sup_strong: sup(&|s| extra(s, "strong_err")),
        sup_v_l2: sup(&|s| extra(s, "v_l2")),
        sup_v_h1: sup(&|s| extra(s, "v_h1")),
        w_control_k: sup(&|s| extra(s, "w_control")),
        a_ratio_min: inf(&|s| extra(s, "a_over_a_star")),
        a_ratio_max: sup(&|s| extra(s, "a_over_a_star")),
        entropy_ratio_min: inf(&|s| extra(s, "entropy_ratio")),
        entropy_ratio_max: sup(&|s| extra(s, "entropy_ratio")),
        max_w_boundary: sup(&|s| extra(s, "w_boundary")),
        samples,
        final_state: Some(final_state),
    }
}

/// Limit trajectory at the sample times.
pub fn run_limit(
    cfg: &RunConfig,
    start: &IpeState,
    b: &BackgroundProfile,
    p: &Params,
) -> Result<Vec<IpeState>> {
    let mut out = vec![start.clone()];
    let mut cur = start.clone();
    for &t in &cfg.sample_times()[1..] {
        cur = advance_l_to(&cur, t, b, p, &cfg.control, |_| {})?;
        out.push(cur.clone());
    }
    Ok(out)
}

fn run_case(
    cfg: &RunConfig,
    delta: f64,
    limit: &[IpeState],
    init: InitialData,
    snapshot_dir: Option<&Path>,
) -> Result<CaseReport> {
    let p = cfg.params.with_delta(delta);
    let b = BackgroundProfile::new(init.cpe.grid(), &p)?;
    let times = cfg.sample_times();
    let mut cur = init.cpe;
    let mut samples = Vec::with_capacity(times.len());
    let mut steps = 0;
    for (i, &t) in times.iter().enumerate() {
        if i > 0 {
            cur = advance_to(&cur, t, &p, &cfg.control, |_| steps += 1)?;
        }
        samples.push(sample(&cur, &limit[i], &b, &p)?);
        if let Some(dir) = snapshot_dir {
            write_snapshot(dir, &format!("s{i:03}"), &cur)?;
        }
    }
    Ok(summarize(delta, samples, steps, cur))
}

/// Worker count from `PRIMLOW_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("PRIMLOW_THREADS")
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|n: &usize| *n > 0)
}

/// Run every `delta` of the sweep against one limit trajectory.
///
/// Inadmissible entries abort before anything runs; solver failures are
/// recorded per case and the remaining cases continue.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let mut inits = Vec::with_capacity(cfg.delta_sweep.len());
    for &d in &cfg.delta_sweep {
        inits.push(initial_data(cfg, d)?);
    }
    if inits.is_empty() {
        return Ok(SweepReport {
            cases: Vec::new(),
            d_fit: None,
            a_star_spread: None,
            c5c6: None,
            ill_prepared: None,
        });
    }
    // The limit system does not see delta.
    let p0 = cfg.params.with_delta(cfg.delta_sweep[0]);
    let b = BackgroundProfile::new(inits[0].ipe.grid(), &p0)?;
    let limit = run_limit(cfg, &inits[0].ipe, &b, &p0)?;

    let work = |(i, d, init): (usize, f64, InitialData)| {
        let dir = cfg.snapshots.then(|| case_dir(&cfg.output_dir, i, d));
        let res = match &dir {
            Some(dir) => fs::create_dir_all(dir)
                .map_err(Error::from)
                .and_then(|_| run_case(cfg, d, &limit, init, Some(dir))),
            None => run_case(cfg, d, &limit, init, None),
        };
        res.unwrap_or_else(|e| CaseReport::failed(d, &e))
    };
    let jobs: Vec<(usize, f64, InitialData)> = cfg
        .delta_sweep
        .iter()
        .copied()
        .zip(inits)
        .enumerate()
        .map(|(i, (d, init))| (i, d, init))
        .collect();
    let cases: Vec<CaseReport> = match thread_cap() {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            pool.install(|| jobs.into_par_iter().map(work).collect())
        }
        None => jobs.into_par_iter().map(work).collect(),
    };
    Ok(assemble(cfg, cases))
}

fn assemble(cfg: &RunConfig, cases: Vec<CaseReport>) -> SweepReport {
    let ok: Vec<&CaseReport> = cases.iter().filter(|c| c.is_ok()).collect();
    let d_fit = if ok.len() >= 3 {
        fit_rate(&ok.iter().map(|c| (c.delta, c.sup_d)).collect::<Vec<_>>()).ok()
    } else {
        None
    };
    let spread = |f: fn(&CaseReport) -> (f64, f64)| -> Option<f64> {
        if ok.is_empty() {
            return None;
        }
        let (lo, hi) = ok
            .iter()
            .map(|c| f(c))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
                (lo.min(a), hi.max(b))
            });
        (lo > 0.0 && hi.is_finite()).then(|| hi / lo)
    };
    let a_star_spread = spread(|c| (c.sup_a_star, c.sup_a_star));
    let c5c6 = spread(|c| (c.a_ratio_min, c.a_ratio_max));
    let ill_prepared = (cfg.data_mode == DataMode::IllPrepared && ok.len() >= 2).then(|| {
        let rows: Vec<IllPreparedRow> = ok
            .iter()
            .map(|c| IllPreparedRow {
                delta: c.delta,
                strong: c.sup_strong,
                l2: c.sup_v_l2,
                h1: c.sup_v_h1,
            })
            .collect();
        ill_prepared_convergence(&rows)
    });
    SweepReport {
        cases,
        d_fit,
        a_star_spread,
        c5c6,
        ill_prepared,
    }
}

/// Extras written as fixed CSV columns, in this order.
pub const EXTRA_COLUMNS: [&str; 9] = [
    "strong_err",
    "v_l2",
    "v_h1",
    "constraint",
    "w_boundary",
    "w_iterations",
    "a_over_a_star",
    "w_control",
    "entropy_ratio",
];

fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = ["delta", "t", "a_star", "a", "b", "d", "e"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(EXTRA_COLUMNS.iter().map(|s| s.to_string()));
    h
}

fn csv_row(delta: f64, s: &FunctionalSample) -> Vec<String> {
    let mut row: Vec<String> = [delta, s.t, s.a_star, s.a, s.b, s.d, s.e]
        .iter()
        .map(|v| format!("{v:e}"))
        .collect();
    row.extend(EXTRA_COLUMNS.iter().map(|k| {
        s.extras
            .get(*k)
            .map(|v| format!("{v:e}"))
            .unwrap_or_default()
    }));
    row
}

fn write_csv(path: &Path, rows: &[(f64, &FunctionalSample)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(csv_header())?;
    for (d, s) in rows {
        w.write_record(csv_row(*d, s))?;
    }
    w.flush()?;
    Ok(())
}

fn case_dir(root: &Path, index: usize, delta: f64) -> PathBuf {
    root.join(format!("case{index:02}_delta{delta:e}"))
}

/// Write `functionals.csv`, `rates.json` and, per case, its own CSV.
/// Snapshots (when enabled) are written by the run itself, one set per
/// sampled time.
pub fn write_outputs(cfg: &RunConfig, report: &SweepReport) -> Result<()> {
    let root = &cfg.output_dir;
    fs::create_dir_all(root)?;
    let all: Vec<(f64, &FunctionalSample)> = report
        .cases
        .iter()
        .flat_map(|c| c.samples.iter().map(move |s| (c.delta, s)))
        .collect();
    write_csv(&root.join("functionals.csv"), &all)?;
    for (i, c) in report.cases.iter().enumerate() {
        let dir = case_dir(root, i, c.delta);
        fs::create_dir_all(&dir)?;
        let rows: Vec<(f64, &FunctionalSample)> = c.samples.iter().map(|s| (c.delta, s)).collect();
        write_csv(&dir.join("functionals.csv"), &rows)?;
    }
    let json = serde_json::to_string_pretty(&RatesFile {
        config: cfg,
        report,
    })?;
    fs::write(root.join("rates.json"), json + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct RatesFile<'a> {
    config: &'a RunConfig,
    report: &'a SweepReport,
}

/// `r_<tag>.bin`, `u1_<tag>.bin`, `u2_<tag>.bin`, `w_<tag>.bin` in the snapshot format.
pub fn write_snapshot(dir: &Path, tag: &str, s: &CpeState) -> Result<()> {
    let open = |name: &str| -> Result<BufWriter<fs::File>> {
        Ok(BufWriter::new(fs::File::create(
            dir.join(format!("{name}_{tag}.bin")),
        )?))
    };
    write_field2(&mut open("r")?, &s.r)?;
    write_field3(&mut open("u1")?, &s.u[0])?;
    write_field3(&mut open("u2")?, &s.u[1])?;
    write_field3(&mut open("w")?, &s.w)?;
    Ok(())
}

/// Rate fit of `sup_t d` per delta from a `functionals.csv`.
pub fn fit_csv(path: &Path) -> Result<RateFit> {
    let mut rd = csv::Reader::from_path(path)?;
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("column {name} missing")))
    };
    let (ci, cd) = (col("delta")?, col("d")?);
    let mut sup: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for rec in rd.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad number in column {i}: {e}")))
        };
        let (delta, d) = (parse(ci)?, parse(cd)?);
        let e = sup
            .entry(delta.to_bits())
            .or_insert((delta, f64::NEG_INFINITY));
        e.1 = e.1.max(d);
    }
    fit_rate(&sup.into_values().collect::<Vec<_>>())
}
