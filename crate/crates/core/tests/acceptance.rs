//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::f64::consts::{PI, SQRT_2};
use std::process::ExitCode;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use primlow_core::cpe::{
    diagnose_w, solve_w, stable_dt, step_detailed, step_with_dt, CpeState, StepControl,
};
use primlow_core::diagnostics::{
    conservation_residual, energy_residual, leray_project, mass_sample, vorticity_split_check,
};
use primlow_core::fields::norms::l2_sq;
use primlow_core::fields::spectral::div_h;
use primlow_core::fields::{vbar, vint, vtilde, Field2, Field3, Grid, Planar};
use primlow_core::harness::{
    ill_prepared_data, ill_prepared_limit, initial_data, run_sweep, DataMode, RunConfig,
    SweepReport,
};
use primlow_core::hydrostatics::{
    chain_rule_check, check_admissible, rho_of, BackgroundProfile, Params,
};
use primlow_core::ipe::{constraint_residual, diagnose_w_l, step_l, IpeState};

const SWEEP: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn params(gamma: f64) -> Params {
    Params {
        gamma,
        theta: 0.1,
        kappa: 1.0,
        delta: 0.1,
        ro: 1.0,
        mu: 0.05,
        nu: 0.05,
    }
}

fn sweep(gamma: f64, mode: DataMode) -> SweepReport {
    let cfg = RunConfig {
        params: params(gamma),
        delta_sweep: SWEEP.to_vec(),
        data_mode: mode,
        t_end: 0.5,
        ..RunConfig::default()
    };
    run_sweep(&cfg).expect("sweep config")
}

fn random_field3(g: &Arc<Grid>, rng: &mut ChaCha8Rng, modes: usize) -> Field3 {
    let terms: Vec<(f64, f64, f64, f64, f64)> = (0..modes)
        .map(|_| {
            (
                rng.random_range(-1.0..1.0),
                rng.random_range(0..4) as f64,
                rng.random_range(0..4) as f64,
                rng.random_range(0.0..4.0),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    Field3::from_fn(g, |x, y, z| {
        terms
            .iter()
            .map(|&(a, k, l, m, ph)| a * (k * x + l * y + ph).cos() * (m * z + ph).cos())
            .sum()
    })
}

fn smooth_state(gamma: f64, nz: usize) -> (Params, CpeState) {
    let g = Grid::new(16, 16, nz, 1.0).unwrap();
    let p = Params {
        gamma,
        theta: 0.1,
        kappa: 1.0,
        delta: 0.1,
        ro: 1.0,
        mu: 0.05,
        nu: 0.05,
    };
    let r = Field2::from_fn(&g, |x, y| {
        0.3 * (x + 0.4).sin() * (2.0 * y + 1.1).cos() + 0.1 * (x - y).cos()
    });
    let u = [
        Field3::from_fn(&g, |x, y, z| {
            (y + 0.3).sin() + 0.4 * (2.0 * x + 0.7).cos() * (PI * z).cos()
        }),
        Field3::from_fn(&g, |x, y, z| {
            (x + 0.9).cos() * (1.0 + 0.3 * (y + 2.0 * z).sin())
        }),
    ];
    let s = CpeState::new(0.0, r, u, &p, &StepControl::default()).unwrap();
    (p, s)
}

fn criterion_1(reports: &[(f64, &SweepReport)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (gamma, rep) in reports {
        match &rep.d_fit {
            Some(f) if !rep.cases.iter().any(|c| !c.is_ok()) => {
                pass &= (0.75..=1.25).contains(&f.slope) && f.r2 >= 0.98;
                parts.push(format!(
                    "gamma {gamma}: slope {:.4} r2 {:.6}",
                    f.slope, f.r2
                ));
            }
            _ => {
                pass = false;
                parts.push(format!("gamma {gamma}: sweep incomplete"));
            }
        }
    }
    outcome(
        pass,
        format!(
            "{} (need slope in [0.75, 1.25], r2 >= 0.98)",
            parts.join("; ")
        ),
    )
}

fn criterion_2(reports: &[(f64, &SweepReport)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (gamma, rep) in reports {
        let spread = rep.a_star_spread.unwrap_or(f64::INFINITY);
        pass &= spread <= 2.0;
        parts.push(format!("gamma {gamma}: spread {spread:.4}"));
    }
    outcome(pass, format!("{} (need <= 2)", parts.join("; ")))
}

fn max_conservation_residual(p: &Params, s0: &CpeState, dt: f64, steps: usize) -> f64 {
    let b = BackgroundProfile::new(s0.grid(), p).unwrap();
    let ctl = StepControl::default();
    let mut s = s0.clone();
    let mut samples = vec![mass_sample(&s, &b)];
    for _ in 0..steps {
        s = step_with_dt(&s, p, &ctl, dt).unwrap();
        samples.push(mass_sample(&s, &b));
    }
    conservation_residual(&samples, p.theta)
        .iter()
        .fold(0.0, |m, (_, r)| m.max(r.abs()))
}

fn criterion_3() -> Outcome {
    // Well-prepared start of the acceptance configuration at delta = 0.1.
    let cfg = RunConfig {
        params: params(1.4),
        ..RunConfig::default()
    };
    let p = cfg.params;
    let s = initial_data(&cfg, p.delta).expect("admissible").cpe;
    let dt = stable_dt(&s, &p, &StepControl::default());
    let n = 20;
    let coarse = max_conservation_residual(&p, &s, dt, n);
    let fine = max_conservation_residual(&p, &s, dt / 2.0, 2 * n);
    let ratio = coarse / fine;
    outcome(
        ratio >= 8.0 && coarse <= 1e-6,
        format!("residual {coarse:.3e} at dt {dt:.3e}, {fine:.3e} at dt/2, reduction {ratio:.1} (need >= 8 and <= 1e-6)"),
    )
}

fn criterion_4() -> Outcome {
    let ctl = StepControl::default();
    let mut worst = f64::INFINITY;
    let mut parts = Vec::new();
    for gamma in [1.4, 2.0] {
        let (p, s) = smooth_state(gamma, 17);
        let b = BackgroundProfile::new(s.grid(), &p).unwrap();
        let dt0 = stable_dt(&s, &p, &ctl);
        let res: Vec<f64> = [1.0, 0.5, 0.25]
            .iter()
            .map(|f| {
                energy_residual(&s, &step_detailed(&s, &p, &ctl, dt0 * f).unwrap(), &b, &p).abs()
            })
            .collect();
        let orders: Vec<f64> = res.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        let order = orders.iter().copied().fold(f64::INFINITY, f64::min);
        worst = worst.min(order);
        parts.push(format!(
            "gamma {gamma}: residuals {:.2e}/{:.2e}/{:.2e} order {order:.2}",
            res[0], res[1], res[2]
        ));
    }
    outcome(
        worst >= 3.5,
        format!("{} (need order >= 3.5)", parts.join("; ")),
    )
}

fn criterion_5() -> Outcome {
    let g = Grid::new(32, 32, 17, 1.0).unwrap();
    let p = params(1.4);
    let ctl = StepControl {
        w_tol: 1e-12,
        ..StepControl::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_c: f64 = 0.0;
    let mut worst_it = 0;
    for _ in 0..4 {
        let r = vbar(&random_field3(&g, &mut rng, 4));
        let r = r.scale(0.2 / (p.delta * r.norm_inf()));
        let u = [
            random_field3(&g, &mut rng, 6),
            random_field3(&g, &mut rng, 6),
        ];
        let sol = solve_w(&r, &u, &p, &ctl).unwrap();
        worst_c = worst_c.max(sol.contraction);
        worst_it = worst_it.max(sol.iterations);
    }
    let p2 = Params {
        gamma: 2.0,
        theta: 0.5,
        ..params(2.0)
    };
    let u = [Field3::from_fn(&g, |x, _, _| x.sin()), Field3::zeros(&g)];
    let w = diagnose_w(&Field2::zeros(&g), &u, &p2).unwrap().at(0, 0, 8);
    let b2 = BackgroundProfile::new(&g, &p2).unwrap();
    let wl = diagnose_w_l(&u, &b2, &p2).unwrap().at(0, 0, 8);
    let err = (w + 1.0 / 12.0).abs().max((wl + 1.0 / 12.0).abs());
    outcome(
        worst_c <= 0.5 && worst_it <= 45 && err <= 1e-8,
        format!("contraction {worst_c:.4} (<= 0.5), iterations {worst_it} (<= 45), closed form error {err:.2e} (<= 1e-8)"),
    )
}

fn criterion_6() -> Outcome {
    let g = Grid::new(32, 32, 17, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let f = [
        vbar(&random_field3(&g, &mut rng, 8)),
        vbar(&random_field3(&g, &mut rng, 8)),
    ];
    let pf = leray_project(&f);
    let ppf = leray_project(&pf);
    let idem = (0..2)
        .map(|c| (&ppf[c] - &pf[c]).norm_inf())
        .fold(0.0, f64::max);
    let div = div_h(&pf).norm_inf();

    let p = params(1.4);
    let b = BackgroundProfile::new(&g, &p).unwrap();
    let ctl = StepControl::default();
    let (_, u0) = ill_prepared_data(&g, 7, 1.0);
    let mut s = IpeState::new(
        0.0,
        ill_prepared_limit(&u0, &b),
        Field2::zeros(&g),
        &b,
        &p,
        &ctl,
    )
    .unwrap();
    let mut worst = constraint_residual(&s.u_l, &b);
    for _ in 0..200 {
        s = step_l(&s, &b, &p, &ctl).unwrap();
        worst = worst.max(constraint_residual(&s.u_l, &b));
    }
    outcome(
        idem <= 1e-12 && div <= 1e-10 && worst <= 1e-10,
        format!("|P^2 f - P f| {idem:.2e}, |div P f| {div:.2e}, constraint over 200 steps {worst:.2e} (need <= 1e-10)"),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g = Grid::new(16, 16, 33, 1.3).unwrap();
    let mut pyth: f64 = 0.0;
    for _ in 0..8 {
        let f = random_field3(&g, &mut rng, 6);
        let lhs = g.kappa() * l2_sq(&vbar(&f)) + l2_sq(&vtilde(&f));
        let rhs = l2_sq(&f);
        pyth = pyth.max((lhs - rhs).abs() / rhs);
    }

    let g65 = Grid::new(16, 16, 65, 1.0).unwrap();
    let mut eps: f64 = 0.0;
    for _ in 0..8 {
        let ft = vtilde(&random_field3(&g65, &mut rng, 6));
        let ratio = l2_sq(&vint(&ft)).sqrt() / (g65.kappa() / SQRT_2 * l2_sq(&ft).sqrt());
        eps = eps.max(ratio - 1.0);
    }
    let eps = eps.max(0.0);

    let g32 = Grid::new(32, 32, 17, 1.0).unwrap();
    let mut chain: f64 = 0.0;
    for gamma in [1.4, 2.0, 1.7] {
        let p = Params {
            gamma,
            delta: 0.1,
            ..params(gamma)
        };
        let r = Field2::from_fn(&g32, |x, y| (x + 0.3).cos() + 0.5 * (x - 2.0 * y).sin());
        let c = chain_rule_check(&r, &p).unwrap();
        chain = chain.max(c.first).max(c.second).max(c.third);
    }

    let u = [
        random_field3(&g32, &mut rng, 6),
        random_field3(&g32, &mut rng, 6),
    ];
    let vort = vorticity_split_check(&u);
    outcome(
        pyth <= 1e-12 && eps <= 1e-2 && chain <= 1e-8 && vort <= 1e-10,
        format!(
            "pythagoras {pyth:.2e} (<= 1e-12), vint eps_grid {eps:.2e} (<= 1e-2), chain rule {chain:.2e} (<= 1e-8), vorticity {vort:.2e} (<= 1e-10)"
        ),
    )
}

fn criterion_8(rep: &SweepReport) -> Outcome {
    match &rep.ill_prepared {
        Some(ip) if ip.rows.len() == SWEEP.len() => {
            let strong: Vec<String> = ip
                .rows
                .iter()
                .map(|r| format!("{:.3e}", r.strong))
                .collect();
            let ratio: Vec<String> = ip
                .rows
                .iter()
                .map(|r| format!("{:.3e}", r.ratio()))
                .collect();
            outcome(
                ip.strong_decreasing && ip.ratio_decreasing,
                format!(
                    "strong error [{}], ratio to |u - u^L| [{}] (both strictly decreasing)",
                    strong.join(", "),
                    ratio.join(", ")
                ),
            )
        }
        _ => outcome(false, "ill-prepared sweep incomplete".into()),
    }
}

fn criterion_9() -> Outcome {
    let g = Grid::new(32, 32, 17, 1.0).unwrap();
    let shape = Field2::from_fn(&g, |x, y| {
        (x + 0.2).cos() * (y - 0.5).sin() + 0.3 * (2.0 * x).sin()
    });
    let mut pass = true;
    let mut parts = Vec::new();
    for gamma in [1.4, 2.0, 1.7] {
        let p = params(gamma);
        let r0 = shape.scale(0.125 / (p.delta * shape.norm_inf()));
        let rep = check_admissible(&p, &r0, f64::INFINITY);
        let floor = 0.375f64.powf(1.0 / (gamma - 1.0));
        let min_rho = rho_of(&r0, &p)
            .unwrap()
            .values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let bound_ok = rep
            .rho_min_bound
            .is_some_and(|b| (b - floor).abs() <= 1e-12);
        pass &= rep.vacuum_gate_ok && bound_ok && min_rho >= floor - 1e-12;
        parts.push(format!("gamma {gamma}: min rho {min_rho:.6} >= {floor:.6}"));
    }
    outcome(pass, parts.join("; "))
}

fn main() -> ExitCode {
    let well_14 = sweep(1.4, DataMode::WellPrepared);
    let well_2 = sweep(2.0, DataMode::WellPrepared);
    let ill = sweep(1.4, DataMode::IllPrepared);
    let well = [(1.4, &well_14), (2.0, &well_2)];

    let results = [
        ("1 well-prepared rate", criterion_1(&well)),
        ("2 uniform A* bound", criterion_2(&well)),
        ("3 conservation identity", criterion_3()),
        ("4 energy balance order", criterion_4()),
        ("5 w contraction", criterion_5()),
        ("6 projection algebra", criterion_6()),
        ("7 discrete identities", criterion_7()),
        ("8 ill-prepared contrast", criterion_8(&ill)),
        ("9 vacuum gate", criterion_9()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!(
            "{} criterion {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
