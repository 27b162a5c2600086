//! Acceptance checks shared by the `verify` subcommand and the acceptance tests.
//!
//! Each check returns a [`CheckOutcome`] with a one-line detail; none of them
//! panics on a failed property.

use std::fmt;

use anyhow::Result;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scream_core::control::{run_control, ControlConfig, ControlSettings, ControllerKind, CostScale};
use scream_core::dac::{
    dac_action, finite_difference_gradient, project_to_dac_set, simulate_dac, state_via_transfer, truncated_point,
    unary_truncated_gradient, ClosedLoop, ControlCost, DacFeasibleSet, DacParams, DisturbanceWindow,
    QuadraticTrackingCost,
};
use scream_core::lds::{
    certify_minimal, preset, random_stable_system, DisturbanceGenerator, DisturbanceKind, PRESET_NAMES,
};
use scream_core::linalg::sample_in_ball;
use scream_core::oco::{CountingStream, DomainBall, VecStream, WindowSquareLoss};
use scream_core::omd::Hedge;
use scream_core::scream::{nonuniform_prior, run_scream, ScreamConfig};
use scream_core::sysid::{
    controllability_index, run_unknown_pipeline, IdentificationConfig, IdentificationMode, IdentifiedSystem,
};
use scream_core::control::{run_control_with_model, TrackingSchedule};

use crate::config::{default_seeds, ControlBenchConfig, OcoConfig, SysidBenchConfig};
use crate::control_bench::{build_instance, run_instance_cell, ControlCell};
use crate::oco_bench::{run_benchmark, run_cell, MovementCheck, OcoCell, OcoOutcome};
use crate::output::summarize;
use crate::sysid_bench::{median, run_sysid_benchmark};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}. {}: {}", self.id, self.name, self.detail)
    }
}

fn outcome(id: usize, name: &'static str, result: Result<(bool, String)>) -> CheckOutcome {
    match result {
        Ok((passed, detail)) => CheckOutcome { id, name, passed, detail },
        Err(e) => CheckOutcome { id, name, passed: false, detail: format!("error: {e:#}") },
    }
}

// ---------------------------------------------------------------- 1

pub const ORDERING: &str = "overall-loss ordering on piecewise regression";

pub fn ordering_benchmark() -> Result<OcoOutcome> {
    run_benchmark(&OcoConfig::default())
}

pub fn check_ordering(out: &OcoOutcome) -> CheckOutcome {
    outcome(1, ORDERING, ordering_verdict(out))
}

fn ordering_verdict(out: &OcoOutcome) -> Result<(bool, String)> {
    if !out.failures.is_empty() {
        return Ok((false, format!("cell failures: {:?}", out.failures)));
    }
    let summary = summarize(&out.rows());
    let get = |alg: &str, alpha: f64| {
        summary
            .iter()
            .find(|s| s.algorithm == alg && s.alpha == alpha)
            .map(|s| (s.overall_mean, s.switching_mean))
            .ok_or_else(|| anyhow::anyhow!("missing summary for {alg} alpha={alpha}"))
    };
    let mut fails = Vec::new();
    let mut parts = Vec::new();
    for (k, alpha) in [0.1, 0.5, 1.0].into_iter().enumerate() {
        let (o, _) = get("ogd", alpha)?;
        let (a, asw) = get("ader", alpha)?;
        let (s, ssw) = get("scream", alpha)?;
        parts.push(format!("a={alpha}: ogd {o:.2} ader {a:.2} scream {s:.2}"));
        let ok = match k {
            0 => a <= 1.05 * s && s < o,
            1 => s < o && s < a,
            _ => o <= 1.05 * s && s < a,
        };
        if !ok {
            fails.push(format!("ordering at alpha={alpha}"));
        }
        if alpha >= 0.5 && asw < 3.0 * ssw {
            fails.push(format!("ader switching {asw:.2} < 3 x scream {ssw:.2} at alpha={alpha}"));
        }
    }
    let mut detail = parts.join("; ");
    if !fails.is_empty() {
        detail = format!("{detail}; violated: {}", fails.join(", "));
    }
    Ok((fails.is_empty(), detail))
}

// ---------------------------------------------------------------- 2

pub const TRANSFER: &str = "transfer-matrix state equals direct simulation";

pub fn check_transfer_equivalence(systems: usize, seed: u64) -> CheckOutcome {
    outcome(2, TRANSFER, transfer_verdict(systems, seed))
}

fn transfer_verdict(systems: usize, seed: u64) -> Result<(bool, String)> {
    let (h, horizon, w_bound) = (4, 60, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..systems {
        let sys = random_stable_system(&mut rng, 3, 2, 0.9, w_bound)?;
        let k = DMatrix::zeros(2, 3);
        let cert = certify_minimal(&sys, &k)?;
        let set = DacFeasibleSet::new(sys.kappa_b, cert.kappa, cert.gamma, h)?;
        let history: Vec<DacParams> = (0..horizon).map(|_| set.sample(&mut rng, 2, 3)).collect();
        let w: Vec<DVector<f64>> = (0..horizon).map(|_| sample_in_ball(&mut rng, 3, w_bound)).collect();
        let direct = simulate_dac(&sys, &k, &history, &w)?;
        let cl = ClosedLoop::new(&sys, &k, horizon)?;
        for (t, x) in direct.iter().enumerate() {
            let via = state_via_transfer(&cl, &history, &w, t)?;
            let rel = (&via - x).norm() / x.norm().max(1e-300);
            if t > 0 {
                worst = worst.max(rel);
            }
        }
    }
    Ok((worst <= 1e-8, format!("{systems} systems, max relative error {worst:.3e} (tol 1e-8)")))
}

// ---------------------------------------------------------------- 3

pub const TRUNCATION: &str = "truncation error bounds";

pub fn check_truncation_bounds(rounds: usize, seed: u64) -> CheckOutcome {
    outcome(3, TRUNCATION, truncation_verdict(rounds, seed))
}

fn truncation_verdict(rounds: usize, seed: u64) -> Result<(bool, String)> {
    let w_bound = 0.5;
    let mut violations = 0;
    let mut cases = 0;
    let mut worst_state = 0.0f64;
    let mut worst_loss = 0.0f64;
    for name in PRESET_NAMES {
        for h in [2usize, 5, 10] {
            for kind in [DisturbanceKind::UniformBall, DisturbanceKind::AdversarialSign] {
                cases += 1;
                let sc = preset(name, w_bound)?;
                let sys = &sc.system;
                let (du, dx) = (sys.input_dim(), sys.state_dim());
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (h as u64) << 8 ^ cases as u64);
                let target = sample_in_ball(&mut rng, dx, 1.0);
                let mut settings = ControlSettings::new(rounds, CostScale::Tracking { target_bound: target.norm(), r: 0.1 });
                settings.h = Some(h);
                let cfg = ControlConfig::new(sys, &sc.certificate, settings)?;
                let decay = (1.0 - cfg.gamma).powi(h as i32 + 1);
                let d = cfg.constants.d;
                let state_bound = cfg.kappa.powi(2) * decay * d;
                let loss_bound = 2.0 * cfg.g_c * d * d * cfg.kappa.powi(3) * decay;
                let cost = QuadraticTrackingCost::new(target, 0.1);
                let history: Vec<DacParams> = (0..rounds).map(|_| cfg.feasible.sample(&mut rng, du, dx)).collect();
                let w = DisturbanceGenerator::new(kind.clone(), dx, w_bound, w_bound, seed + cases as u64)?.take_sequence(rounds);
                let xs = simulate_dac(sys, &cfg.k, &history, &w)?;
                let cl = ClosedLoop::new(sys, &cfg.k, h)?;
                let mut window = DisturbanceWindow::for_memory(h, dx);
                for t in 0..rounds {
                    let params: Vec<DacParams> =
                        (0..h + 2).map(|i| history[(t + i).saturating_sub(h + 1)].clone()).collect();
                    let (y, v) = truncated_point(&cl, &params, &window)?;
                    let u = dac_action(&cfg.k, &history[t], &xs[t], &window)?;
                    let gap_x = (&xs[t] - &y).norm();
                    let gap_c = (cost.eval(&xs[t], &u) - cost.eval(&y, &v)).abs();
                    worst_state = worst_state.max(gap_x / state_bound);
                    worst_loss = worst_loss.max(gap_c / loss_bound);
                    if gap_x > state_bound * (1.0 + 1e-9) || gap_c > loss_bound * (1.0 + 1e-9) {
                        violations += 1;
                    }
                    window.push(w[t].clone())?;
                }
            }
        }
    }
    Ok((
        violations == 0,
        format!(
            "{cases} runs x {rounds} rounds, {violations} violations; max gap/bound state {worst_state:.3e}, loss {worst_loss:.3e}"
        ),
    ))
}

// ---------------------------------------------------------------- 4

pub const GRADIENTS: &str = "analytic gradient matches central differences";

pub fn check_gradients(instances: usize, seed: u64) -> CheckOutcome {
    outcome(4, GRADIENTS, gradient_verdict(instances, seed))
}

/// Entrywise relative error `|g - g_fd| / max(|g_fd|, 1e-3 max|g_fd|)`: the floor
/// keeps near-zero entries from dividing by roundoff.
pub fn gradient_relative_error(analytic: &DVector<f64>, numeric: &DVector<f64>) -> f64 {
    let scale = numeric.amax();
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, b)| (a - b).abs() / b.abs().max(1e-3 * scale).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

fn gradient_verdict(instances: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let dx = rng.random_range(1..=4);
        let du = rng.random_range(1..=3);
        let h = rng.random_range(1..=5);
        let w_bound = 1.0;
        let sys = random_stable_system(&mut rng, dx, du, 0.8, w_bound)?;
        let k = DMatrix::zeros(du, dx);
        let cert = certify_minimal(&sys, &k)?;
        let set = DacFeasibleSet::new(sys.kappa_b, cert.kappa, cert.gamma, h)?;
        let m = set.sample(&mut rng, du, dx);
        let mut window = DisturbanceWindow::for_memory(h, dx);
        for _ in 0..2 * h + 1 {
            window.push(sample_in_ball(&mut rng, dx, w_bound))?;
        }
        let cl = ClosedLoop::new(&sys, &k, h)?;
        let cost = QuadraticTrackingCost::new(sample_in_ball(&mut rng, dx, 1.0), rng.random_range(0.01..1.0));
        let g = unary_truncated_gradient(&cost, &cl, &m, &window)?.to_vector();
        let fd = finite_difference_gradient(&cost, &cl, &m, &window)?.to_vector();
        worst = worst.max(gradient_relative_error(&g, &fd));
    }
    Ok((worst <= 1e-5, format!("{instances} instances, max entrywise relative error {worst:.3e} (tol 1e-5)")))
}

// ---------------------------------------------------------------- 5

pub const MOVEMENT: &str = "mirror-descent movement bounds on every benchmark run";

pub fn check_movement_bounds(checks: &[(String, MovementCheck)]) -> CheckOutcome {
    let mut bad = Vec::new();
    let mut worst_meta = f64::NEG_INFINITY;
    let mut worst_ogd = 0.0f64;
    for (name, c) in checks {
        if let Some(e) = c.meta_excess {
            worst_meta = worst_meta.max(e);
            if e > 1e-9 {
                bad.push(name.clone());
            }
        }
        if let Some(r) = c.ogd_ratio {
            worst_ogd = worst_ogd.max(r);
            if r > 1.0 {
                bad.push(name.clone());
            }
        }
    }
    let detail = format!(
        "{} runs; max meta excess {worst_meta:.3e} (tol 1e-9), max OGD switching / (eta G T) {worst_ogd:.3e}{}",
        checks.len(),
        if bad.is_empty() { String::new() } else { format!("; violated by {bad:?}") }
    );
    CheckOutcome { id: 5, name: MOVEMENT, passed: bad.is_empty() && !checks.is_empty(), detail }
}

pub fn oco_movement(cells: &[OcoCell]) -> Vec<(String, MovementCheck)> {
    cells
        .iter()
        .map(|c| (format!("{} alpha={} seed={}", c.row.algorithm, c.row.alpha, c.row.seed), c.check.clone()))
        .collect()
}

pub fn control_movement(cells: &[ControlCell]) -> Vec<(String, MovementCheck)> {
    cells
        .iter()
        .map(|c| (format!("{} seed={}", c.row.algorithm, c.row.seed), c.check.clone()))
        .collect()
}

// ---------------------------------------------------------------- 6

pub const SCALING: &str = "dynamic regret / sqrt(T (1 + P_T)) stays flat";

pub const SCALING_GRID: [usize; 3] = [2000, 8000, 32000];

/// Median ratios per horizon and every cell that produced them.
#[derive(Debug, Clone)]
pub struct ScalingRuns {
    pub oco_ratios: Vec<f64>,
    pub control_ratios: Vec<f64>,
    pub oco_cells: Vec<OcoCell>,
    pub control_cells: Vec<ControlCell>,
}

/// Scream on 5-segment regression at `alpha = 0.5`, regret measured on the
/// memory loss `f_t(w_t) + lambda ||w_t - w_{t-1}||`, and Scream.Control on
/// the default tracking scenario.
pub fn scaling_runs(seeds: u64) -> Result<ScalingRuns> {
    let mut runs = ScalingRuns { oco_ratios: Vec::new(), control_ratios: Vec::new(), oco_cells: Vec::new(), control_cells: Vec::new() };
    for &t in &SCALING_GRID {
        let oco = OcoConfig { horizon: t, change_period: t / 5, seeds: default_seeds(seeds), ..OcoConfig::default() };
        let alpha = 0.5;
        let lambda = alpha * oco.grad_bound;
        let mut ratios = Vec::new();
        for &s in &oco.seeds {
            let cell = run_cell(&oco, "scream", alpha, s)?;
            let r = &cell.row;
            let regret = r.dynamic_regret + r.switching_cost - lambda * r.path_length;
            ratios.push(regret / (t as f64 * (1.0 + r.path_length)).sqrt());
            runs.oco_cells.push(cell);
        }
        runs.oco_ratios.push(median(&ratios));

        let ctl = ControlBenchConfig { horizon: t, seeds: default_seeds(seeds), ..ControlBenchConfig::default() };
        let mut ratios = Vec::new();
        for &s in &ctl.seeds {
            let inst = build_instance(&ctl, t, s)?;
            let cell = run_instance_cell(&ctl, &inst, "scream-control", s)?;
            let r = &cell.row;
            ratios.push(r.dynamic_regret / (t as f64 * (1.0 + r.path_length)).sqrt());
            runs.control_cells.push(cell);
        }
        runs.control_ratios.push(median(&ratios));
    }
    Ok(runs)
}

/// `r_{k+1} <= r_k + 0.25 |r_k|` for consecutive grid points.
pub fn ratios_flat(r: &[f64]) -> bool {
    r.windows(2).all(|p| p[1].is_finite() && p[1] <= p[0] + 0.25 * p[0].abs())
}

pub fn check_scaling(runs: &Result<ScalingRuns>) -> CheckOutcome {
    let verdict = match runs {
        Ok(r) => {
            let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" -> ");
            Ok((
                ratios_flat(&r.oco_ratios) && ratios_flat(&r.control_ratios),
                format!("T = {SCALING_GRID:?}; scream {}; scream-control {}", fmt(&r.oco_ratios), fmt(&r.control_ratios)),
            ))
        }
        Err(e) => Err(anyhow::anyhow!("{e:#}")),
    };
    outcome(6, SCALING, verdict)
}

// ---------------------------------------------------------------- 7

pub const IDENTIFICATION: &str = "identification rate and exact-model injection";

pub fn check_identification(seeds: u64) -> CheckOutcome {
    outcome(7, IDENTIFICATION, identification_verdict(seeds))
}

fn identification_verdict(seeds: u64) -> Result<(bool, String)> {
    let cfg = SysidBenchConfig { seeds: default_seeds(seeds), ..SysidBenchConfig::default() };
    let (_, summary) = run_sysid_benchmark(&cfg)?;
    let slope_ok = summary.failures.is_empty() && (-0.8..=-0.3).contains(&summary.slope_a);
    let injected = injection_is_exact()?;
    Ok((
        slope_ok && injected,
        format!(
            "median ||A^-A||_F {:?}, slope {:.3} (want [-0.8, -0.3]); injected phase 2 bit-identical: {injected}",
            summary.median_a_error.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>(),
            summary.slope_a
        ),
    ))
}

/// With the true system injected, phase 2 of the pipeline must replay the
/// known-system controller bit for bit.
pub fn injection_is_exact() -> Result<bool> {
    let sc = preset("stable3x2", 0.2)?;
    let sys = &sc.system;
    let (horizon, t0) = (600, 100);
    let k = DMatrix::zeros(sys.input_dim(), sys.state_dim());
    let id_cfg = IdentificationConfig::new(t0, controllability_index(sys)?, k.clone())?;
    let w = DisturbanceGenerator::new(DisturbanceKind::UniformBall, 3, 0.2, 0.2, 11)?.take_sequence(horizon);
    let costs = TrackingSchedule::piecewise(
        vec![DVector::from_vec(vec![0.5, 0.0, 0.0]), DVector::from_vec(vec![0.0, -0.5, 0.2])],
        horizon,
        0.1,
    )?;
    let mut settings = ControlSettings::new(horizon, CostScale::Tracking { target_bound: 0.5385, r: 0.1 });
    settings.h = Some(4);
    let pipe = run_unknown_pipeline(
        sys,
        &id_cfg,
        IdentificationMode::Inject(IdentifiedSystem::exact(sys, &k)),
        settings,
        &ControllerKind::Scream,
        &w,
        &costs,
        5,
    )?;
    let known_cfg = ControlConfig::new(sys, &certify_minimal(sys, &k)?, ControlSettings { horizon: horizon - t0, ..settings })?;
    let x_start = pipe.exploration.trajectory.states.last().expect("non-empty").clone();
    let known = run_control_with_model(&known_cfg, &ControllerKind::Scream, sys, sys, x_start, &w[t0..], &costs, t0)?;
    Ok(pipe.control.trajectory == known.trajectory && pipe.control.params == known.params)
}

// ---------------------------------------------------------------- 8

pub const STRUCTURE: &str = "structural properties on randomized sweeps";

pub fn check_structure(cases: usize, seed: u64) -> CheckOutcome {
    outcome(8, STRUCTURE, structure_verdict(cases, seed))
}

fn random_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    let v = DVector::from_fn(n, |_, _| -rng.random::<f64>().max(1e-300).ln());
    let s = v.sum();
    v / s
}

fn structure_verdict(cases: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fails: Vec<String> = Vec::new();
    let mut note = |ok: bool, what: &str| {
        if !ok && !fails.iter().any(|f| f == what) {
            fails.push(what.to_string());
        }
    };
    for case in 0..cases {
        // Hedge keeps a distribution under arbitrary bounded losses.
        let n = rng.random_range(1..=12);
        let mut hedge = Hedge::new(&nonuniform_prior(n), rng.random_range(0.0..5.0))?;
        for _ in 0..5 {
            let losses = DVector::from_fn(n, |_, _| rng.random_range(-50.0..50.0));
            hedge.step(&losses)?;
            let p = hedge.weights();
            note(p.iter().all(|x| *x >= 0.0) && (p.sum() - 1.0).abs() <= 1e-12, "simplex preservation");
        }

        // Prior normalisation.
        let p = nonuniform_prior(case + 1);
        note((p.sum() - 1.0).abs() <= 1e-12, "prior normalisation");

        // Ball projection: feasible, idempotent, no sampled feasible point is closer.
        let dim = rng.random_range(1..=8);
        let domain = DomainBall::new(dim, rng.random_range(0.5..4.0))?;
        let x = sample_in_ball(&mut rng, dim, 3.0 * domain.radius());
        let px = domain.project(&x);
        note(domain.contains(&px, 1e-12), "ball projection feasibility");
        note((domain.project(&px) - &px).norm() <= 1e-12, "ball projection idempotence");
        let dist = (&x - &px).norm();
        for _ in 0..10 {
            let s = sample_in_ball(&mut rng, dim, domain.radius());
            note(dist <= (&x - &s).norm() + 1e-12, "ball projection optimality");
        }

        // DAC-set projection.
        let (du, dx, h) = (rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=4));
        let set = DacFeasibleSet::new(rng.random_range(0.5..2.0), rng.random_range(1.0..1.5), rng.random_range(0.1..0.9), h)?;
        let blocks = (0..h).map(|_| scream_core::linalg::uniform_matrix(&mut rng, du, dx) * rng.random_range(0.0..6.0)).collect();
        let m = DacParams::new(blocks)?;
        let pm = project_to_dac_set(&m, &set)?;
        note(set.contains(&pm, 1e-9), "DAC projection feasibility");
        note(project_to_dac_set(&pm, &set)?.distance(&pm) <= 1e-9, "DAC projection idempotence");
        let d = m.distance(&pm);
        for _ in 0..10 {
            note(d <= m.distance(&set.sample(&mut rng, du, dx)) + 1e-9, "DAC projection optimality");
        }

        // Switching cost of the combined decision.
        let n = rng.random_range(1..=8);
        let dim = rng.random_range(1..=6);
        let diameter = rng.random_range(0.5..4.0);
        let prev: Vec<DVector<f64>> = (0..n).map(|_| sample_in_ball(&mut rng, dim, diameter / 2.0)).collect();
        let next: Vec<DVector<f64>> = (0..n).map(|_| sample_in_ball(&mut rng, dim, diameter / 2.0)).collect();
        let (p0, p1) = (random_simplex(&mut rng, n), random_simplex(&mut rng, n));
        let combine = |p: &DVector<f64>, w: &[DVector<f64>]| w.iter().zip(p.iter()).fold(DVector::zeros(dim), |acc, (x, pi)| acc + x * *pi);
        let lhs = (combine(&p1, &next) - combine(&p0, &prev)).norm();
        let rhs = diameter * (&p1 - &p0).lp_norm(1)
            + next.iter().zip(&prev).zip(p1.iter()).map(|((a, b), pi)| pi * (a - b).norm()).sum::<f64>();
        note(lhs <= rhs + 1e-12, "switching cost decomposition");

        // One gradient per round, whatever the pool size.
        let horizon = rng.random_range(1..=25);
        let memory = rng.random_range(0..=2);
        let losses: Vec<WindowSquareLoss> = (0..horizon)
            .map(|_| {
                let weights = random_simplex(&mut rng, memory + 1).as_slice().to_vec();
                WindowSquareLoss::new(sample_in_ball(&mut rng, 3, 1.0), rng.random_range(-1.0..1.0), weights)
            })
            .collect::<scream_core::Result<_>>()?;
        let cfg = ScreamConfig::for_memory(horizon, memory, 2.0, 4.0, DomainBall::new(3, 2.0)?)?;
        let mut stream = CountingStream::new(VecStream::new(3, losses));
        let out = run_scream(&cfg, &mut stream)?;
        note(stream.gradient_calls() == horizon && out.gradient_evaluations == horizon, "one gradient per round (OCO)");
    }
    // Control counter on a handful of runs; each costs a full closed loop.
    for case in 0..cases.min(50) {
        let sc = preset(PRESET_NAMES[case % PRESET_NAMES.len()], 0.3)?;
        let h = 1 + case % 4;
        let horizon = 10 + case;
        let mut settings = ControlSettings::new(horizon, CostScale::Fixed(1.0));
        settings.h = Some(h);
        let cfg = ControlConfig::new(&sc.system, &sc.certificate, settings)?;
        let dx = sc.system.state_dim();
        let w = DisturbanceGenerator::new(DisturbanceKind::UniformBall, dx, 0.3, 0.3, case as u64)?.take_sequence(horizon);
        let costs = vec![QuadraticTrackingCost::new(DVector::from_element(dx, 0.2), 0.1); horizon];
        let run = run_control(&cfg, &ControllerKind::Scream, &sc.system, DVector::zeros(dx), &w, &costs)?;
        note(run.gradient_evaluations == horizon.saturating_sub(h), "one gradient per round (control)");
    }
    let detail = if fails.is_empty() {
        format!("{cases} cases each: simplex, prior, ball and DAC projections, switching decomposition, gradient counters")
    } else {
        format!("violated: {}", fails.join(", "))
    };
    Ok((fails.is_empty(), detail))
}

/// Every check at full size, in order.
pub fn run_all() -> Vec<CheckOutcome> {
    run_selected(&[1, 2, 3, 4, 5, 6, 7, 8])
}

/// The listed checks at full size, in ascending order. The movement check
/// reuses the ordering and scaling runs when they are selected too.
pub fn run_selected(ids: &[usize]) -> Vec<CheckOutcome> {
    let want = |i: usize| ids.contains(&i);
    let oco = (want(1) || want(5)).then(ordering_benchmark);
    let scaling = (want(5) || want(6)).then(|| scaling_runs(10));
    let mut out = Vec::new();
    if let Some(o) = &oco {
        if want(1) {
            out.push(match o {
                Ok(o) => check_ordering(o),
                Err(e) => outcome(1, ORDERING, Err(anyhow::anyhow!("{e:#}"))),
            });
        }
    }
    if want(2) {
        out.push(check_transfer_equivalence(50, 1));
    }
    if want(3) {
        out.push(check_truncation_bounds(400, 2));
    }
    if want(4) {
        out.push(check_gradients(100, 3));
    }
    if want(5) {
        let mut movement = Vec::new();
        match &oco {
            Some(Ok(o)) => movement.extend(oco_movement(&o.cells)),
            Some(Err(e)) => movement.push(failed_run(format!("ordering benchmark: {e:#}"))),
            None => {}
        }
        match &scaling {
            Some(Ok(s)) => {
                movement.extend(oco_movement(&s.oco_cells));
                movement.extend(control_movement(&s.control_cells));
            }
            Some(Err(e)) => movement.push(failed_run(format!("scaling runs: {e:#}"))),
            None => {}
        }
        movement.extend(control_bench_movement());
        out.push(check_movement_bounds(&movement));
    }
    if let Some(s) = &scaling {
        if want(6) {
            out.push(check_scaling(s));
        }
    }
    if want(7) {
        out.push(check_identification(20));
    }
    if want(8) {
        out.push(check_structure(1000, 8));
    }
    out
}

/// A run that could not be measured counts as a violation.
fn failed_run(name: String) -> (String, MovementCheck) {
    (name, MovementCheck { meta_excess: Some(f64::INFINITY), ogd_ratio: None })
}

/// Movement checks of the default control benchmark at a short horizon, all algorithms.
pub fn control_bench_movement() -> Vec<(String, MovementCheck)> {
    let cfg = ControlBenchConfig { horizon: 2000, seeds: default_seeds(3), ..ControlBenchConfig::default() };
    match crate::control_bench::run_control_benchmark(&cfg) {
        Ok(o) => {
            let mut v = control_movement(&o.cells);
            v.extend(o.failures.iter().cloned().map(failed_run));
            v
        }
        Err(e) => vec![failed_run(format!("control benchmark: {e:#}"))],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatness_rule() {
        assert!(ratios_flat(&[1.0, 1.25, 1.5]));
        assert!(!ratios_flat(&[1.0, 1.3]));
        assert!(ratios_flat(&[-1.0, -0.8]));
        assert!(!ratios_flat(&[-1.0, -0.7]));
    }

    #[test]
    fn relative_error_floors_tiny_entries() {
        let a = DVector::from_vec(vec![1.0, 1e-12]);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        assert!(gradient_relative_error(&a, &b) < 1e-8);
    }

    #[test]
    fn small_sweeps_pass() {
        assert!(check_transfer_equivalence(3, 7).passed);
        assert!(check_gradients(10, 7).passed);
        let s = check_structure(30, 7);
        assert!(s.passed, "{s}");
    }
}
