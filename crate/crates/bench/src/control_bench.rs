//! Scream.Control, OGD-DAC and the zero DAC on a piecewise tracking task.

use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use scream_core::control::{
    dynamic_policy_regret_control, fit_segment_comparators, replay_policies, run_control, ControlConfig,
    ControlRun, ControlSettings, ControllerKind, CostScale, TrackingSchedule,
};
use scream_core::dac::DacParams;
use scream_core::lds::{preset, ControlScenario, DisturbanceGenerator, DisturbanceKind};
use scream_core::linalg::sample_in_ball;
use serde::Serialize;

use crate::config::ControlBenchConfig;
use crate::oco_bench::MovementCheck;
use crate::output::{emit_csv, emit_summary, emit_table, summarize, write_json, ResultRow};
use crate::worker_pool;

/// Everything one seed of the tracking benchmark needs.
#[derive(Debug, Clone)]
pub struct TrackingInstance {
    pub scenario: ControlScenario,
    pub config: ControlConfig,
    pub disturbances: Vec<DVector<f64>>,
    pub schedule: TrackingSchedule,
    /// Best fixed DAC per segment, one entry per round.
    pub comparators: Vec<DacParams>,
}

/// Step and noisy-step disturbances without an explicit period change with the segments.
fn disturbance_kind(name: &str, horizon: usize, segments: usize) -> Result<DisturbanceKind> {
    let period = horizon.div_ceil(segments).max(1);
    Ok(match DisturbanceKind::parse(name)? {
        DisturbanceKind::PiecewiseStep { .. } if !name.contains(':') => DisturbanceKind::PiecewiseStep { period },
        DisturbanceKind::NoisyStep { noise, .. } if !name.contains(':') => DisturbanceKind::NoisyStep { period, noise },
        k => k,
    })
}

pub fn build_instance(cfg: &ControlBenchConfig, horizon: usize, seed: u64) -> Result<TrackingInstance> {
    let scenario = preset(&cfg.preset, cfg.w_bound)?;
    let sys = &scenario.system;
    let dx = sys.state_dim();
    let kind = disturbance_kind(&cfg.disturbance, horizon, cfg.segments)?;
    let disturbances = DisturbanceGenerator::new(kind, dx, cfg.w_bound, cfg.w_bound, seed)?.take_sequence(horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7A46_E7C0);
    let targets = (0..cfg.segments).map(|_| sample_in_ball(&mut rng, dx, cfg.target_radius)).collect();
    let schedule = TrackingSchedule::piecewise(targets, horizon, cfg.r)?;
    let mut settings = ControlSettings::new(
        horizon,
        CostScale::Tracking { target_bound: schedule.target_bound(), r: cfg.r },
    );
    settings.h = Some(cfg.h);
    settings.lambda_multiplier = cfg.lambda_multiplier;
    let config = ControlConfig::new(sys, &scenario.certificate, settings)?;
    let comparators = fit_segment_comparators(
        sys,
        &config.k,
        config.h,
        DVector::zeros(dx),
        &disturbances,
        &schedule,
        &schedule.segments(horizon),
        &config.feasible,
        cfg.fit_iterations,
    )?;
    Ok(TrackingInstance { scenario, config, disturbances, schedule, comparators })
}

/// `sqrt(2 D_f^2 / ((G_f^2 + lambda G_f) T))`.
pub fn ogd_dac_step(config: &ControlConfig) -> f64 {
    let c = &config.constants;
    (2.0 * c.d_f * c.d_f / ((c.g_f * c.g_f + config.lambda * c.g_f) * config.horizon as f64)).sqrt()
}

/// Result of one (algorithm, seed) cell.
#[derive(Debug, Clone)]
pub struct ControlCell {
    pub row: ResultRow,
    pub check: MovementCheck,
    pub trace: Option<(Vec<String>, Vec<Vec<f64>>)>,
}

fn zero_run(inst: &TrackingInstance) -> Result<ControlRun> {
    let sys = &inst.scenario.system;
    let zero = DacParams::zeros(inst.config.h, sys.input_dim(), sys.state_dim());
    let params = vec![zero; inst.disturbances.len()];
    let trajectory = replay_policies(
        sys,
        &inst.config.k,
        DVector::zeros(sys.state_dim()),
        &inst.disturbances,
        &inst.schedule,
        &params,
        0,
    )?;
    Ok(ControlRun { recovered: trajectory.disturbances.clone(), trajectory, params, records: Vec::new(), gradient_evaluations: 0 })
}

fn control_trace(run: &ControlRun) -> (Vec<String>, Vec<Vec<f64>>) {
    let header = ["t", "cost", "state_norm", "action_norm", "params_norm", "meta_entropy", "meta_movement"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = run
        .records
        .iter()
        .map(|r| vec![r.t as f64, r.cost, r.state_norm, r.action_norm, r.params_norm, r.meta_entropy, r.meta_movement])
        .collect();
    (header, rows)
}

pub fn run_instance_cell(cfg: &ControlBenchConfig, inst: &TrackingInstance, algorithm: &str, seed: u64) -> Result<ControlCell> {
    let start = Instant::now();
    let sys = &inst.scenario.system;
    let config = &inst.config;
    let x0 = DVector::zeros(sys.state_dim());
    let (run, check) = match algorithm {
        "scream-control" => {
            let run = run_control(config, &ControllerKind::Scream, sys, x0.clone(), &inst.disturbances, &inst.schedule)?;
            let excess = run
                .records
                .iter()
                .map(|r| r.meta_movement - config.meta_rate * r.surrogate_sup)
                .fold(f64::NEG_INFINITY, f64::max);
            (run, MovementCheck { meta_excess: Some(excess), ogd_ratio: None })
        }
        "ogd-dac" => {
            let step = ogd_dac_step(config);
            let run = run_control(config, &ControllerKind::Ogd { step }, sys, x0.clone(), &inst.disturbances, &inst.schedule)?;
            let bound = step * config.constants.g_f * config.horizon as f64;
            let ratio = run.params_movement() / bound;
            (run, MovementCheck { meta_excess: None, ogd_ratio: Some(ratio) })
        }
        "zero" => (zero_run(inst)?, MovementCheck { meta_excess: None, ogd_ratio: None }),
        other => return Err(anyhow!("unknown control algorithm {other}")),
    };
    let report = dynamic_policy_regret_control(
        sys,
        &config.k,
        x0,
        &inst.disturbances,
        &inst.schedule,
        &run,
        &inst.comparators,
        config.lambda,
    )?;
    let wall = if cfg.timing { start.elapsed().as_millis() as u64 } else { 0 };
    let row = ResultRow {
        scenario: cfg.scenario.clone(),
        algorithm: algorithm.to_string(),
        seed,
        alpha: cfg.lambda_multiplier,
        overall_loss: report.cumulative_loss + report.switching_cost,
        cumulative_loss: report.cumulative_loss,
        switching_cost: report.switching_cost,
        dynamic_regret: report.dynamic_policy_regret,
        path_length: report.path_length,
        wall_time_ms: wall,
    };
    Ok(ControlCell { row, check, trace: (cfg.trace && !run.records.is_empty()).then(|| control_trace(&run)) })
}

/// Tuning that was derived for one seed, written next to the CSVs.
#[derive(Debug, Clone, Serialize)]
pub struct ControlMetadata {
    pub preset: String,
    pub seed: u64,
    pub kappa: f64,
    pub gamma: f64,
    pub ogd_step: f64,
    pub config: ControlConfig,
}

#[derive(Debug, Clone)]
pub struct ControlOutcome {
    pub cells: Vec<ControlCell>,
    pub metadata: Vec<ControlMetadata>,
    pub failures: Vec<String>,
}

impl ControlOutcome {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.cells.iter().map(|c| c.row.clone()).collect()
    }
}

type SeedResult = (Vec<(String, Result<ControlCell>)>, Option<ControlMetadata>);

fn run_seed(cfg: &ControlBenchConfig, seed: u64) -> SeedResult {
    let inst = match build_instance(cfg, cfg.horizon, seed) {
        Ok(i) => i,
        Err(e) => {
            let cells = cfg.algorithms.iter().map(|a| (format!("{a} seed={seed}"), Err(anyhow!("{e:#}")))).collect();
            return (cells, None);
        }
    };
    let meta = ControlMetadata {
        preset: cfg.preset.clone(),
        seed,
        kappa: inst.config.kappa,
        gamma: inst.config.gamma,
        ogd_step: ogd_dac_step(&inst.config),
        config: inst.config.clone(),
    };
    let cells = cfg
        .algorithms
        .par_iter()
        .map(|a| (format!("{a} seed={seed}"), run_instance_cell(cfg, &inst, a, seed)))
        .collect();
    (cells, Some(meta))
}

/// Every (algorithm, seed) cell at the configured horizon.
pub fn run_control_benchmark(cfg: &ControlBenchConfig) -> Result<ControlOutcome> {
    let per_seed: Vec<SeedResult> = worker_pool()?.install(|| cfg.seeds.par_iter().map(|s| run_seed(cfg, *s)).collect());
    let mut out = ControlOutcome { cells: Vec::new(), metadata: Vec::new(), failures: Vec::new() };
    for (cells, meta) in per_seed {
        out.metadata.extend(meta);
        for (name, r) in cells {
            match r {
                Ok(c) => out.cells.push(c),
                Err(e) => {
                    log::error!("cell {name} failed: {e:#}");
                    out.failures.push(format!("{name}: {e:#}"));
                }
            }
        }
    }
    Ok(out)
}

pub fn write_control_outputs(cfg: &ControlBenchConfig, outcome: &ControlOutcome) -> Result<()> {
    let dir = &cfg.out_dir;
    let rows = outcome.rows();
    emit_csv(&rows, &dir.join("control_results.csv"))?;
    emit_summary(&summarize(&rows), &dir.join("control_summary.csv"))?;
    write_json(&outcome.metadata, &dir.join("control_metadata.json")).context("writing control metadata")?;
    for c in &outcome.cells {
        if let Some((header, table)) = &c.trace {
            let r = &c.row;
            let name = format!("trace_{}_{}_s{}.csv", r.scenario, r.algorithm, r.seed);
            emit_table(header, table, &dir.join(name))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ControlBenchConfig {
        ControlBenchConfig { horizon: 200, seeds: vec![1], fit_iterations: 50, ..ControlBenchConfig::default() }
    }

    #[test]
    fn step_period_follows_segments() {
        assert_eq!(
            disturbance_kind("noisy-step", 1000, 4).unwrap(),
            DisturbanceKind::NoisyStep { period: 250, noise: 0.2 }
        );
        assert_eq!(disturbance_kind("step:7", 1000, 4).unwrap(), DisturbanceKind::PiecewiseStep { period: 7 });
    }

    #[test]
    fn comparators_are_feasible_and_piecewise() {
        let inst = build_instance(&small(), 200, 3).unwrap();
        assert_eq!(inst.comparators.len(), 200);
        assert!(inst.comparators.iter().all(|m| inst.config.feasible.contains(m, 1e-9)));
        let jumps = inst.comparators.windows(2).filter(|p| p[0] != p[1]).count();
        assert!(jumps <= 4);
    }

    #[test]
    fn rows_satisfy_overall_identity() {
        let out = run_control_benchmark(&small()).unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        assert_eq!(out.cells.len(), 3);
        for c in &out.cells {
            let r = &c.row;
            assert!((r.overall_loss - r.cumulative_loss - r.switching_cost).abs() <= 1e-9 * r.overall_loss.abs().max(1.0));
            if let Some(e) = c.check.meta_excess {
                assert!(e <= 1e-9);
            }
            if let Some(q) = c.check.ogd_ratio {
                assert!(q <= 1.0);
            }
        }
    }
}
