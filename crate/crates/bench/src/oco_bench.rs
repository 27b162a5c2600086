//! OGD, Ader and Scream on the piecewise-stationary regression stream.

use std::time::Instant;

use anyhow::{anyhow, Result};
use rayon::prelude::*;
use scream_core::oco::SquareLoss;
use scream_core::scream::{ogd_default_step, run_ader, run_ogd_memory, run_scream, RunOutput, ScreamConfig};

use crate::config::OcoConfig;
use crate::output::{emit_csv, emit_summary, emit_table, summarize, ResultRow};
use crate::scenario::gen_piecewise_regression;
use crate::worker_pool;

/// Movement bounds measured on one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MovementCheck {
    /// `max_t ||p_{t+1} - p_t||_1 - eps max_i |l_{t,i}|`; `None` without a meta-learner.
    pub meta_excess: Option<f64>,
    /// Cumulative switching over `eta G T`; `None` for meta-learners.
    pub ogd_ratio: Option<f64>,
}

/// Row, movement check and (optionally) the per-round trace of one cell.
#[derive(Debug, Clone)]
pub struct OcoCell {
    pub row: ResultRow,
    pub check: MovementCheck,
    pub trace: Option<(Vec<String>, Vec<Vec<f64>>)>,
}

#[derive(Debug, Clone)]
pub struct OcoOutcome {
    pub cells: Vec<OcoCell>,
    pub failures: Vec<String>,
}

impl OcoOutcome {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.cells.iter().map(|c| c.row.clone()).collect()
    }
}

fn movement_check(out: &RunOutput<SquareLoss>, eta_g_t: Option<f64>) -> MovementCheck {
    match (out.meta_rate, eta_g_t) {
        (Some(eps), _) => MovementCheck {
            meta_excess: Some(
                out.records
                    .iter()
                    .map(|r| r.meta_movement - eps * r.surrogate_sup)
                    .fold(f64::NEG_INFINITY, f64::max),
            ),
            ogd_ratio: None,
        },
        (None, Some(bound)) => MovementCheck { meta_excess: None, ogd_ratio: Some(out.movement() / bound) },
        (None, None) => MovementCheck { meta_excess: None, ogd_ratio: None },
    }
}

fn trace_table(out: &RunOutput<SquareLoss>) -> (Vec<String>, Vec<Vec<f64>>) {
    let n = out.records.first().map_or(0, |r| r.weights.len());
    let mut header: Vec<String> = ["t", "decision_norm", "loss", "switching"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=n).map(|i| format!("p_{i}")));
    let rows = out
        .records
        .iter()
        .map(|r| {
            let mut v = vec![r.t as f64, r.decision_norm, r.loss, r.switching];
            v.extend(&r.weights);
            v
        })
        .collect();
    (header, rows)
}

/// Run one (algorithm, alpha, seed) cell.
pub fn run_cell(config: &OcoConfig, algorithm: &str, alpha: f64, seed: u64) -> Result<OcoCell> {
    let start = Instant::now();
    let mut sc = gen_piecewise_regression(config, seed)?;
    let lambda = alpha * config.grad_bound;
    let cfg = ScreamConfig::with_lambda(config.horizon, config.grad_bound, sc.domain, lambda)?;
    let (out, eta_g_t) = match algorithm {
        "scream" => (run_scream(&cfg, &mut sc.stream)?, None),
        "ader" => (run_ader(&cfg, &mut sc.stream)?, None),
        "ogd" => {
            let eta = ogd_default_step(&cfg);
            (run_ogd_memory(&cfg, &mut sc.stream, Some(eta))?, Some(eta * config.grad_bound * config.horizon as f64))
        }
        other => return Err(anyhow!("unknown algorithm {other}")),
    };
    let report = out.report(&sc.comparators, lambda)?;
    let wall = if config.timing { start.elapsed().as_millis() as u64 } else { 0 };
    let row = ResultRow {
        scenario: config.scenario.clone(),
        algorithm: algorithm.to_string(),
        seed,
        alpha,
        overall_loss: report.cumulative_loss + report.switching_cost,
        cumulative_loss: report.cumulative_loss,
        switching_cost: report.switching_cost,
        dynamic_regret: report.dynamic_policy_regret,
        path_length: report.path_length,
        wall_time_ms: wall,
    };
    Ok(OcoCell {
        row,
        check: movement_check(&out, eta_g_t),
        trace: config.trace.then(|| trace_table(&out)),
    })
}

/// Every (algorithm, alpha, seed) cell on the worker pool; failures are collected, not fatal.
pub fn run_benchmark(config: &OcoConfig) -> Result<OcoOutcome> {
    let mut jobs = Vec::new();
    for a in &config.algorithms {
        for &alpha in &config.alphas {
            for &seed in &config.seeds {
                jobs.push((a.clone(), alpha, seed));
            }
        }
    }
    let results: Vec<(String, Result<OcoCell>)> = worker_pool()?.install(|| {
        jobs.par_iter()
            .map(|(a, alpha, seed)| (format!("{a} alpha={alpha} seed={seed}"), run_cell(config, a, *alpha, *seed)))
            .collect()
    });
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for (name, r) in results {
        match r {
            Ok(c) => cells.push(c),
            Err(e) => {
                log::error!("cell {name} failed: {e:#}");
                failures.push(format!("{name}: {e:#}"));
            }
        }
    }
    Ok(OcoOutcome { cells, failures })
}

/// `results.csv`, `summary.csv` and optional `trace_*.csv` under the output directory.
pub fn write_outputs(config: &OcoConfig, outcome: &OcoOutcome) -> Result<()> {
    let dir = &config.out_dir;
    let rows = outcome.rows();
    emit_csv(&rows, &dir.join("results.csv"))?;
    emit_summary(&summarize(&rows), &dir.join("summary.csv"))?;
    for c in &outcome.cells {
        if let Some((header, table)) = &c.trace {
            let r = &c.row;
            let name = format!("trace_{}_{}_a{}_s{}.csv", r.scenario, r.algorithm, r.alpha, r.seed);
            emit_table(header, table, &dir.join(name))?;
        }
    }
    Ok(())
}
