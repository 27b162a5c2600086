//! Identification error against the exploration length.

use anyhow::{Context, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;
use scream_core::lds::{preset, DisturbanceGenerator, DisturbanceKind};
use scream_core::sysid::{controllability_index, identification_report, identify_system, IdentificationConfig, IdentificationReport};
use serde::Serialize;

use crate::config::SysidBenchConfig;
use crate::output::{emit_table, write_json};
use crate::worker_pool;

/// One identification run.
#[derive(Debug, Clone, Serialize)]
pub struct SysidCell {
    pub seed: u64,
    pub report: IdentificationReport,
}

/// Median errors per exploration length and the fitted log-log slope.
#[derive(Debug, Clone, Serialize)]
pub struct SysidSummary {
    pub explore_grid: Vec<usize>,
    pub median_a_error: Vec<f64>,
    pub median_b_error: Vec<f64>,
    /// Least-squares slope of `ln median ||A^ - A||_F` against `ln T_0`.
    pub slope_a: f64,
    pub failures: Vec<String>,
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Identify the preset from `T_0` rounds of uniform bounded noise.
pub fn run_sysid_cell(cfg: &SysidBenchConfig, explore_rounds: usize, seed: u64) -> Result<SysidCell> {
    let sc = preset(&cfg.preset, cfg.w_bound)?;
    let sys = &sc.system;
    let k_index = controllability_index(sys)?;
    let id_cfg = IdentificationConfig::new(explore_rounds, k_index, DMatrix::zeros(sys.input_dim(), sys.state_dim()))?;
    let dist = DisturbanceGenerator::new(DisturbanceKind::UniformBall, sys.state_dim(), cfg.w_bound, cfg.w_bound, seed)?
        .take_sequence(explore_rounds);
    let (id, moments) = identify_system(sys, &id_cfg, &dist, seed.wrapping_add(0x5EED))?;
    Ok(SysidCell { seed, report: identification_report(sys, &id, &moments) })
}

pub fn run_sysid_benchmark(cfg: &SysidBenchConfig) -> Result<(Vec<SysidCell>, SysidSummary)> {
    let jobs: Vec<(usize, u64)> = cfg.explore_grid.iter().flat_map(|&t| cfg.seeds.iter().map(move |&s| (t, s))).collect();
    let results: Vec<(String, Result<SysidCell>)> = worker_pool()?.install(|| {
        jobs.par_iter().map(|&(t, s)| (format!("T0={t} seed={s}"), run_sysid_cell(cfg, t, s))).collect()
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
    let mut median_a_error = Vec::new();
    let mut median_b_error = Vec::new();
    for &t in &cfg.explore_grid {
        let at: Vec<&SysidCell> = cells.iter().filter(|c| c.report.explore_rounds == t).collect();
        median_a_error.push(median(&at.iter().map(|c| c.report.a_error_fro).collect::<Vec<_>>()));
        median_b_error.push(median(&at.iter().map(|c| c.report.b_error_fro).collect::<Vec<_>>()));
    }
    let lx: Vec<f64> = cfg.explore_grid.iter().map(|t| (*t as f64).ln()).collect();
    let ly: Vec<f64> = median_a_error.iter().map(|e| e.ln()).collect();
    let summary = SysidSummary {
        explore_grid: cfg.explore_grid.clone(),
        median_a_error,
        median_b_error,
        slope_a: ls_slope(&lx, &ly),
        failures,
    };
    Ok((cells, summary))
}

/// `sysid_reports.json`, `sysid_summary.json` and `sysid_summary.csv`.
pub fn write_sysid_outputs(cfg: &SysidBenchConfig, cells: &[SysidCell], summary: &SysidSummary) -> Result<()> {
    let dir = &cfg.out_dir;
    write_json(&cells, &dir.join("sysid_reports.json")).context("writing identification reports")?;
    write_json(summary, &dir.join("sysid_summary.json"))?;
    let header: Vec<String> = ["explore_rounds", "median_a_error", "median_b_error"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<f64>> = summary
        .explore_grid
        .iter()
        .zip(summary.median_a_error.iter().zip(&summary.median_b_error))
        .map(|(t, (a, b))| vec![*t as f64, *a, *b])
        .collect();
    emit_table(&header, &rows, &dir.join("sysid_summary.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_slope() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let x = [0.0, 1.0, 2.0];
        assert!((ls_slope(&x, &[1.0, 0.5, 0.0]) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn small_grid_errors_shrink() {
        let cfg = SysidBenchConfig { explore_grid: vec![500, 8000], seeds: vec![1, 2, 3], ..SysidBenchConfig::default() };
        let (cells, s) = run_sysid_benchmark(&cfg).unwrap();
        assert_eq!(cells.len(), 6);
        assert!(s.failures.is_empty());
        assert!(s.median_a_error[1] < s.median_a_error[0]);
    }
}
