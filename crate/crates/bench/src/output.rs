//! Result rows, CSV emission and seed summaries.

use std::cmp::Ordering;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

/// One (scenario, algorithm, alpha, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub algorithm: String,
    pub seed: u64,
    pub alpha: f64,
    /// `cumulative_loss + switching_cost`.
    pub overall_loss: f64,
    pub cumulative_loss: f64,
    /// `lambda` times the learner's movement.
    pub switching_cost: f64,
    pub dynamic_regret: f64,
    pub path_length: f64,
    pub wall_time_ms: u64,
}

pub const RESULT_HEADER: [&str; 10] = [
    "scenario",
    "algorithm",
    "seed",
    "alpha",
    "overall_loss",
    "cumulative_loss",
    "switching_cost",
    "dynamic_regret",
    "path_length",
    "wall_time_ms",
];

/// Nine significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn row_order(a: &ResultRow, b: &ResultRow) -> Ordering {
    a.scenario
        .cmp(&b.scenario)
        .then_with(|| a.algorithm.cmp(&b.algorithm))
        .then_with(|| a.alpha.total_cmp(&b.alpha))
        .then_with(|| a.seed.cmp(&b.seed))
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(file))
}

/// Header plus rows in deterministic order.
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(row_order);
    let mut w = create(path)?;
    w.write_record(RESULT_HEADER).with_context(|| format!("writing {}", path.display()))?;
    for r in &sorted {
        w.write_record([
            r.scenario.clone(),
            r.algorithm.clone(),
            r.seed.to_string(),
            fmt_float(r.alpha),
            fmt_float(r.overall_loss),
            fmt_float(r.cumulative_loss),
            fmt_float(r.switching_cost),
            fmt_float(r.dynamic_regret),
            fmt_float(r.path_length),
            r.wall_time_ms.to_string(),
        ])
        .with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn parse_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .map(|row| row.with_context(|| format!("parsing {}", path.display())))
        .collect()
}

/// Mean and standard deviation over seeds for one (scenario, algorithm, alpha).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub algorithm: String,
    pub alpha: f64,
    pub seeds: usize,
    pub overall_mean: f64,
    pub overall_std: f64,
    pub cumulative_mean: f64,
    pub cumulative_std: f64,
    pub switching_mean: f64,
    pub switching_std: f64,
    pub regret_mean: f64,
    pub regret_std: f64,
}

/// Sample mean and (n-1) standard deviation; zero deviation for a single value.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(row_order);
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let head = &sorted[i];
        let mut j = i;
        while j < sorted.len()
            && sorted[j].scenario == head.scenario
            && sorted[j].algorithm == head.algorithm
            && sorted[j].alpha == head.alpha
        {
            j += 1;
        }
        let group = &sorted[i..j];
        let col = |f: fn(&ResultRow) -> f64| mean_std(&group.iter().map(f).collect::<Vec<_>>());
        let (om, os) = col(|r| r.overall_loss);
        let (cm, cs) = col(|r| r.cumulative_loss);
        let (sm, ss) = col(|r| r.switching_cost);
        let (rm, rs) = col(|r| r.dynamic_regret);
        out.push(SummaryRow {
            scenario: head.scenario.clone(),
            algorithm: head.algorithm.clone(),
            alpha: head.alpha,
            seeds: group.len(),
            overall_mean: om,
            overall_std: os,
            cumulative_mean: cm,
            cumulative_std: cs,
            switching_mean: sm,
            switching_std: ss,
            regret_mean: rm,
            regret_std: rs,
        });
        i = j;
    }
    out
}

pub fn emit_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_record([
        "scenario",
        "algorithm",
        "alpha",
        "seeds",
        "overall_mean",
        "overall_std",
        "cumulative_mean",
        "cumulative_std",
        "switching_mean",
        "switching_std",
        "regret_mean",
        "regret_std",
    ])?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.algorithm.clone(),
            fmt_float(r.alpha),
            r.seeds.to_string(),
            fmt_float(r.overall_mean),
            fmt_float(r.overall_std),
            fmt_float(r.cumulative_mean),
            fmt_float(r.cumulative_std),
            fmt_float(r.switching_mean),
            fmt_float(r.switching_std),
            fmt_float(r.regret_mean),
            fmt_float(r.regret_std),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Generic table writer for per-round traces: header then numeric rows.
pub fn emit_table(header: &[String], rows: &[Vec<f64>], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|x| fmt_float(*x)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(alg: &str, seed: u64, alpha: f64, loss: f64) -> ResultRow {
        ResultRow {
            scenario: "s".into(),
            algorithm: alg.into(),
            seed,
            alpha,
            overall_loss: loss + 0.5,
            cumulative_loss: loss,
            switching_cost: 0.5,
            dynamic_regret: loss / 3.0,
            path_length: 1.0 / 7.0,
            wall_time_ms: 0,
        }
    }

    fn rounded(r: &ResultRow) -> ResultRow {
        let f = |x: f64| fmt_float(x).parse::<f64>().unwrap();
        ResultRow {
            alpha: f(r.alpha),
            overall_loss: f(r.overall_loss),
            cumulative_loss: f(r.cumulative_loss),
            switching_cost: f(r.switching_cost),
            dynamic_regret: f(r.dynamic_regret),
            path_length: f(r.path_length),
            ..r.clone()
        }
    }

    #[test]
    fn empty_rows_give_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        emit_csv(&[], &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().trim(), RESULT_HEADER.join(","));
        assert!(parse_csv(&p).unwrap().is_empty());
    }

    #[test]
    fn round_trip_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let rows = vec![row("scream", 2, 0.5, 10.0 / 3.0), row("ader", 1, 1.0, 2.0), row("scream", 1, 0.5, 1e-7)];
        emit_csv(&rows, &p).unwrap();
        let back = parse_csv(&p).unwrap();
        let mut expect: Vec<ResultRow> = rows.iter().map(rounded).collect();
        expect.sort_by(row_order);
        assert_eq!(back, expect);
        let q = dir.path().join("q.csv");
        emit_csv(&back, &q).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
    }

    #[test]
    fn summary_groups_by_cell() {
        let rows = vec![row("a", 1, 0.5, 1.0), row("a", 2, 0.5, 3.0), row("b", 1, 0.5, 5.0)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].cumulative_mean, s[0].seeds), (2.0, 2));
        assert!((s[0].cumulative_std - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(s[1].cumulative_std, 0.0);
    }
}
