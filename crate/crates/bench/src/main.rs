use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use scream_bench::checks;
use scream_bench::config::{ControlBenchConfig, KeyValues, OcoConfig, SysidBenchConfig};
use scream_bench::control_bench::{run_control_benchmark, write_control_outputs};
use scream_bench::oco_bench::{run_benchmark, write_outputs};
use scream_bench::output::summarize;
use scream_bench::sysid_bench::{run_sysid_benchmark, write_sysid_outputs};

/// Benchmarks for Scream, Scream.Control and explore-then-commit identification.
#[derive(Parser)]
#[command(name = "scream-bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// OGD, Ader and Scream on piecewise-stationary regression.
    OcoBench(Common),
    /// Scream.Control, OGD-DAC and the zero controller on a tracking task.
    ControlBench(Common),
    /// Identification error against the exploration length.
    SysidBench(Common),
    /// Run the acceptance checks and print one line per check.
    Verify {
        /// Only run these checks (1-8); all by default.
        #[arg(long = "check", value_delimiter = ',')]
        only: Vec<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated algorithm list.
    #[arg(long)]
    algorithms: Option<String>,
    /// Comma-separated alpha list (lambda multiplier for control-bench).
    #[arg(long)]
    alpha: Option<String>,
}

impl Common {
    fn key_values(&self, alpha_key: Option<&str>) -> Result<KeyValues> {
        let mut kv = match &self.config {
            Some(p) => KeyValues::load(p)?,
            None => KeyValues::default(),
        };
        if let Some(s) = self.seed {
            kv.set("seeds", s.to_string());
        }
        if let Some(o) = &self.out {
            kv.set("out", o.display().to_string());
        }
        if let Some(a) = &self.algorithms {
            kv.set("algorithms", a.clone());
        }
        match (&self.alpha, alpha_key) {
            (Some(a), Some(key)) => kv.set(key, a.clone()),
            (Some(_), None) => anyhow::bail!("--alpha does not apply to this subcommand"),
            _ => {}
        }
        Ok(kv)
    }
}

fn exit_for(failures: &[String]) -> ExitCode {
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("{} cell(s) failed", failures.len());
        ExitCode::from(2)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::OcoBench(c) => {
            let cfg = OcoConfig::from_kv(c.key_values(Some("alphas"))?)?;
            let out = run_benchmark(&cfg)?;
            write_outputs(&cfg, &out)?;
            for s in summarize(&out.rows()) {
                println!(
                    "{:<7} alpha={:<4} overall {:>10.3} +- {:<8.3} switching {:>9.3}",
                    s.algorithm, s.alpha, s.overall_mean, s.overall_std, s.switching_mean
                );
            }
            Ok(exit_for(&out.failures))
        }
        Command::ControlBench(c) => {
            let cfg = ControlBenchConfig::from_kv(c.key_values(Some("lambda_multiplier"))?)?;
            let out = run_control_benchmark(&cfg)?;
            write_control_outputs(&cfg, &out)?;
            for s in summarize(&out.rows()) {
                println!(
                    "{:<14} overall {:>10.3} +- {:<8.3} regret {:>10.3}",
                    s.algorithm, s.overall_mean, s.overall_std, s.regret_mean
                );
            }
            Ok(exit_for(&out.failures))
        }
        Command::SysidBench(c) => {
            if c.algorithms.is_some() {
                anyhow::bail!("--algorithms does not apply to sysid-bench");
            }
            let cfg = SysidBenchConfig::from_kv(c.key_values(None)?)?;
            let (cells, summary) = run_sysid_benchmark(&cfg)?;
            write_sysid_outputs(&cfg, &cells, &summary)?;
            for (t, (a, b)) in summary.explore_grid.iter().zip(summary.median_a_error.iter().zip(&summary.median_b_error)) {
                println!("T0={t:<7} median ||A^-A||_F {a:.4e}  ||B^-B||_F {b:.4e}");
            }
            println!("log-log slope {:.3}", summary.slope_a);
            Ok(exit_for(&summary.failures))
        }
        Command::Verify { only } => {
            let results = if only.is_empty() { checks::run_all() } else { checks::run_selected(&only) };
            for r in &results {
                println!("{r}");
            }
            Ok(if results.iter().all(|r| r.passed) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
