//! Acceptance suite: runs every criterion at full size and prints one
//! `[PASS]`/`[FAIL]` line per criterion. Exits non-zero if any fails.
//!
//! Arguments select criteria by number (`cargo test --test acceptance -- 2 3`).
//! The movement check reuses the regression and scaling runs.

use std::process::ExitCode;

use scream_bench::checks;

fn main() -> ExitCode {
    let ids: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let ids = if ids.is_empty() { (1..=8).collect() } else { ids };
    let results = checks::run_selected(&ids);
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
