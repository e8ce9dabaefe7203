//! Threshold sweep under three conversion rules with common random numbers,
//! written as CSV to stdout.
//!
//! cargo run --release --example sweep_threshold [paths] > sweep.csv

use cococat::config::ResolvedConfig;
use cococat::pricing::PricingOptions;
use cococat::sweep::{run_sweep, write_sweep_csv, SweepSpec};

fn main() -> cococat::Result<()> {
    let paths: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let mut spec = SweepSpec::from_json(include_str!("../configs/sweep_threshold.json"))?;
    spec.paths = Some(paths);
    let rows = run_sweep(&ResolvedConfig::canonical(), &spec, PricingOptions::default())?;
    write_sweep_csv(&rows, std::io::stdout().lock())
}
