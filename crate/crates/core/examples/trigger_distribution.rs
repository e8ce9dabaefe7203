//! Empirical trigger-time distribution of the bundled loss model at a few
//! thresholds, with the censored fraction and quartiles of triggered paths.
//!
//! cargo run --release --example trigger_distribution [paths]

use cococat::config::ResolvedConfig;
use cococat::loss::{trigger_samples, Severity};
use cococat::rng::Purpose;

fn main() -> cococat::Result<()> {
    let paths = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let cfg = ResolvedConfig::canonical();
    let plan = cfg.plan().with_paths(paths);
    let horizon = cfg.contract().term;
    if let Severity::Burr(b) = cfg.loss.severity {
        println!(
            "Burr severity c={} k={} scale={:e}, mean {:.4e}",
            b.c_b,
            b.k_b,
            b.zeta_b,
            cfg.loss.severity.mean().unwrap_or(f64::INFINITY)
        );
    }
    let thresholds = [1.3e10, 2.9e10, 9.5e10, 3.5e11];
    let samples = trigger_samples(&cfg.loss, &thresholds, horizon, &plan, Purpose::PhysicalLoss)?;
    println!(
        "{:>8} {:>10} {:>8} {:>8} {:>8}",
        "D", "P(tau<=T)", "q25", "median", "q75"
    );
    for s in &samples {
        let mut hit: Vec<f64> = s.taus.iter().flatten().copied().collect();
        hit.sort_by(f64::total_cmp);
        let q = |p: f64| {
            hit.get(((hit.len() as f64 - 1.0) * p) as usize)
                .copied()
                .unwrap_or(f64::NAN)
        };
        println!(
            "{:>8.1e} {:>10.4} {:>8.3} {:>8.3} {:>8.3}",
            s.threshold,
            s.cdf(horizon),
            q(0.25),
            q(0.5),
            q(0.75)
        );
    }
    Ok(())
}
