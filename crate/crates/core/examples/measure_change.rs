//! Martingale checks behind the change of measure: the catastrophe share
//! factor has mean one, the discounted share has mean `S0`, and the tilted
//! severity is again exponential when the physical one is.
//!
//! cargo run --release --example measure_change [paths]

use cococat::config::ResolvedConfig;
use cococat::loss::{tilt_model, IntensityParams, LossModel, Severity};
use cococat::oracle::{martingale_means, DEFAULT_DT};
use cococat::rng::{path_rng, Purpose};
use cococat::stats::{ks_pvalue, ks_statistic};

fn main() -> cococat::Result<()> {
    let paths = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let cfg = ResolvedConfig::canonical();
    let plan = cfg.plan().with_paths(paths);
    let times = [1.0, 5.0];
    println!("alpha = {:e}, kappa = {:.6e}", cfg.alpha, cfg.kappa);
    for (t, (sc, bs)) in times.iter().zip(martingale_means(&cfg, &times, &plan, DEFAULT_DT)?) {
        println!(
            "t = {t}: E[S_C] = {:.5} (z {:+.2}), E[B S] = {:.4} (z {:+.2})",
            sc.mean,
            (sc.mean - 1.0) / sc.se,
            bs.mean,
            (bs.mean - cfg.market().s0) / bs.se
        );
    }

    let base = LossModel::new(IntensityParams::constant(1.0), Severity::exponential(1.0)?);
    let tilted = tilt_model(&base, 0.6, 0.5)?;
    let rate = 1.0 + tilted.tilt_rate();
    let mut rng = path_rng(plan.seed, Purpose::Auxiliary(0), 0);
    let xs: Vec<f64> = (0..paths).map(|_| tilted.sample_severity(&mut rng)).collect();
    let d = ks_statistic(&xs, |x| -(-rate * x).exp_m1());
    println!(
        "tilted Exponential(1) by {}: KS distance to Exponential({rate}) = {d:.4}, p = {:.3}",
        tilted.tilt_rate(),
        ks_pvalue(d, xs.len())
    );
    Ok(())
}
