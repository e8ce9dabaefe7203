//! Prices the bundled reference contract under all three conversion rules.
//!
//! cargo run --release --example price_rules [paths]

use std::time::Instant;

use cococat::config::{ConversionRule, ResolvedConfig};
use cococat::pricing::{price, PricingOptions};

fn main() -> cococat::Result<()> {
    let paths = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let base = ResolvedConfig::canonical();
    let plan = base.plan().with_paths(paths);
    println!("R0 (implied) = {:.6}, kappa = {:.6e}", base.libor0, base.kappa);
    for rule in [
        ConversionRule::ConstantPrice { k: 8.0 },
        ConversionRule::PowerOfShare { nu: 1.0 },
        ConversionRule::PowerOfShare { nu: 0.5 },
    ] {
        let cfg = base.modified(|c| c.contract.conversion = rule)?;
        let start = Instant::now();
        let p = price(&cfg, &plan, PricingOptions::default())?;
        println!(
            "{:<8} V0 = {:.4} (se {:.4})  I1 = {:.4}  I2 = {:.4}  I3 = {:.4}  [{:.2?}]",
            rule.to_string(),
            p.v0,
            p.se_total,
            p.i1,
            p.i2,
            p.i3,
            start.elapsed()
        );
    }
    Ok(())
}
