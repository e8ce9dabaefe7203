//! Analytic price against brute-force joint simulation on a small contract
//! (constant arrival rate, exponential losses), for each conversion rule.
//!
//! cargo run --release --example oracle_compare [paths]

use cococat::config::{load_config, ConversionRule};
use cococat::oracle::{price_direct, Comparison, DEFAULT_DT};
use cococat::pricing::{price, price_exact, PricingOptions};

fn main() -> cococat::Result<()> {
    let paths = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50_000);
    let base = load_config(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/small_exponential.json"))?;
    let plan = base.plan().with_paths(paths);
    let options = PricingOptions::default();
    for rule in [
        ConversionRule::ConstantPrice { k: 10.0 },
        ConversionRule::PowerOfShare { nu: 0.5 },
        ConversionRule::PowerOfShare { nu: 1.0 },
    ] {
        let cfg = base.modified(|c| c.contract.conversion = rule)?;
        let exact = price_exact(&cfg, options)?.map_or(f64::NAN, |p| p.v0);
        let cmp = Comparison::new(price(&cfg, &plan, options)?, price_direct(&cfg, &plan, DEFAULT_DT)?);
        println!(
            "{:<8} analytic {:.5} ({:.5})  joint {:.5} ({:.5})  z {:+.2}  series {:.5}",
            rule.to_string(),
            cmp.analytic.v0,
            cmp.analytic.se_total,
            cmp.oracle.v0,
            cmp.oracle.se_total,
            cmp.z_score,
            exact
        );
    }
    Ok(())
}
