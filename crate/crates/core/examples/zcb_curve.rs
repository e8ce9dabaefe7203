//! Closed-form zero-coupon curve next to a Monte Carlo estimate of
//! `E[exp(−∫r)]`, plus the implied initial LIBOR.
//!
//! cargo run --release --example zcb_curve [paths] [steps_per_year]

use std::time::Instant;

use cococat::rates::{implied_initial_libor, mc_discount_factors, zcb_price, DiscountMc, RateParams};
use cococat::rng::McPlan;

fn main() -> cococat::Result<()> {
    let mut args = std::env::args().skip(1);
    let paths = args.next().and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let steps: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(500.0);
    let params = RateParams::new(0.2, 0.03)?;
    let r0 = 0.02;
    println!("m_r = {:.6e}", params.m_r());
    println!("R0 (3m, implied) = {:.6}", implied_initial_libor(&params, r0, 0.25)?);

    let horizons = [1.0, 5.0, 10.0, 32.0];
    let start = Instant::now();
    let mc = mc_discount_factors(
        &params,
        r0,
        &horizons,
        &DiscountMc {
            antithetic: true,
            importance: true,
            ..DiscountMc::plain(1.0 / steps)
        },
        &McPlan::new(paths, 7),
    )?;
    println!("{paths} paths, dt = 1/{steps}: {:.2?}", start.elapsed());
    println!(
        "{:>6} {:>12} {:>12} {:>10} {:>7}",
        "s", "closed form", "monte carlo", "se", "z"
    );
    for (s, e) in horizons.iter().zip(&mc) {
        let p = zcb_price(r0, *s, &params)?;
        println!(
            "{s:>6} {p:>12.6e} {:>12.6e} {:>10.2e} {:>7.2}",
            e.mean,
            e.se,
            (e.mean - p) / e.se
        );
    }
    Ok(())
}
