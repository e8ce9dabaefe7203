//! Exact trigger-time quantities for Exponential severity.
//!
//! With `X ~ Exp(β)`, `n` losses sum to an Erlang(`n`, β) variable, so
//!
//! ```text
//! P(L_t < D) = Σ_n Poi(n; Λ_t) · P(Erlang(n, β) < D)
//! f_τ(t)     = λ(t) · Σ_n Poi(n; Λ_t) · Poi(n; βD)
//! ```
//!
//! (the second factor is the chance that `n` losses stay below `D` while the
//! next one crosses it). Under a tilt the severity is `Exp(β + θ)` and the
//! rate is `Lf(θ)·λ`. These serve as reference values for the samplers.

use crate::error::{Error, Result};
use crate::loss::{cumulative_intensity, LossModel, Severity};
use crate::quad::{integrate, Tolerance};

const TAIL: f64 = 1e-12;

/// Exponential rate and rate multiplier of the model, or `None` for other
/// severities.
fn exponential_view(model: &LossModel) -> Option<(f64, f64)> {
    match model.severity {
        Severity::Exponential { beta } => Some((beta + model.tilt_rate(), model.laplace_at_tilt())),
        Severity::Burr(_) => None,
    }
}

fn ln_poisson(n: usize, mean: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    n as f64 * mean.ln() - mean - statrs::function::gamma::ln_gamma(n as f64 + 1.0)
}

/// Sums `Poi(n; mean)·g(n)` until the remaining Poisson mass is below 1e-12.
fn poisson_series(mean: f64, mut g: impl FnMut(usize) -> f64) -> f64 {
    let mut total = 0.0;
    let mut mass = 0.0;
    let mut n = 0usize;
    loop {
        let w = ln_poisson(n, mean).exp();
        total += w * g(n);
        mass += w;
        if (n as f64 > mean && 1.0 - mass < TAIL) || n > 100_000 {
            return total;
        }
        n += 1;
    }
}

/// Exact `P(L_t < d)`; `None` unless the severity is Exponential.
pub fn exact_survival(model: &LossModel, t: f64, d: f64) -> Result<Option<f64>> {
    let Some((beta, scale)) = exponential_view(model) else {
        return Ok(None);
    };
    if !(d > 0.0) {
        return Err(Error::invalid(format!("threshold must be > 0, got {d}")));
    }
    if d.is_infinite() {
        return Ok(Some(1.0));
    }
    let lam = scale * cumulative_intensity(&model.intensity, 0.0, t)?;
    let sev = Severity::Exponential { beta };
    Ok(Some(poisson_series(lam, |n| {
        sev.erlang_convolution_cdf(n, d).unwrap_or(0.0)
    })))
}

/// Exact density of the trigger time at `t`.
pub fn exact_passage_density(model: &LossModel, t: f64, d: f64) -> Result<Option<f64>> {
    let Some((beta, scale)) = exponential_view(model) else {
        return Ok(None);
    };
    if d.is_infinite() {
        return Ok(Some(0.0));
    }
    let lam = scale * cumulative_intensity(&model.intensity, 0.0, t)?;
    let bd = beta * d;
    let sum = poisson_series(lam, |n| ln_poisson(n, bd).exp());
    Ok(Some(scale * model.intensity.at(t) * sum))
}

/// `E[g(τ) 1{τ ≤ horizon}]` by quadrature against the exact density.
pub fn exact_passage_expectation<G: Fn(f64) -> f64>(
    model: &LossModel,
    d: f64,
    horizon: f64,
    g: G,
) -> Result<Option<f64>> {
    if exponential_view(model).is_none() {
        return Ok(None);
    }
    // a failed density evaluation shows up as a non-finite integrand
    let q = integrate(
        |s| match exact_passage_density(model, s, d) {
            Ok(Some(f)) => f * g(s),
            _ => f64::NAN,
        },
        0.0,
        horizon,
        Tolerance { abs: 1e-12, rel: 1e-10 },
    )?;
    Ok(Some(q.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{tilt_model, trigger_distribution, IntensityParams};
    use crate::rng::McPlan;

    fn small() -> LossModel {
        LossModel::new(IntensityParams::constant(10.0), Severity::exponential(1.0).unwrap())
    }

    #[test]
    fn survival_boundaries() {
        let m = small();
        assert_eq!(exact_survival(&m, 0.0, 3.0).unwrap(), Some(1.0));
        assert_eq!(exact_survival(&m, 1.0, f64::INFINITY).unwrap(), Some(1.0));
        let burr = LossModel::new(IntensityParams::constant(1.0), Severity::burr(2.0, 1.0, 1.0).unwrap());
        assert_eq!(exact_survival(&burr, 1.0, 1.0).unwrap(), None);
    }

    #[test]
    fn density_integrates_to_trigger_probability() {
        let m = small();
        let p = exact_passage_expectation(&m, 3.0, 1.0, |_| 1.0).unwrap().unwrap();
        let s = exact_survival(&m, 1.0, 3.0).unwrap().unwrap();
        assert!((p + s - 1.0).abs() < 1e-9, "{p} + {s}");
    }

    #[test]
    fn single_event_case() {
        // with D tiny, survival is P(no event) = e^{-Λ}
        let m = small();
        let s = exact_survival(&m, 0.3, 1e-12).unwrap().unwrap();
        assert!((s - (-3.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn monte_carlo_agrees_with_series() {
        let m = small();
        let sample = trigger_distribution(&m, 3.0, 1.0, &McPlan::new(50_000, 21)).unwrap();
        for t in [0.1, 0.25, 0.5, 1.0] {
            let exact = exact_survival(&m, t, 3.0).unwrap().unwrap();
            assert!(sample.survival(t).covers(exact, 3.0), "t={t}");
        }
        let tilted = tilt_model(&m, 0.3, 0.0).unwrap();
        let sample = trigger_distribution(&tilted, 3.0, 1.0, &McPlan::new(50_000, 22)).unwrap();
        let exact = exact_survival(&tilted, 1.0, 3.0).unwrap().unwrap();
        assert!(sample.survival(1.0).covers(exact, 3.0));
    }
}
