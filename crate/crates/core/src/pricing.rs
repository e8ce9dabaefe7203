//! Time-zero price `V0 = Z·(I1 + I2 + I3)`: coupons, conversion into shares
//! at the trigger time, and redemption at maturity.
//!
//! Survival probabilities `P(L_t < D)` for the coupon and redemption legs come
//! from loss paths under the physical measure. The conversion leg reduces to
//! an expectation over the trigger time alone, under a tilted loss measure:
//!
//! * constant price `K`: `I2 = (ζ/K)·S0·P⁽⁰⁾(τ ≤ T)`, tilt rate `α`;
//! * price `S_τ^ν`: `I2 = ζ·S0^{1−ν}·E⁽ᵛ⁾[1{τ≤T}·w(τ)]`, tilt rate `α(1−ν)`,
//!   where
//!
//! ```text
//! w(s) = exp(−½σ_S²ν(1−ν)s + (1−ν)φ(α,s) − φ(α(1−ν),s)) · P°(ν·r0, s)
//! φ(θ,s) = (1 − Lf(θ))·Λ(0,s)
//! ```
//!
//! and `P°` is the bond price under `(√ν·θ*, √ν·σ_r)` with
//! `θ* = θ_r − σ_r·ρ·σ_S·(1−ν)`.

use serde::Serialize;

use crate::config::{ConversionRule, ResolvedConfig, Threshold};
use crate::error::{Error, Result};
use crate::loss::{self, series, tilt_model, CumulativeIntensity, LossModel, Measure, TriggerSample};
use crate::rates::{conversion_measure_params, zcb_price, RateParams};
use crate::rng::{McPlan, Purpose};
use crate::stats::{CompensatedSum, Estimate};

/// Whether the spread `cΔ` paid at `t_i` is discounted with `P(0, t_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadDiscounting {
    /// `cΔ·P(0,t_i)`: the expectation of the discounted cash flow.
    #[default]
    Discounted,
    /// `cΔ` for `i ≥ 2` with no discount factor.
    Undiscounted,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PricingOptions {
    pub spread: SpreadDiscounting,
}

/// `P(τ > t_i)` at the coupon dates, with the covariance of the estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    pub dates: Vec<f64>,
    pub probs: Vec<f64>,
    /// Sample size, `None` for exact values.
    pub n_paths: Option<usize>,
}

impl SurvivalCurve {
    pub fn exact(dates: Vec<f64>, probs: Vec<f64>) -> Self {
        SurvivalCurve {
            dates,
            probs,
            n_paths: None,
        }
    }

    pub fn certain(dates: Vec<f64>) -> Self {
        let probs = vec![1.0; dates.len()];
        SurvivalCurve::exact(dates, probs)
    }

    /// Empirical curve; `dates` must be increasing.
    pub fn from_sample(sample: &TriggerSample, dates: &[f64]) -> Self {
        SurvivalCurve {
            dates: dates.to_vec(),
            probs: dates.iter().map(|&t| sample.survival(t).mean).collect(),
            n_paths: Some(sample.n_paths),
        }
    }

    pub fn last(&self) -> f64 {
        *self.probs.last().unwrap_or(&1.0)
    }

    /// Standard error of `Σ w_i·Ŝ_i`. The indicators `1{τ > t_i}` are nested,
    /// so `Cov(Ŝ_i, Ŝ_j) = (S_{max(i,j)} − S_i·S_j)/n`.
    pub fn linear_se(&self, weights: &[f64]) -> f64 {
        let Some(n) = self.n_paths else { return 0.0 };
        let s = &self.probs;
        let mut var = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                var += weights[i] * weights[j] * (s[i.max(j)] - s[i] * s[j]);
            }
        }
        (var.max(0.0) / n as f64).sqrt()
    }
}

/// Inputs shared by the coupon and redemption legs.
#[derive(Debug, Clone, Copy)]
pub struct FloaterTerms<'a> {
    pub rates: &'a RateParams,
    pub r0: f64,
    pub libor0: f64,
    pub spread: f64,
    pub tenor: f64,
}

fn discount_curve(t: &FloaterTerms<'_>, dates: &[f64]) -> Result<Vec<f64>> {
    dates.iter().map(|&d| zcb_price(t.r0, d, t.rates)).collect()
}

/// Per-date weights `w_i` with `I1 = Σ w_i·S_i`.
pub fn coupon_weights(t: &FloaterTerms<'_>, dates: &[f64], options: PricingOptions) -> Result<Vec<f64>> {
    let p = discount_curve(t, dates)?;
    let cd = t.spread * t.tenor;
    Ok((0..dates.len())
        .map(|i| {
            if i == 0 {
                (t.libor0 + t.spread) * t.tenor * p[0]
            } else {
                let spread = match options.spread {
                    SpreadDiscounting::Discounted => cd * p[i],
                    SpreadDiscounting::Undiscounted => cd,
                };
                spread + p[i - 1] - p[i]
            }
        })
        .collect())
}

/// Coupon leg per unit nominal.
pub fn coupon_leg(t: &FloaterTerms<'_>, survival: &SurvivalCurve, options: PricingOptions) -> Result<Estimate> {
    if survival.dates.is_empty() || survival.probs.len() != survival.dates.len() {
        return Err(Error::invalid("survival probabilities missing for some coupon dates"));
    }
    let w = coupon_weights(t, &survival.dates, options)?;
    let value = w
        .iter()
        .zip(&survival.probs)
        .map(|(w, s)| w * s)
        .collect::<CompensatedSum>();
    Ok(Estimate {
        mean: value.value(),
        se: survival.linear_se(&w),
        n: survival.n_paths.unwrap_or(0),
    })
}

/// Redemption leg per unit nominal: `P(r0, T)·P(L_T < D)`.
pub fn redemption_leg(rates: &RateParams, r0: f64, term: f64, survival_t: Estimate) -> Result<Estimate> {
    if !(0.0..=1.0).contains(&survival_t.mean) {
        return Err(Error::invalid(format!(
            "survival probability must lie in [0, 1], got {}",
            survival_t.mean
        )));
    }
    let p = zcb_price(r0, term, rates)?;
    Ok(Estimate {
        mean: p * survival_t.mean,
        se: p * survival_t.se,
        n: survival_t.n,
    })
}

/// Loss model under which the conversion leg's trigger time is drawn.
pub fn conversion_model(cfg: &ResolvedConfig, rule: ConversionRule) -> Result<LossModel> {
    match rule {
        ConversionRule::ConstantPrice { .. } => tilt_model(&cfg.loss, cfg.alpha, 0.0),
        ConversionRule::PowerOfShare { nu } => tilt_model(&cfg.loss, cfg.alpha, nu),
    }
}

/// The weight `w(s)` of the share-power conversion leg.
#[derive(Debug, Clone)]
pub struct ConversionWeight {
    nu: f64,
    r0: f64,
    rates: RateParams,
    scaled: RateParams,
    time_rate: f64,
    loss_rate: f64,
    cum: Option<CumulativeIntensity>,
}

impl ConversionWeight {
    pub fn new(cfg: &ResolvedConfig, nu: f64) -> Result<Self> {
        let horizon = cfg.contract().term;
        if nu == 1.0 {
            return Ok(ConversionWeight {
                nu,
                r0: cfg.r0,
                rates: cfg.rates,
                scaled: cfg.rates,
                time_rate: 0.0,
                loss_rate: 0.0,
                cum: None,
            });
        }
        let m = cfg.market();
        let scaled = conversion_measure_params(&cfg.rates, m.rho, m.sigma_s, nu)?;
        let sev = &cfg.loss.severity;
        // (1−ν)(1 − Lf(α)) − (1 − Lf(α(1−ν)))
        let loss_rate =
            (1.0 - nu) * sev.laplace_complement(cfg.alpha)? - sev.laplace_complement(cfg.alpha * (1.0 - nu))?;
        Ok(ConversionWeight {
            nu,
            r0: cfg.r0,
            rates: cfg.rates,
            scaled,
            time_rate: -0.5 * m.sigma_s * m.sigma_s * nu * (1.0 - nu),
            loss_rate,
            cum: Some(CumulativeIntensity::new(cfg.loss.intensity, horizon)?),
        })
    }

    pub fn at(&self, s: f64) -> Result<f64> {
        match &self.cum {
            None => zcb_price(self.r0, s, &self.rates),
            Some(cum) => {
                let exponent = self.time_rate * s + self.loss_rate * cum.at(s);
                Ok(exponent.exp() * zcb_price(self.nu * self.r0, s, &self.scaled)?)
            }
        }
    }
}

/// `I2` per unit nominal for a constant conversion price, from trigger times
/// drawn under the tilt with rate `α`.
pub fn conversion_constant_k(cfg: &ResolvedConfig, k: f64, sample: &TriggerSample) -> Estimate {
    let c = cfg.contract();
    let scale = c.zeta / k * cfg.market().s0;
    let hit = sample
        .taus
        .iter()
        .filter(|t| matches!(t, Some(s) if *s <= c.term))
        .count();
    let p = Estimate::proportion(hit, sample.n_paths);
    Estimate {
        mean: scale * p.mean,
        se: scale * p.se,
        n: p.n,
    }
}

/// `I2` per unit nominal for conversion price `S_τ^ν`, from trigger times drawn
/// under the tilt with rate `α(1−ν)`.
pub fn conversion_power(cfg: &ResolvedConfig, nu: f64, sample: &TriggerSample) -> Result<Estimate> {
    let c = cfg.contract();
    let weight = ConversionWeight::new(cfg, nu)?;
    let scale = if nu == 1.0 {
        c.zeta
    } else {
        c.zeta * cfg.market().s0.powf(1.0 - nu)
    };
    let values = sample
        .taus
        .iter()
        .map(|tau| match tau {
            Some(s) if *s <= c.term => weight.at(*s),
            _ => Ok(0.0),
        })
        .collect::<Result<Vec<f64>>>()?;
    let e = Estimate::from_samples(&values);
    Ok(Estimate {
        mean: scale * e.mean,
        se: scale * e.se,
        n: e.n,
    })
}

/// Draws the tilted trigger sample and values the conversion leg.
pub fn conversion_leg(cfg: &ResolvedConfig, plan: &McPlan) -> Result<Estimate> {
    let rule = cfg.contract().conversion;
    let model = conversion_model(cfg, rule)?;
    let sample = loss::trigger_samples(
        &model,
        &[cfg.threshold()],
        cfg.contract().term,
        plan,
        Purpose::ConversionLoss,
    )?
    .remove(0);
    conversion_from_sample(cfg, rule, &sample)
}

fn conversion_from_sample(cfg: &ResolvedConfig, rule: ConversionRule, sample: &TriggerSample) -> Result<Estimate> {
    match rule {
        ConversionRule::ConstantPrice { k } => Ok(conversion_constant_k(cfg, k, sample)),
        ConversionRule::PowerOfShare { nu } => conversion_power(cfg, nu, sample),
    }
}

/// Price with its components. Components are per unit nominal; `v0` and
/// `se_total` are in currency.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceBreakdown {
    #[serde(rename = "V0")]
    pub v0: f64,
    #[serde(rename = "I1")]
    pub i1: f64,
    #[serde(rename = "I2")]
    pub i2: f64,
    #[serde(rename = "I3")]
    pub i3: f64,
    pub se_i1: f64,
    pub se_i2: f64,
    pub se_i3: f64,
    /// Standard error of `V0`; `I1` and `I3` share one sample and are combined
    /// with their covariance, `I2` is independent.
    pub se_total: f64,
    pub rule: ConversionRule,
    #[serde(rename = "D")]
    pub threshold: Threshold,
    #[serde(rename = "T")]
    pub term: f64,
    #[serde(rename = "sigma_S")]
    pub sigma_s: f64,
    pub config_hash: String,
    pub seed: u64,
    pub n_paths: usize,
    pub survival_measure: Measure,
    pub conversion_measure: Measure,
    pub spread: SpreadDiscounting,
}

pub const CSV_HEADER: [&str; 13] = [
    "config_hash",
    "rule",
    "D",
    "T",
    "nu_or_K",
    "V0",
    "I1",
    "I2",
    "I3",
    "se_total",
    "seed",
    "n_paths",
    "sigma_S",
];

impl PriceBreakdown {
    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.config_hash.clone(),
            self.rule.name().to_string(),
            self.threshold.0.to_string(),
            self.term.to_string(),
            self.rule.parameter().to_string(),
            self.v0.to_string(),
            self.i1.to_string(),
            self.i2.to_string(),
            self.i3.to_string(),
            self.se_total.to_string(),
            self.seed.to_string(),
            self.n_paths.to_string(),
            self.sigma_s.to_string(),
        ]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("breakdown serializes")
    }
}

/// Prices the contract at each threshold in `thresholds` (the configured `D`
/// is ignored). All thresholds share the same loss paths.
pub fn price_thresholds(
    cfg: &ResolvedConfig,
    thresholds: &[f64],
    plan: &McPlan,
    options: PricingOptions,
) -> Result<Vec<PriceBreakdown>> {
    let c = cfg.contract();
    let dates = cfg.coupon_dates();
    let rule = c.conversion;
    let conv_model = conversion_model(cfg, rule)?;
    let no_trigger = cfg.loss.intensity.is_identically_zero();
    let random: Vec<f64> = thresholds
        .iter()
        .copied()
        .filter(|d| d.is_finite() && !no_trigger)
        .collect();
    let (physical, conversion) = if random.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        (
            loss::trigger_samples(&cfg.loss, &random, c.term, plan, Purpose::PhysicalLoss)?,
            loss::trigger_samples(&conv_model, &random, c.term, plan, Purpose::ConversionLoss)?,
        )
    };
    let floater = FloaterTerms {
        rates: &cfg.rates,
        r0: cfg.r0,
        libor0: cfg.libor0,
        spread: c.c,
        tenor: c.tenor,
    };
    let weights = coupon_weights(&floater, &dates, options)?;
    let p_t = zcb_price(cfg.r0, c.term, &cfg.rates)?;
    let mut next = 0;
    thresholds
        .iter()
        .map(|&d| {
            let (survival, i2) = if d.is_finite() && !no_trigger {
                let j = next;
                next += 1;
                (
                    SurvivalCurve::from_sample(&physical[j], &dates),
                    conversion_from_sample(cfg, rule, &conversion[j])?,
                )
            } else {
                // no trigger possible: closed form, no sampling
                (SurvivalCurve::certain(dates.clone()), Estimate::exact(0.0))
            };
            if !(d > 0.0) {
                return Err(Error::invalid(format!("threshold must be > 0, got {d}")));
            }
            let i1 = coupon_leg(&floater, &survival, options)?;
            let i3 = redemption_leg(
                &cfg.rates,
                cfg.r0,
                c.term,
                Estimate {
                    mean: survival.last(),
                    se: survival.linear_se(&unit_last(dates.len())),
                    n: i1.n,
                },
            )?;
            let mut joint = weights.clone();
            *joint.last_mut().expect("at least one coupon date") += p_t;
            let se_legs = survival.linear_se(&joint);
            Ok(PriceBreakdown {
                v0: c.nominal * (i1.mean + i2.mean + i3.mean),
                i1: i1.mean,
                i2: i2.mean,
                i3: i3.mean,
                se_i1: i1.se,
                se_i2: i2.se,
                se_i3: i3.se,
                se_total: c.nominal * se_legs.hypot(i2.se),
                rule,
                threshold: Threshold(d),
                term: c.term,
                sigma_s: cfg.market().sigma_s,
                config_hash: cfg.hash_at_threshold(d),
                seed: plan.seed,
                n_paths: plan.n_paths,
                survival_measure: Measure::Physical,
                conversion_measure: conv_model.measure(),
                spread: options.spread,
            })
        })
        .collect()
}

fn unit_last(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[n - 1] = 1.0;
    v
}

/// Prices the configured contract.
pub fn price(cfg: &ResolvedConfig, plan: &McPlan, options: PricingOptions) -> Result<PriceBreakdown> {
    Ok(price_thresholds(cfg, &[cfg.threshold()], plan, options)?.remove(0))
}

/// Deterministic price for Exponential severity, from the exact survival
/// series and quadrature over the exact trigger-time density. `None` for
/// other severities.
pub fn price_exact(cfg: &ResolvedConfig, options: PricingOptions) -> Result<Option<PriceBreakdown>> {
    let c = cfg.contract();
    let d = cfg.threshold();
    let dates = cfg.coupon_dates();
    let rule = c.conversion;
    let conv_model = conversion_model(cfg, rule)?;
    let mut probs = Vec::with_capacity(dates.len());
    for &t in &dates {
        match series::exact_survival(&cfg.loss, t, d)? {
            Some(p) => probs.push(p),
            None => return Ok(None),
        }
    }
    let survival = SurvivalCurve::exact(dates, probs);
    let floater = FloaterTerms {
        rates: &cfg.rates,
        r0: cfg.r0,
        libor0: cfg.libor0,
        spread: c.c,
        tenor: c.tenor,
    };
    let i1 = coupon_leg(&floater, &survival, options)?.mean;
    let i3 = zcb_price(cfg.r0, c.term, &cfg.rates)? * survival.last();
    let i2 = match rule {
        ConversionRule::ConstantPrice { k } => {
            let hit = 1.0 - series::exact_survival(&conv_model, c.term, d)?.unwrap_or(1.0);
            c.zeta / k * cfg.market().s0 * hit
        }
        ConversionRule::PowerOfShare { nu } => {
            let w = ConversionWeight::new(cfg, nu)?;
            let scale = c.zeta * cfg.market().s0.powf(1.0 - nu);
            let e = series::exact_passage_expectation(&conv_model, d, c.term, |s| w.at(s).unwrap_or(f64::NAN))?;
            scale * e.unwrap_or(0.0)
        }
    };
    Ok(Some(PriceBreakdown {
        v0: c.nominal * (i1 + i2 + i3),
        i1,
        i2,
        i3,
        se_i1: 0.0,
        se_i2: 0.0,
        se_i3: 0.0,
        se_total: 0.0,
        rule,
        threshold: Threshold(d),
        term: c.term,
        sigma_s: cfg.market().sigma_s,
        config_hash: cfg.hash(),
        seed: 0,
        n_paths: 0,
        survival_measure: Measure::Physical,
        conversion_measure: conv_model.measure(),
        spread: options.spread,
    }))
}

/// Price of the same note with no trigger: a floater paying LIBOR plus spread.
pub fn riskless_floater(cfg: &ResolvedConfig, options: PricingOptions) -> Result<f64> {
    let c = cfg.contract();
    let floater = FloaterTerms {
        rates: &cfg.rates,
        r0: cfg.r0,
        libor0: cfg.libor0,
        spread: c.c,
        tenor: c.tenor,
    };
    let i1 = coupon_leg(&floater, &SurvivalCurve::certain(cfg.coupon_dates()), options)?.mean;
    Ok(c.nominal * (i1 + zcb_price(cfg.r0, c.term, &cfg.rates)?))
}
