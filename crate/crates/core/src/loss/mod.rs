//! Aggregate catastrophe loss process `L_t = Σ_{k ≤ N_t} X_k` with a
//! time-varying arrival rate, its exponentially tilted versions, and
//! first-passage (trigger) times.

pub mod intensity;
pub mod series;
pub mod severity;

use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{path_rng, McPlan, Purpose};
use crate::stats::Estimate;

pub use intensity::{cumulative_intensity, CumulativeIntensity, IntensityParams};
pub use severity::{BurrParams, Severity};

/// Exponential tilt `e^{−θx}` applied to the severity, with the Laplace
/// transform at `θ` that rescales the arrival rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tilt {
    pub theta: f64,
    pub laplace: f64,
    /// Share-power exponent the tilt was built for (`θ = α(1−ν)`).
    pub nu: f64,
}

/// Probability measure a loss sample was drawn under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measure {
    Physical,
    Tilted { nu: f64, theta: f64 },
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::Physical => write!(f, "physical"),
            Measure::Tilted { nu, .. } => write!(f, "tilted(nu={nu})"),
        }
    }
}

impl Serialize for Measure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossModel {
    pub intensity: IntensityParams,
    pub severity: Severity,
    pub tilt: Option<Tilt>,
}

impl LossModel {
    pub fn new(intensity: IntensityParams, severity: Severity) -> Self {
        LossModel {
            intensity,
            severity,
            tilt: None,
        }
    }

    pub fn tilt_rate(&self) -> f64 {
        self.tilt.map_or(0.0, |t| t.theta)
    }

    /// Factor multiplying the physical arrival rate.
    pub fn laplace_at_tilt(&self) -> f64 {
        self.tilt.map_or(1.0, |t| t.laplace)
    }

    pub fn measure(&self) -> Measure {
        match self.tilt {
            None => Measure::Physical,
            Some(t) => Measure::Tilted {
                nu: t.nu,
                theta: t.theta,
            },
        }
    }

    /// Arrival rate under this model's measure.
    pub fn intensity_at(&self, t: f64) -> f64 {
        self.laplace_at_tilt() * self.intensity.at(t)
    }

    /// One severity draw under this model's measure. Tilted draws propose
    /// from the physical law and accept with probability `e^{−θx}`.
    pub fn sample_severity<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_severity(self, rng)
    }
}

/// Model under the measure induced by `exp(−α(1−ν)L_t + φ(α(1−ν), t))`:
/// the arrival rate is scaled by `Lf(α(1−ν))` and the severity reweighted by
/// `e^{−α(1−ν)x}/Lf(α(1−ν))`. Tilts compose: an already tilted model is
/// tilted further from its current state.
pub fn tilt_model(model: &LossModel, alpha: f64, nu: f64) -> Result<LossModel> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("alpha must be >= 0, got {alpha}")));
    }
    if !(0.0..=1.0).contains(&nu) {
        return Err(Error::invalid(format!("nu must lie in [0, 1], got {nu}")));
    }
    let extra = alpha * (1.0 - nu);
    if extra == 0.0 {
        return Ok(model.clone());
    }
    let theta = model.tilt_rate() + extra;
    let laplace = model.severity.laplace(theta)?;
    Ok(LossModel {
        tilt: Some(Tilt { theta, laplace, nu }),
        ..model.clone()
    })
}

pub fn sample_severity<R: Rng + ?Sized>(model: &LossModel, rng: &mut R) -> f64 {
    let theta = model.tilt_rate();
    loop {
        let x = model.severity.sample(rng);
        if theta == 0.0 || rng.random::<f64>() < (-theta * x).exp() {
            return x;
        }
    }
}

/// Arrival times by thinning. The majorant is recomputed on each unit-year
/// cell, so the uniforms consumed up to time `t` never depend on how far the
/// caller intends to simulate.
struct Arrivals<'a> {
    params: &'a IntensityParams,
    scale: f64,
    cell: u32,
    bound: f64,
    t: f64,
}

impl<'a> Arrivals<'a> {
    fn new(params: &'a IntensityParams, scale: f64) -> Self {
        let mut a = Arrivals {
            params,
            scale,
            cell: 0,
            bound: 0.0,
            t: 0.0,
        };
        a.bound = a.cell_bound();
        a
    }

    fn cell_bound(&self) -> f64 {
        let lo = self.cell as f64;
        let p = self.params;
        let linear = p.a + (p.b * lo).max(p.b * (lo + 1.0));
        let cyclic = if p.q >= 0.0 {
            p.q * std::f64::consts::E
        } else {
            p.q / std::f64::consts::E
        };
        self.scale * (linear + p.p.abs() + cyclic).max(0.0)
    }

    /// Next arrival no later than `horizon`, or `None`.
    fn next_before<R: Rng + ?Sized>(&mut self, horizon: f64, rng: &mut R) -> Option<f64> {
        loop {
            if self.t > horizon {
                return None;
            }
            let end = (self.cell + 1) as f64;
            if self.bound <= 0.0 {
                self.advance_cell(end);
                continue;
            }
            let gap: f64 = rng.sample::<f64, _>(Exp1) / self.bound;
            let cand = self.t + gap;
            if cand >= end {
                // memoryless: restart the clock at the cell boundary
                self.advance_cell(end);
                continue;
            }
            self.t = cand;
            if cand > horizon {
                return None;
            }
            let rate = self.scale * self.params.at(cand);
            if rng.random::<f64>() * self.bound < rate {
                return Some(cand);
            }
        }
    }

    fn advance_cell(&mut self, end: f64) {
        self.t = end;
        self.cell += 1;
        self.bound = self.cell_bound();
    }
}

/// Ordered arrival times on `[0, horizon]` under the physical rate.
pub fn simulate_event_times<R: Rng + ?Sized>(params: &IntensityParams, horizon: f64, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::new();
    if params.is_identically_zero() {
        return out;
    }
    let mut arrivals = Arrivals::new(params, 1.0);
    while let Some(t) = arrivals.next_before(horizon, rng) {
        out.push(t);
    }
    out
}

/// Jump times and sizes of one loss path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossPath {
    pub times: Vec<f64>,
    pub amounts: Vec<f64>,
}

impl LossPath {
    /// `L_t`, right-continuous.
    pub fn loss_at(&self, t: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.amounts)
            .take_while(|(s, _)| **s <= t)
            .map(|(_, x)| x)
            .sum()
    }

    /// First time the running loss reaches `d`.
    pub fn passage_time(&self, d: f64) -> Option<f64> {
        let mut acc = 0.0;
        for (t, x) in self.times.iter().zip(&self.amounts) {
            acc += x;
            if acc >= d {
                return Some(*t);
            }
        }
        None
    }
}

/// Full loss path on `[0, horizon]` under the model's measure. Each event
/// draws its arrival time first, then its severity.
pub fn simulate_loss_path<R: Rng + ?Sized>(model: &LossModel, horizon: f64, rng: &mut R) -> LossPath {
    let mut path = LossPath::default();
    if model.intensity.is_identically_zero() {
        return path;
    }
    let mut arrivals = Arrivals::new(&model.intensity, model.laplace_at_tilt());
    while let Some(t) = arrivals.next_before(horizon, rng) {
        path.times.push(t);
        path.amounts.push(sample_severity(model, rng));
    }
    path
}

/// Passage times for several thresholds on one path. `order` lists indices of
/// `thresholds` in increasing threshold order. Stops drawing once every
/// threshold has been reached, which leaves earlier draws unchanged.
fn passage_times_into<R: Rng + ?Sized>(
    model: &LossModel,
    thresholds: &[f64],
    order: &[usize],
    horizon: f64,
    rng: &mut R,
    out: &mut [Option<f64>],
) {
    out.iter_mut().for_each(|o| *o = None);
    // all thresholds infinite: nothing can trigger
    let Some(&first) = order.first() else { return };
    if thresholds[first].is_infinite() || model.intensity.is_identically_zero() {
        return;
    }
    let mut arrivals = Arrivals::new(&model.intensity, model.laplace_at_tilt());
    let mut next = 0;
    let mut acc = 0.0;
    while next < order.len() && thresholds[order[next]].is_finite() {
        let Some(t) = arrivals.next_before(horizon, rng) else {
            break;
        };
        acc += sample_severity(model, rng);
        while next < order.len() && acc >= thresholds[order[next]] {
            out[order[next]] = Some(t);
            next += 1;
        }
    }
}

/// First time `L_t ≥ d` on `[0, horizon]`, or `None` (censored).
pub fn first_passage_time<R: Rng + ?Sized>(model: &LossModel, d: f64, horizon: f64, rng: &mut R) -> Option<f64> {
    let mut out = [None];
    passage_times_into(model, &[d], &[0], horizon, rng, &mut out);
    out[0]
}

/// Empirical trigger times, `None` meaning no trigger by `horizon`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriggerSample {
    pub taus: Vec<Option<f64>>,
    pub measure: Measure,
    pub threshold: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl TriggerSample {
    /// Empirical `P(τ ≤ t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.count_by(t) as f64 / self.n_paths as f64
    }

    /// Empirical `P(τ > t) = P(L_t < D)` with its binomial standard error.
    pub fn survival(&self, t: f64) -> Estimate {
        let alive = self.n_paths - self.count_by(t);
        Estimate::proportion(alive, self.n_paths)
    }

    pub fn censored_fraction(&self) -> f64 {
        self.taus.iter().filter(|t| t.is_none()).count() as f64 / self.n_paths as f64
    }

    fn count_by(&self, t: f64) -> usize {
        self.taus.iter().filter(|tau| matches!(tau, Some(s) if *s <= t)).count()
    }

    /// Writes `path_id,tau_or_empty,censored_flag`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["path_id", "tau_or_empty", "censored_flag"])?;
        for (i, tau) in self.taus.iter().enumerate() {
            let (t, flag) = match tau {
                Some(t) => (t.to_string(), "0"),
                None => (String::new(), "1"),
            };
            w.write_record([i.to_string(), t, flag.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One trigger sample per threshold, all built from the same loss paths.
/// Path `p` uses stream `(plan.seed, purpose, p)`, so results do not depend on
/// the substream count, on the other thresholds, or on `horizon` beyond the
/// events it admits.
pub fn trigger_samples(
    model: &LossModel,
    thresholds: &[f64],
    horizon: f64,
    plan: &McPlan,
    purpose: Purpose,
) -> Result<Vec<TriggerSample>> {
    if plan.n_paths == 0 {
        return Err(Error::invalid("n_paths must be >= 1"));
    }
    if !(horizon >= 0.0) {
        return Err(Error::invalid(format!("horizon must be >= 0, got {horizon}")));
    }
    if let Some(d) = thresholds.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::invalid(format!("threshold must be > 0, got {d}")));
    }
    let mut order: Vec<usize> = (0..thresholds.len()).collect();
    order.sort_by(|&i, &j| thresholds[i].total_cmp(&thresholds[j]));
    let k = thresholds.len();
    let rows = plan.map_paths(|p| {
        let mut rng = path_rng(plan.seed, purpose, p);
        let mut out = vec![None; k];
        passage_times_into(model, thresholds, &order, horizon, &mut rng, &mut out);
        out
    });
    Ok(thresholds
        .iter()
        .enumerate()
        .map(|(j, &d)| TriggerSample {
            taus: rows.iter().map(|r| r[j]).collect(),
            measure: model.measure(),
            threshold: d,
            horizon,
            n_paths: plan.n_paths,
            seed: plan.seed,
        })
        .collect())
}

fn default_purpose(model: &LossModel) -> Purpose {
    match model.measure() {
        Measure::Physical => Purpose::PhysicalLoss,
        Measure::Tilted { .. } => Purpose::ConversionLoss,
    }
}

/// Empirical distribution of `τ = inf{t : L_t ≥ d}` censored at `horizon`.
pub fn trigger_distribution(model: &LossModel, d: f64, horizon: f64, plan: &McPlan) -> Result<TriggerSample> {
    let mut v = trigger_samples(model, &[d], horizon, plan, default_purpose(model))?;
    Ok(v.remove(0))
}

/// Monte Carlo `P(L_t < d)`.
pub fn survival_prob(model: &LossModel, t: f64, d: f64, plan: &McPlan) -> Result<Estimate> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("t must be >= 0, got {t}")));
    }
    Ok(trigger_distribution(model, d, t, plan)?.survival(t))
}

/// Values of `L_t` at each of `times` (sorted ascending), one row per path.
pub fn loss_at_times(model: &LossModel, times: &[f64], plan: &McPlan, purpose: Purpose) -> Vec<Vec<f64>> {
    let horizon = times.iter().copied().fold(0.0, f64::max);
    plan.map_paths(|p| {
        let mut rng = path_rng(plan.seed, purpose, p);
        let path = simulate_loss_path(model, horizon, &mut rng);
        times.iter().map(|&t| path.loss_at(t)).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::PathRng;
    use crate::stats::{ks_pvalue, ks_statistic};
    use rand::SeedableRng;

    fn seasonal() -> IntensityParams {
        IntensityParams {
            a: 24.93,
            b: 0.03,
            p: 5.61,
            phase: 7.07,
            q: 0.30,
            period: 4.76,
        }
    }

    fn burr() -> Severity {
        Severity::burr(1.57, 0.7, 9.53e7).unwrap()
    }

    #[test]
    fn zero_intensity_has_no_events() {
        let mut rng = PathRng::seed_from_u64(1);
        assert!(simulate_event_times(&IntensityParams::constant(0.0), 5.0, &mut rng).is_empty());
    }

    #[test]
    fn event_times_increase_within_horizon() {
        let mut rng = PathRng::seed_from_u64(2);
        let ts = simulate_event_times(&seasonal(), 5.0, &mut rng);
        assert!(ts.windows(2).all(|w| w[0] < w[1]));
        assert!(ts.iter().all(|t| (0.0..=5.0).contains(t)));
    }

    #[test]
    fn constant_rate_count_mean() {
        let n = 100_000;
        let counts: Vec<f64> = (0..n)
            .map(|i| {
                let mut rng = path_rng(3, Purpose::Auxiliary(0), i);
                simulate_event_times(&IntensityParams::constant(7.0), 1.0, &mut rng).len() as f64
            })
            .collect();
        let e = Estimate::from_samples(&counts);
        assert!(e.covers(7.0, 3.0), "{e:?}");
    }

    #[test]
    fn seasonal_count_matches_integral() {
        let n = 20_000;
        let counts: Vec<f64> = (0..n)
            .map(|i| {
                let mut rng = path_rng(4, Purpose::Auxiliary(0), i);
                simulate_event_times(&seasonal(), 5.0, &mut rng).len() as f64
            })
            .collect();
        let e = Estimate::from_samples(&counts);
        let expected = cumulative_intensity(&seasonal(), 0.0, 5.0).unwrap();
        assert!(e.covers(expected, 3.0), "{e:?} vs {expected}");
    }

    #[test]
    fn arrivals_do_not_depend_on_horizon() {
        let mut a = path_rng(5, Purpose::Auxiliary(1), 0);
        let mut b = path_rng(5, Purpose::Auxiliary(1), 0);
        let short = simulate_event_times(&seasonal(), 2.5, &mut a);
        let long = simulate_event_times(&seasonal(), 5.0, &mut b);
        assert_eq!(short[..], long[..short.len()]);
    }

    #[test]
    fn identity_tilts() {
        let m = LossModel::new(seasonal(), burr());
        assert_eq!(tilt_model(&m, 5.81e-11, 1.0).unwrap(), m);
        assert_eq!(tilt_model(&m, 0.0, 0.3).unwrap(), m);
        assert!(tilt_model(&m, -1.0, 0.5).is_err());
    }

    #[test]
    fn tilts_compose() {
        let m = LossModel::new(IntensityParams::constant(3.0), Severity::exponential(2.0).unwrap());
        let once = tilt_model(&m, 0.5, 0.0).unwrap();
        let twice = tilt_model(&tilt_model(&m, 0.2, 0.0).unwrap(), 0.3, 0.0).unwrap();
        assert!((once.tilt_rate() - twice.tilt_rate()).abs() < 1e-15);
        assert_eq!(once.laplace_at_tilt(), 2.0 / 2.5);
    }

    #[test]
    fn tilted_exponential_is_exponential() {
        let m = LossModel::new(IntensityParams::constant(1.0), Severity::exponential(1.0).unwrap());
        let t = tilt_model(&m, 0.8, 0.5).unwrap();
        let mut rng = path_rng(6, Purpose::Auxiliary(2), 0);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_severity(&t, &mut rng)).collect();
        let d = ks_statistic(&xs, |x| 1.0 - (-1.4 * x).exp());
        assert!(ks_pvalue(d, xs.len()) > 0.01);
    }

    #[test]
    fn untilted_sampler_takes_every_proposal() {
        let m = LossModel::new(seasonal(), burr());
        let mut a = path_rng(7, Purpose::Auxiliary(3), 0);
        let mut b = path_rng(7, Purpose::Auxiliary(3), 0);
        for _ in 0..100 {
            assert_eq!(sample_severity(&m, &mut a), burr().sample(&mut b));
        }
    }

    #[test]
    fn tilted_burr_mean_matches_quadrature() {
        let alpha = 5.81e-11;
        let m = tilt_model(&LossModel::new(seasonal(), burr()), alpha, 0.0).unwrap();
        let mut rng = path_rng(8, Purpose::Auxiliary(4), 0);
        let xs: Vec<f64> = (0..1_000_000).map(|_| sample_severity(&m, &mut rng)).collect();
        let e = Estimate::from_samples(&xs);
        let exact = burr().tilted_mean(alpha).unwrap();
        assert!(e.covers(exact, 3.0), "{e:?} vs {exact}");
        assert!(exact < burr().mean().unwrap());
    }

    #[test]
    fn passage_edge_cases() {
        let m = LossModel::new(IntensityParams::constant(5.0), Severity::exponential(1.0).unwrap());
        let mut rng = path_rng(9, Purpose::Auxiliary(5), 0);
        assert_eq!(first_passage_time(&m, f64::INFINITY, 10.0, &mut rng), None);
        // a tiny threshold triggers at the first arrival
        let mut a = path_rng(9, Purpose::Auxiliary(5), 1);
        let mut b = path_rng(9, Purpose::Auxiliary(5), 1);
        let tau = first_passage_time(&m, 1e-300, 10.0, &mut a);
        let first = simulate_event_times(&IntensityParams::constant(5.0), 10.0, &mut b)[0];
        assert_eq!(tau, Some(first));
    }

    #[test]
    fn multi_threshold_matches_single() {
        let m = LossModel::new(seasonal(), burr());
        let plan = McPlan::new(2000, 11);
        let ds = [4.0e10, 1.3e10, f64::INFINITY, 2.9e10];
        let many = trigger_samples(&m, &ds, 5.0, &plan, Purpose::PhysicalLoss).unwrap();
        for (j, &d) in ds.iter().enumerate() {
            let one = trigger_distribution(&m, d, 5.0, &plan).unwrap();
            assert_eq!(one.taus, many[j].taus);
        }
        assert_eq!(many[2].censored_fraction(), 1.0);
    }

    #[test]
    fn sample_structure() {
        let m = LossModel::new(seasonal(), burr());
        let s = trigger_distribution(&m, 1.3e10, 5.0, &McPlan::new(5000, 12)).unwrap();
        assert!(s.taus.iter().flatten().all(|t| *t <= 5.0));
        let mut prev = 0.0;
        for i in 0..=50 {
            let c = s.cdf(i as f64 * 0.1);
            assert!(c >= prev);
            prev = c;
        }
        assert!((s.censored_fraction() - (1.0 - s.cdf(5.0))).abs() < 1e-15);
        assert_eq!(s.survival(0.0).mean, 1.0);
        let single = trigger_distribution(&m, 1.3e10, 5.0, &McPlan::new(1, 12)).unwrap();
        assert_eq!(
            single,
            trigger_distribution(&m, 1.3e10, 5.0, &McPlan::new(1, 12)).unwrap()
        );
    }

    #[test]
    fn reproducible_across_substreams() {
        let m = LossModel::new(seasonal(), burr());
        let a = trigger_distribution(&m, 2e10, 5.0, &McPlan::new(3000, 13).with_substreams(1)).unwrap();
        let b = trigger_distribution(&m, 2e10, 5.0, &McPlan::new(3000, 13).with_substreams(17)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_dump_layout() {
        let s = TriggerSample {
            taus: vec![Some(0.5), None],
            measure: Measure::Physical,
            threshold: 1.0,
            horizon: 1.0,
            n_paths: 2,
            seed: 0,
        };
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "path_id,tau_or_empty,censored_flag\n0,0.5,0\n1,,1\n"
        );
    }
}
