//! Brute-force joint simulation of rates, share price and losses.
//!
//! Each path simulates the loss events first, then walks a time grid made of
//! `dt` steps, coupon dates and loss-event times, so the trigger time and the
//! share's jumps are exact. The share is
//! `S_t = S0 · S^F_t · S^C_t` with
//!
//! ```text
//! d log S^F = (r − σ_S²/2) dt + σ_S dW²,    S^C_t = exp(−α L_t + α κ Λ(0,t))
//! ```
//!
//! and `W² = ρ W¹ + √(1−ρ²) W^⊥`, where `W¹` drives the short rate.
//! Forward LIBOR at a reset date comes from the bond formula at the simulated
//! state. Payoffs are discounted with the simulated bank account.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::config::{ConversionRule, ResolvedConfig, Threshold};
use crate::error::{Error, Result};
use crate::loss::{simulate_loss_path, CumulativeIntensity, Measure};
use crate::pricing::{PriceBreakdown, SpreadDiscounting};
use crate::rates::{initial_state, rate_and_root, rate_step, RateScheme};
use crate::rng::{path_rng, McPlan, PathRng, Purpose};
use crate::stats::Estimate;

pub const DEFAULT_DT: f64 = 1.0 / 252.0;

/// One simulated path, recorded on its full grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PathBundle {
    pub grid: Vec<f64>,
    pub r: Vec<f64>,
    /// `B(0,t) = exp(−∫₀ᵗ r du)`.
    pub bank: Vec<f64>,
    /// Financial share factor `S^F_t` (starts at 1).
    pub s_f: Vec<f64>,
    /// Catastrophe share factor `S^C_t` (starts at 1).
    pub s_c: Vec<f64>,
    pub loss: Vec<f64>,
    pub tau: Option<f64>,
    /// Standard-normal increments of the two Brownian motions, per step
    /// (scaled by `√h`).
    pub dw1: Vec<f64>,
    pub dw2: Vec<f64>,
}

impl PathBundle {
    pub fn share(&self, s0: f64, i: usize) -> f64 {
        s0 * self.s_f[i] * self.s_c[i]
    }
}

/// State at one grid point.
#[derive(Debug, Clone, Copy)]
struct Point {
    t: f64,
    root: f64,
    r: f64,
    int_r: f64,
    log_sf: f64,
    loss: f64,
    /// Index of the mark (coupon date or requested time) at this point.
    mark: Option<usize>,
    dw1: f64,
    dw2: f64,
}

/// Joint path simulator for one configuration.
#[derive(Debug, Clone)]
pub struct JointSimulator<'a> {
    cfg: &'a ResolvedConfig,
    cum: CumulativeIntensity,
    dt: f64,
    scheme: RateScheme,
}

impl<'a> JointSimulator<'a> {
    pub fn new(cfg: &'a ResolvedConfig, dt: f64, horizon: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
        }
        Ok(JointSimulator {
            cfg,
            cum: CumulativeIntensity::new(cfg.loss.intensity, horizon.max(cfg.contract().term))?,
            dt,
            scheme: RateScheme::SignedRoot,
        })
    }

    pub fn with_scheme(mut self, scheme: RateScheme) -> Self {
        self.scheme = scheme;
        self
    }

    fn catastrophe_factor(&self, t: f64, loss: f64) -> f64 {
        let a = self.cfg.alpha;
        if a == 0.0 {
            return 1.0;
        }
        (-a * loss + a * self.cfg.kappa * self.cum.at(t)).exp()
    }

    /// Walks `[0, horizon]`; `marks` must be sorted. `visit` returns `false`
    /// to stop early.
    fn walk<R: Rng + ?Sized>(&self, horizon: f64, marks: &[f64], rng: &mut R, mut visit: impl FnMut(&Point) -> bool) {
        let cfg = self.cfg;
        let m = cfg.market();
        let events = simulate_loss_path(&cfg.loss, horizon, rng);
        let (rho, sig) = (m.rho, m.sigma_s);
        let rho_perp = (1.0 - rho * rho).max(0.0).sqrt();

        let mut state = initial_state(self.scheme, cfg.r0);
        let (r0, root0) = rate_and_root(self.scheme, state);
        let mut p = Point {
            t: 0.0,
            root: root0,
            r: r0,
            int_r: 0.0,
            log_sf: 0.0,
            loss: 0.0,
            mark: None,
            dw1: 0.0,
            dw2: 0.0,
        };
        if !visit(&p) {
            return;
        }
        let steps = (horizon / self.dt).ceil() as usize;
        let (mut k, mut mi, mut ei) = (1usize, 0usize, 0usize);
        let eps = 1e-12;
        loop {
            let grid_t = if k <= steps {
                (k as f64 * self.dt).min(horizon)
            } else {
                f64::INFINITY
            };
            let mark_t = marks.get(mi).copied().unwrap_or(f64::INFINITY);
            let event_t = events.times.get(ei).copied().unwrap_or(f64::INFINITY);
            let t = grid_t.min(mark_t).min(event_t);
            if !t.is_finite() || t > horizon + eps {
                return;
            }
            let h = t - p.t;
            let (z1, z2): (f64, f64) = if h > 0.0 {
                (rng.sample(StandardNormal), rng.sample(StandardNormal))
            } else {
                (0.0, 0.0)
            };
            let sh = h.max(0.0).sqrt();
            let dw1 = sh * z1;
            let dw2 = rho * dw1 + rho_perp * sh * z2;
            let before = p.r;
            if h > 0.0 {
                state = rate_step(self.scheme, &cfg.rates, state, h, z1);
            }
            let (r, root) = rate_and_root(self.scheme, state);
            let int_step = 0.5 * h * (before + r);
            p.int_r += int_step;
            p.log_sf += int_step - 0.5 * sig * sig * h + sig * dw2;
            p.t = t;
            p.r = r;
            p.root = root;
            p.dw1 = dw1;
            p.dw2 = dw2;
            p.mark = None;
            if (grid_t - t).abs() <= eps {
                k += 1;
            }
            if (mark_t - t).abs() <= eps {
                p.mark = Some(mi);
                mi += 1;
            }
            if (event_t - t).abs() <= eps {
                p.loss += events.amounts[ei];
                ei += 1;
            }
            if !visit(&p) {
                return;
            }
        }
    }

    /// Full record of one path over `[0, horizon]`; `extra` times are added
    /// to the grid.
    pub fn simulate_joint_path<R: Rng + ?Sized>(&self, horizon: f64, extra: &[f64], rng: &mut R) -> PathBundle {
        let mut marks: Vec<f64> = self
            .cfg
            .coupon_dates()
            .into_iter()
            .filter(|t| *t <= horizon)
            .chain(extra.iter().copied())
            .collect();
        marks.sort_by(f64::total_cmp);
        marks.dedup();
        let d = self.cfg.threshold();
        let mut b = PathBundle::default();
        self.walk(horizon, &marks, rng, |p| {
            b.grid.push(p.t);
            b.r.push(p.r);
            b.bank.push((-p.int_r).exp());
            b.s_f.push(p.log_sf.exp());
            b.s_c.push(self.catastrophe_factor(p.t, p.loss));
            b.loss.push(p.loss);
            b.dw1.push(p.dw1);
            b.dw2.push(p.dw2);
            if b.tau.is_none() && p.loss >= d {
                b.tau = Some(p.t);
            }
            true
        });
        b
    }

    /// Discounted payoffs of one path, per unit nominal.
    fn payoff<R: Rng + ?Sized>(&self, rng: &mut R, spread: SpreadDiscounting) -> PathPayoff {
        let cfg = self.cfg;
        let c = cfg.contract();
        let dates = cfg.coupon_dates();
        let d = cfg.threshold();
        let s0 = cfg.market().s0;
        let reset = cfg.rates.coefficients(c.tenor);
        let mut libor = cfg.libor0;
        let mut out = PathPayoff::default();
        self.walk(c.term, &dates, rng, |p| {
            if p.loss >= d {
                let bank = (-p.int_r).exp();
                let share = s0 * p.log_sf.exp() * self.catastrophe_factor(p.t, p.loss);
                let shares = match c.conversion {
                    ConversionRule::ConstantPrice { k } => c.zeta / k,
                    ConversionRule::PowerOfShare { nu } => c.zeta / share.powf(nu),
                };
                out.tau = Some(p.t);
                out.bank_at_tau = Some(bank);
                out.share_at_tau = Some(share);
                out.i2 = shares * share * bank;
                return false;
            }
            if let Some(i) = p.mark {
                let bank = (-p.int_r).exp();
                let spread_value = match spread {
                    SpreadDiscounting::Undiscounted if i > 0 => c.c * c.tenor,
                    _ => c.c * c.tenor * bank,
                };
                out.i1 += libor * c.tenor * bank + spread_value;
                libor = (1.0 / reset.price_from_root(p.root) - 1.0) / c.tenor;
                if i + 1 == dates.len() {
                    out.i3 = bank;
                }
            }
            true
        });
        out
    }
}

/// Outcome of one oracle path, per unit nominal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PathPayoff {
    pub tau: Option<f64>,
    pub bank_at_tau: Option<f64>,
    pub share_at_tau: Option<f64>,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
}

impl PathPayoff {
    pub fn total(&self) -> f64 {
        self.i1 + self.i2 + self.i3
    }
}

/// Per-path outcomes, in path order.
pub fn oracle_paths(
    cfg: &ResolvedConfig,
    plan: &McPlan,
    dt: f64,
    spread: SpreadDiscounting,
) -> Result<Vec<PathPayoff>> {
    let sim = JointSimulator::new(cfg, dt, cfg.contract().term)?;
    Ok(plan.map_paths(|p| {
        let mut rng: PathRng = path_rng(plan.seed, Purpose::JointPath, p);
        sim.payoff(&mut rng, spread)
    }))
}

/// Writes `path_id,tau,B_at_tau,S_at_tau,I1,I2,I3` (empty cells when the
/// path never triggers).
pub fn write_path_csv<W: std::io::Write>(paths: &[PathPayoff], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path_id", "tau", "B_at_tau", "S_at_tau", "I1", "I2", "I3"])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for (i, p) in paths.iter().enumerate() {
        w.write_record([
            i.to_string(),
            opt(p.tau),
            opt(p.bank_at_tau),
            opt(p.share_at_tau),
            p.i1.to_string(),
            p.i2.to_string(),
            p.i3.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Joint-simulation estimate of the price, path by path.
pub fn price_direct(cfg: &ResolvedConfig, plan: &McPlan, dt: f64) -> Result<PriceBreakdown> {
    price_direct_with(cfg, plan, dt, SpreadDiscounting::Discounted)
}

pub fn price_direct_with(
    cfg: &ResolvedConfig,
    plan: &McPlan,
    dt: f64,
    spread: SpreadDiscounting,
) -> Result<PriceBreakdown> {
    let rows = oracle_paths(cfg, plan, dt, spread)?;
    let col = |f: fn(&PathPayoff) -> f64| Estimate::from_samples(&rows.iter().map(f).collect::<Vec<_>>());
    let (i1, i2, i3) = (col(|p| p.i1), col(|p| p.i2), col(|p| p.i3));
    let total = col(PathPayoff::total);
    let c = cfg.contract();
    Ok(PriceBreakdown {
        v0: c.nominal * (i1.mean + i2.mean + i3.mean),
        i1: i1.mean,
        i2: i2.mean,
        i3: i3.mean,
        se_i1: i1.se,
        se_i2: i2.se,
        se_i3: i3.se,
        se_total: c.nominal * total.se,
        rule: c.conversion,
        threshold: Threshold(c.threshold.0),
        term: c.term,
        sigma_s: cfg.market().sigma_s,
        config_hash: cfg.hash(),
        seed: plan.seed,
        n_paths: plan.n_paths,
        survival_measure: Measure::Physical,
        conversion_measure: Measure::Physical,
        spread,
    })
}

/// Sample means of `S^C_t` and `B(0,t)·S_t` at each time in `times`.
pub fn martingale_means(
    cfg: &ResolvedConfig,
    times: &[f64],
    plan: &McPlan,
    dt: f64,
) -> Result<Vec<(Estimate, Estimate)>> {
    let mut marks = times.to_vec();
    marks.sort_by(f64::total_cmp);
    let horizon = marks.last().copied().unwrap_or(0.0);
    let sim = JointSimulator::new(cfg, dt, horizon)?;
    let s0 = cfg.market().s0;
    let rows = plan.map_paths(|p| {
        let mut rng = path_rng(plan.seed, Purpose::JointPath, p);
        let mut out = vec![(0.0, 0.0); marks.len()];
        sim.walk(horizon, &marks, &mut rng, |pt| {
            if let Some(i) = pt.mark {
                let sc = sim.catastrophe_factor(pt.t, pt.loss);
                out[i] = (sc, (-pt.int_r).exp() * s0 * pt.log_sf.exp() * sc);
            }
            true
        });
        out
    });
    Ok((0..marks.len())
        .map(|i| {
            let sc: Vec<f64> = rows.iter().map(|r| r[i].0).collect();
            let bs: Vec<f64> = rows.iter().map(|r| r[i].1).collect();
            (Estimate::from_samples(&sc), Estimate::from_samples(&bs))
        })
        .collect())
}

/// Analytic and joint-simulation prices side by side.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub analytic: PriceBreakdown,
    pub oracle: PriceBreakdown,
    /// `(V0_analytic − V0_oracle) / √(se_a² + se_o²)`.
    pub z_score: f64,
}

impl Comparison {
    pub fn new(analytic: PriceBreakdown, oracle: PriceBreakdown) -> Self {
        let a = Estimate {
            mean: analytic.v0,
            se: analytic.se_total,
            n: analytic.n_paths,
        };
        let o = Estimate {
            mean: oracle.v0,
            se: oracle.se_total,
            n: oracle.n_paths,
        };
        Comparison {
            z_score: a.z_score(&o),
            analytic,
            oracle,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{IntensityParams, Severity};
    use crate::pricing::{riskless_floater, PricingOptions};

    fn small() -> ResolvedConfig {
        ResolvedConfig::canonical()
            .modified(|c| {
                c.loss.intensity = IntensityParams::constant(10.0);
                c.loss.severity = Severity::Exponential { beta: 1.0 };
                c.market.alpha = Some(0.3);
                c.market.s0 = 10.0;
                c.contract.term = 1.0;
                c.contract.threshold = Threshold(3.0);
                c.contract.zeta = 0.5;
                c.contract.conversion = ConversionRule::ConstantPrice { k: 10.0 };
            })
            .unwrap()
    }

    #[test]
    fn bundle_invariants() {
        let cfg = small();
        let sim = JointSimulator::new(&cfg, DEFAULT_DT, 1.0).unwrap();
        let mut rng = path_rng(1, Purpose::Auxiliary(10), 0);
        let b = sim.simulate_joint_path(1.0, &[0.3], &mut rng);
        assert!(b.grid.windows(2).all(|w| w[0] < w[1]));
        assert!(b.grid.contains(&0.3));
        assert!(b.loss.windows(2).all(|w| w[0] <= w[1]));
        for i in 0..b.grid.len() {
            let expected = (-0.3 * b.loss[i] + 0.3 * cfg.kappa * 10.0 * b.grid[i]).exp();
            assert!((b.s_c[i] / expected - 1.0).abs() < 1e-9);
        }
        // S^C jumps down exactly where the loss jumps
        for i in 1..b.grid.len() {
            if b.loss[i] > b.loss[i - 1] {
                assert!(b.s_c[i] < b.s_c[i - 1]);
            }
        }
        let first = b.loss.iter().position(|l| *l >= 3.0).map(|i| b.grid[i]);
        assert_eq!(b.tau, first);
    }

    #[test]
    fn zero_alpha_means_no_share_jumps() {
        let cfg = small().modified(|c| c.market.alpha = Some(0.0)).unwrap();
        let sim = JointSimulator::new(&cfg, DEFAULT_DT, 1.0).unwrap();
        let mut rng = path_rng(2, Purpose::Auxiliary(10), 0);
        let b = sim.simulate_joint_path(1.0, &[], &mut rng);
        assert!(b.s_c.iter().all(|s| *s == 1.0));
    }

    #[test]
    fn perfect_correlation() {
        for rho in [1.0, -1.0] {
            let cfg = small().modified(|c| c.market.rho = rho).unwrap();
            let sim = JointSimulator::new(&cfg, DEFAULT_DT, 1.0).unwrap();
            let mut rng = path_rng(3, Purpose::Auxiliary(10), 0);
            let b = sim.simulate_joint_path(1.0, &[], &mut rng);
            for (a, c) in b.dw1.iter().zip(&b.dw2) {
                assert!((c - rho * a).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn correlation_estimate() {
        let cfg = small();
        let sim = JointSimulator::new(&cfg, 0.01, 1.0).unwrap();
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for p in 0..1000 {
            let mut rng = path_rng(4, Purpose::Auxiliary(11), p);
            let b = sim.simulate_joint_path(1.0, &[], &mut rng);
            for (x, y) in b.dw1.iter().zip(&b.dw2).skip(1) {
                sxy += x * y;
                sxx += x * x;
                syy += y * y;
            }
        }
        let corr = sxy / (sxx * syy).sqrt();
        // about 1.1e5 increments: se of the sample correlation is (1−ρ²)/√n
        assert!((corr + 0.5).abs() < 3.0 * 0.75 / (1.1e5f64).sqrt(), "{corr}");
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = small();
        let plan = McPlan::new(500, 5);
        let a = price_direct(&cfg, &plan, DEFAULT_DT).unwrap();
        let b = price_direct(&cfg, &plan.with_substreams(3), DEFAULT_DT).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn riskless_case_matches_closed_form() {
        let cfg = ResolvedConfig::canonical()
            .modified(|c| c.loss.intensity = IntensityParams::constant(0.0))
            .unwrap();
        let o = price_direct(&cfg, &McPlan::new(20_000, 6), DEFAULT_DT).unwrap();
        let exact = riskless_floater(&cfg, PricingOptions::default()).unwrap();
        assert!(
            (o.v0 - exact).abs() < 3.0 * o.se_total,
            "{} vs {exact} ± {}",
            o.v0,
            o.se_total
        );
    }

    #[test]
    fn share_martingales() {
        let cfg = small();
        let m = martingale_means(&cfg, &[0.5, 1.0], &McPlan::new(20_000, 7), DEFAULT_DT).unwrap();
        for (sc, bs) in m {
            assert!(sc.covers(1.0, 3.0), "{sc:?}");
            assert!(bs.covers(10.0, 3.0), "{bs:?}");
        }
    }

    #[test]
    fn path_dump_layout() {
        let cfg = small();
        let paths = oracle_paths(&cfg, &McPlan::new(50, 8), DEFAULT_DT, SpreadDiscounting::Discounted).unwrap();
        let mut buf = Vec::new();
        write_path_csv(&paths, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("path_id,tau,B_at_tau,S_at_tau,I1,I2,I3"));
        assert_eq!(lines.count(), 50);
        for p in &paths {
            assert_eq!(p.tau.is_some(), p.i2 > 0.0);
            assert_eq!(p.tau.is_none(), p.i3 > 0.0);
        }
    }

    #[test]
    fn agrees_with_exact_prices() {
        use crate::pricing::price_exact;
        let rules = [
            ConversionRule::ConstantPrice { k: 10.0 },
            ConversionRule::PowerOfShare { nu: 1.0 },
            ConversionRule::PowerOfShare { nu: 0.5 },
        ];
        for (i, rule) in rules.into_iter().enumerate() {
            let cfg = small().modified(|c| c.contract.conversion = rule).unwrap();
            let exact = price_exact(&cfg, PricingOptions::default()).unwrap().unwrap();
            let o = price_direct(&cfg, &McPlan::new(40_000, 30 + i as u64), DEFAULT_DT).unwrap();
            let z = (o.v0 - exact.v0) / o.se_total;
            assert!(z.abs() < 4.0, "{rule}: oracle {} exact {} z {z}", o.v0, exact.v0);
        }
    }
}
