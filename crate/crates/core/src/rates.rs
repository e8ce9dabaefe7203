//! Double-square-root short-rate model.
//!
//! Under a measure where
//!
//! ```text
//! dr = θ (m − √r) dt + σ √r dW,     m = σ² / (4θ)
//! ```
//!
//! the zero-coupon bond price has the closed form
//! `P(r, s) = A(s) · exp(B(s)·r + C(s)·√r)`.
//!
//! Writing `x = √r`, Itô's lemma gives `dx = −(θ/2) dt + (σ/2) dW`: the root
//! is a Brownian motion with drift, and `r = x²`. The closed form prices
//! exactly this process, with `x` allowed to pass through zero (no boundary
//! condition at `r = 0`), so `C(s)·√r` must be read as `C(s)·x` with the
//! signed root. [`RateScheme::SignedRoot`] simulates that process and is the
//! scheme consistent with [`zcb_price`]. [`RateScheme::FullTruncation`]
//! is the usual Euler scheme on `r` with `√max(r, 0)`; it keeps the root
//! non-negative and therefore describes a different (reflected) model whose
//! long-maturity bond prices differ from the closed form.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{path_rng, McPlan, PathRng, Purpose};
use crate::stats::Estimate;

/// Parameters `(θ, σ)` of the model under one measure. `m = σ²/(4θ)` is
/// derived on demand and never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    theta_r: f64,
    sigma_r: f64,
}

impl RateParams {
    pub fn new(theta_r: f64, sigma_r: f64) -> Result<Self> {
        if !(theta_r > 0.0 && theta_r.is_finite()) {
            return Err(Error::config("rates.theta_r", format!("must be > 0, got {theta_r}")));
        }
        if !(sigma_r > 0.0 && sigma_r.is_finite()) {
            return Err(Error::config("rates.sigma_r", format!("must be > 0, got {sigma_r}")));
        }
        Ok(RateParams { theta_r, sigma_r })
    }

    pub fn theta_r(&self) -> f64 {
        self.theta_r
    }

    pub fn sigma_r(&self) -> f64 {
        self.sigma_r
    }

    pub fn m_r(&self) -> f64 {
        self.sigma_r * self.sigma_r / (4.0 * self.theta_r)
    }

    pub fn coefficients(&self, s: f64) -> ZcbCoefficients {
        ZcbCoefficients::new(self, s)
    }
}

/// Bond-price coefficients at maturity `s`, with the intermediate constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZcbCoefficients {
    pub s: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub psi: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl ZcbCoefficients {
    fn new(p: &RateParams, s: f64) -> Self {
        let (theta, sigma) = (p.theta_r, p.sigma_r);
        let sigma2 = sigma * sigma;
        let psi = (2.0 * sigma2).sqrt();
        let c1 = theta * theta / (psi * sigma2);
        let c2 = psi / 4.0 - theta * theta / (psi * psi);
        let c3 = -4.0 * theta * theta / (psi * psi * psi);
        let (a, b, c) = if s == 0.0 {
            (1.0, 0.0, 0.0)
        } else {
            let half = 0.5 * psi * s;
            let th = half.tanh();
            // c1 + c3/(1+e^{ψs}) = c1·tanh(ψs/2) because c3 = −2·c1
            let log_a = 0.5 * (std::f64::consts::LN_2 - softplus(psi * s)) + c1 * th + c2 * s;
            let b = -(psi / sigma2) * th;
            // (1 − e^{ψs/2})² / (1 + e^{ψs}) = (1 − sech(ψs/2))... written stably
            let em = (-half).exp();
            let num = (1.0 - em) * (1.0 - em);
            let den = em * em + 1.0;
            let c = 2.0 * theta * num / (sigma2 * den);
            (log_a.exp(), b, c)
        };
        ZcbCoefficients {
            s,
            a,
            b,
            c,
            psi,
            c1,
            c2,
            c3,
        }
    }

    /// Price for a signed root state `x` (`r = x²`).
    pub fn price_from_root(&self, x: f64) -> f64 {
        self.a * (self.b * x * x + self.c * x).exp()
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Zero-coupon bond price for initial rate `r0 ≥ 0` and maturity `s ≥ 0`.
pub fn zcb_price(r0: f64, s: f64, params: &RateParams) -> Result<f64> {
    if !(r0 >= 0.0) {
        return Err(Error::invalid(format!("initial rate must be >= 0, got {r0}")));
    }
    if !(s >= 0.0) {
        return Err(Error::invalid(format!("maturity must be >= 0, got {s}")));
    }
    Ok(zcb_price_from_root(r0.sqrt(), s, params))
}

/// Bond price as a function of the signed root state.
pub fn zcb_price_from_root(x: f64, s: f64, params: &RateParams) -> f64 {
    params.coefficients(s).price_from_root(x)
}

/// Simple `Δ`-period rate implied by the bond curve at `r0`:
/// `(1/P(r0, Δ) − 1) / Δ`.
pub fn implied_initial_libor(params: &RateParams, r0: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("tenor must be > 0, got {delta}")));
    }
    let p = zcb_price(r0, delta, params)?;
    Ok((1.0 / p - 1.0) / delta)
}

/// Parameters after a Girsanov change with constant kernel `gamma`:
/// `θ̃ = θ − γσ`, volatility unchanged, `m̃ = σ²/(4θ̃)`.
pub fn girsanov_transform(params: &RateParams, gamma: f64) -> Result<RateParams> {
    let theta = params.theta_r - gamma * params.sigma_r;
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::Numerical(format!(
            "transformed drift coefficient θ − γσ = {theta} is not positive (γ = {gamma})"
        )));
    }
    Ok(RateParams {
        theta_r: theta,
        sigma_r: params.sigma_r,
    })
}

/// Rate parameters used by the share-power conversion leg.
///
/// The share-measure drift shift gives `θ* = θ − σρσ_S(1−ν)`; scaling the rate
/// by `ν` gives `(θ°, σ°) = (√ν θ*, √ν σ)`. At `ν = 1` the input is returned
/// unchanged.
pub fn conversion_measure_params(params: &RateParams, rho: f64, sigma_s: f64, nu: f64) -> Result<RateParams> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::invalid(format!("nu must lie in (0, 1], got {nu}")));
    }
    if nu == 1.0 {
        return Ok(*params);
    }
    let star = girsanov_transform(params, rho * sigma_s * (1.0 - nu))?;
    let scale = nu.sqrt();
    Ok(RateParams {
        theta_r: scale * star.theta_r,
        sigma_r: scale * star.sigma_r,
    })
}

/// `E[exp(−ν ∫₀ˢ r du)]` under the share-adjusted measure: a unit bond in the
/// scaled rate `ν·r`, which starts from `ν·r0`.
pub fn conversion_discount(r0: f64, s: f64, scaled: &RateParams, nu: f64) -> Result<f64> {
    zcb_price(nu * r0, s, scaled)
}

/// Discretisation of the short-rate SDE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateScheme {
    /// Euler on the signed root `x`, `r = x²`. Exact in law on the grid.
    #[default]
    SignedRoot,
    /// Euler on `r` with `√max(r, 0)` in drift and diffusion.
    FullTruncation,
}

/// Simulated rate path on a uniform grid (the last step may be shorter).
#[derive(Debug, Clone, PartialEq)]
pub struct RatePath {
    pub times: Vec<f64>,
    /// Signed root for [`RateScheme::SignedRoot`]; `√max(r,0)` otherwise.
    pub root: Vec<f64>,
    pub rate: Vec<f64>,
}

impl RatePath {
    /// Trapezoidal `∫ r dt` over the whole path.
    pub fn integrated_rate(&self) -> f64 {
        self.times
            .windows(2)
            .zip(self.rate.windows(2))
            .map(|(t, r)| 0.5 * (t[1] - t[0]) * (r[0].max(0.0) + r[1].max(0.0)))
            .sum()
    }
}

/// One Euler step of length `h` driven by the standard normal `z`.
/// `state` is the signed root or the raw rate depending on the scheme.
#[inline]
pub(crate) fn rate_step(scheme: RateScheme, params: &RateParams, state: f64, h: f64, z: f64) -> f64 {
    match scheme {
        RateScheme::SignedRoot => state - 0.5 * params.theta_r * h + 0.5 * params.sigma_r * h.sqrt() * z,
        RateScheme::FullTruncation => {
            let root = state.max(0.0).sqrt();
            state + params.theta_r * (params.m_r() - root) * h + params.sigma_r * root * h.sqrt() * z
        }
    }
}

/// Short rate `r ≥ 0` and the root used in bond prices, from the scheme state.
#[inline]
pub(crate) fn rate_and_root(scheme: RateScheme, state: f64) -> (f64, f64) {
    match scheme {
        RateScheme::SignedRoot => (state * state, state),
        RateScheme::FullTruncation => {
            let r = state.max(0.0);
            (r, r.sqrt())
        }
    }
}

pub(crate) fn initial_state(scheme: RateScheme, r0: f64) -> f64 {
    match scheme {
        RateScheme::SignedRoot => r0.sqrt(),
        RateScheme::FullTruncation => r0,
    }
}

/// Simulates the short rate on `[0, horizon]` with step `dt`.
/// Length is `ceil(horizon/dt) + 1`.
pub fn simulate_short_rate_path<R: Rng + ?Sized>(
    params: &RateParams,
    r0: f64,
    horizon: f64,
    dt: f64,
    scheme: RateScheme,
    rng: &mut R,
) -> Result<RatePath> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    if !(horizon >= 0.0) || !(r0 >= 0.0) {
        return Err(Error::invalid("horizon and r0 must be >= 0"));
    }
    let steps = (horizon / dt).ceil() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut root = Vec::with_capacity(steps + 1);
    let mut rate = Vec::with_capacity(steps + 1);
    let mut state = initial_state(scheme, r0);
    let mut t = 0.0;
    let push = |t: f64, state: f64, times: &mut Vec<f64>, root: &mut Vec<f64>, rate: &mut Vec<f64>| {
        let (r, x) = rate_and_root(scheme, state);
        times.push(t);
        root.push(x);
        rate.push(r);
    };
    push(t, state, &mut times, &mut root, &mut rate);
    for k in 1..=steps {
        let next = if k == steps { horizon } else { k as f64 * dt };
        let z: f64 = rng.sample(StandardNormal);
        state = rate_step(scheme, params, state, next - t, z);
        t = next;
        push(t, state, &mut times, &mut root, &mut rate);
    }
    Ok(RatePath { times, root, rate })
}

/// Settings for [`mc_discount_factors`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscountMc {
    pub dt: f64,
    pub scheme: RateScheme,
    /// Pairs of paths driven by `z` and `−z`; estimates and standard errors
    /// then come from the pair averages, so `n` counts pairs.
    pub antithetic: bool,
    /// Signed-root scheme only: each horizon is simulated separately with
    /// the root's drift shifted onto the path that minimises
    /// `∫x² + (ẋ + θ/2)²/(2σ̃²)`, and reweighted by the likelihood ratio.
    /// Needed at long horizons, where the price is carried by rare paths.
    pub importance: bool,
}

impl DiscountMc {
    pub fn plain(dt: f64) -> Self {
        DiscountMc {
            dt,
            scheme: RateScheme::SignedRoot,
            antithetic: false,
            importance: false,
        }
    }
}

/// Most likely root path under the weight `exp(−∫x²)` over `[0, horizon]`:
/// `ẍ = 2σ̃²x`, `x(0) = x0`, `ẋ(horizon) = −θ/2`, with `σ̃ = σ/2`.
fn dominant_root_path(params: &RateParams, x0: f64, horizon: f64) -> impl Fn(f64) -> f64 {
    let k = std::f64::consts::SQRT_2 * 0.5 * params.sigma_r;
    let half_theta = 0.5 * params.theta_r;
    let b = (-half_theta / k - x0 * (k * horizon).sinh()) / (k * horizon).cosh();
    move |t| x0 * (k * t).cosh() + b * (k * t).sinh()
}

const LANES: usize = 16;

/// Signed-root paths written as `x = a + n`: `a` is a deterministic drift
/// path (shifted when importance sampling) and `n` the Brownian noise shared
/// by every track. Then `∫x² = ∫a² + ∫2an + ∫n²`, where only the middle term
/// is track specific, and the antithetic partner `a − n` flips its sign.
struct RootTrack {
    /// Level `a_i` at each grid point.
    level: Vec<f64>,
    /// `2·a_i·ω_i`, with `ω_i` the interior trapezoid weight of point `i`.
    cross: Vec<f64>,
    /// `d_i·√h_i`, the likelihood-ratio weight of `z_i`; empty when unshifted.
    tilt: Vec<f64>,
    /// `(grid index, horizon index, ∫a² + ½Σd²h up to that point)`.
    marks: Vec<(usize, usize, f64)>,
}

impl RootTrack {
    fn new(params: &RateParams, r0: f64, steps: &[f64], shift: Option<Vec<f64>>, marks: Vec<(usize, usize)>) -> Self {
        let last = marks.last().map_or(0, |m| m.0);
        let sigma_root = 0.5 * params.sigma_r;
        let (mut a, mut area, mut penalty) = (r0.sqrt(), 0.0, 0.0);
        let mut level = Vec::with_capacity(last + 1);
        let mut fixed = Vec::with_capacity(last + 1);
        for (i, &h) in steps[..=last].iter().enumerate() {
            let d = shift.as_ref().map_or(0.0, |s| s[i]);
            let before = a * a;
            a += (-0.5 * params.theta_r + sigma_root * d) * h;
            area += 0.5 * h * (before + a * a);
            penalty += 0.5 * d * d * h;
            level.push(a);
            fixed.push(area + penalty);
        }
        let cross = (0..=last)
            .map(|i| level[i] * (steps[i] + steps.get(i + 1).copied().unwrap_or(0.0)))
            .collect();
        let tilt = shift.map_or_else(Vec::new, |s| (0..=last).map(|i| s[i] * steps[i].sqrt()).collect());
        RootTrack {
            level,
            cross,
            tilt,
            marks: marks.into_iter().map(|(e, hi)| (e, hi, fixed[e])).collect(),
        }
    }
}

/// Discount factors of one batch of lanes, `lanes × nh` values lane by lane.
fn signed_root_batch(
    params: &RateParams,
    steps: &[f64],
    tracks: &[RootTrack],
    antithetic: bool,
    mut rngs: Vec<PathRng>,
    lanes: usize,
    nh: usize,
) -> Vec<f64> {
    let sigma_root = 0.5 * params.sigma_r;
    let last = tracks.iter().filter_map(|t| t.marks.last().map(|m| m.0)).max();
    let mut z = [0.0_f64; LANES];
    let mut noise = [0.0_f64; LANES];
    let mut square = [0.0_f64; LANES];
    let mut cross = vec![[0.0_f64; LANES]; tracks.len()];
    let mut tilt = vec![[0.0_f64; LANES]; tracks.len()];
    let mut next = vec![0usize; tracks.len()];
    let mut out = vec![1.0; lanes * nh];
    for gi in 0..last.map_or(0, |l| l + 1) {
        let h = steps[gi];
        let vol = sigma_root * h.sqrt();
        for (zj, rng) in z.iter_mut().zip(rngs.iter_mut()) {
            *zj = rng.sample(StandardNormal);
        }
        for j in 0..LANES {
            noise[j] += vol * z[j];
        }
        for (k, track) in tracks.iter().enumerate() {
            if next[k] == track.marks.len() {
                continue;
            }
            if let Some(&w) = track.tilt.get(gi) {
                for j in 0..LANES {
                    tilt[k][j] += w * z[j];
                }
            }
            while let Some(&(_, hi, fixed)) = track.marks.get(next[k]).filter(|m| m.0 == gi) {
                // close the trapezoids with the end-point weight h/2
                let end = track.level[gi] * h;
                for j in 0..lanes {
                    let n = noise[j];
                    let odd = cross[k][j] + end * n + tilt[k][j];
                    let even = -(fixed + square[j] + 0.5 * h * n * n);
                    out[j * nh + hi] = if antithetic {
                        0.5 * ((even - odd).exp() + (even + odd).exp())
                    } else {
                        (even - odd).exp()
                    };
                }
                next[k] += 1;
            }
            let w = track.cross[gi];
            for j in 0..LANES {
                cross[k][j] += w * noise[j];
            }
        }
        let omega = 0.5 * (h + steps.get(gi + 1).copied().unwrap_or(0.0));
        for j in 0..LANES {
            square[j] += omega * noise[j] * noise[j];
        }
    }
    out
}

/// Monte Carlo estimates of `E[exp(−∫₀ʰ r du)]` for each horizon `h`, using
/// trapezoidal integration on a grid of step `dt` (horizons are inserted into
/// the grid). Paths are simulated in small batches for throughput; path `p`
/// always uses the same stream.
///
/// With importance sampling every horizon gets its own shifted copy of the
/// root, all driven by the same normals.
pub fn mc_discount_factors(
    params: &RateParams,
    r0: f64,
    horizons: &[f64],
    settings: &DiscountMc,
    plan: &McPlan,
) -> Result<Vec<Estimate>> {
    let dt = settings.dt;
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    if horizons.iter().any(|h| !(*h >= 0.0)) {
        return Err(Error::invalid("horizons must be >= 0"));
    }
    if settings.importance && settings.scheme != RateScheme::SignedRoot {
        return Err(Error::invalid("importance sampling needs the signed-root scheme"));
    }
    let (scheme, antithetic) = (settings.scheme, settings.antithetic);
    let max_h = horizons.iter().copied().fold(0.0, f64::max);
    let mut grid: Vec<f64> = (1..=(max_h / dt).ceil() as usize)
        .map(|k| (k as f64 * dt).min(max_h))
        .collect();
    grid.extend(horizons.iter().copied().filter(|h| *h > 0.0));
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let grid_index = |h: f64| {
        grid.iter()
            .position(|g| (g - h).abs() < 1e-12)
            .expect("horizon inserted into grid")
    };

    let steps: Vec<f64> = grid
        .iter()
        .scan(0.0, |t, &g| {
            let h = g - *t;
            *t = g;
            Some(h)
        })
        .collect();
    let positive: Vec<(usize, usize)> = horizons
        .iter()
        .enumerate()
        .filter(|(_, h)| **h > 0.0)
        .map(|(i, &h)| (grid_index(h), i))
        .collect();

    let units = if antithetic {
        plan.n_paths.div_ceil(2)
    } else {
        plan.n_paths
    };
    let batch_plan = McPlan {
        n_paths: units.div_ceil(LANES),
        ..*plan
    };
    let nh = horizons.len();
    let lane_rngs = |first: usize| -> Vec<PathRng> {
        (0..LANES)
            .map(|j| path_rng(plan.seed, Purpose::ShortRate, (first + j) as u64))
            .collect()
    };
    let batches: Vec<Vec<f64>> = match scheme {
        RateScheme::SignedRoot => {
            let tracks: Vec<RootTrack> = if settings.importance {
                positive
                    .iter()
                    .map(|&(end, i)| {
                        let path = dominant_root_path(params, r0.sqrt(), grid[end]);
                        let mut t = 0.0;
                        // drift shift of the root per step, in units of σ̃
                        let shift = grid[..=end]
                            .iter()
                            .map(|&g| {
                                let d = ((path(g) - path(t)) / (g - t) + 0.5 * params.theta_r) / (0.5 * params.sigma_r);
                                t = g;
                                d
                            })
                            .collect();
                        RootTrack::new(params, r0, &steps, Some(shift), vec![(end, i)])
                    })
                    .collect()
            } else {
                let mut marks = positive.clone();
                marks.sort();
                vec![RootTrack::new(params, r0, &steps, None, marks)]
            };
            batch_plan.map_paths(|b| {
                let first = b as usize * LANES;
                signed_root_batch(
                    params,
                    &steps,
                    &tracks,
                    antithetic,
                    lane_rngs(first),
                    LANES.min(units - first),
                    nh,
                )
            })
        }
        RateScheme::FullTruncation => {
            let mut marks = positive.clone();
            marks.sort();
            batch_plan.map_paths(|b| {
                let first = b as usize * LANES;
                let lanes = LANES.min(units - first);
                let mut rngs = lane_rngs(first);
                let members = if antithetic { 2 } else { 1 };
                let mut z = [0.0_f64; LANES];
                let mut state = [[r0; LANES]; 2];
                let mut integral = [[0.0_f64; LANES]; 2];
                let mut out = vec![1.0; lanes * nh];
                let mut next = 0;
                for (gi, &h) in steps.iter().enumerate() {
                    if next == marks.len() {
                        break;
                    }
                    for (zj, rng) in z.iter_mut().zip(rngs.iter_mut()) {
                        *zj = rng.sample(StandardNormal);
                    }
                    for m in 0..members {
                        let sign = if m == 0 { 1.0 } else { -1.0 };
                        let (x, int) = (&mut state[m], &mut integral[m]);
                        for j in 0..LANES {
                            let before = x[j].max(0.0);
                            x[j] = rate_step(scheme, params, x[j], h, sign * z[j]);
                            int[j] += 0.5 * h * (before + x[j].max(0.0));
                        }
                    }
                    while next < marks.len() && marks[next].0 == gi {
                        let hi = marks[next].1;
                        for j in 0..lanes {
                            let sum: f64 = (0..members).map(|m| (-integral[m][j]).exp()).sum();
                            out[j * nh + hi] = sum / members as f64;
                        }
                        next += 1;
                    }
                }
                out
            })
        }
    };
    let mut per_horizon = vec![Vec::with_capacity(units); nh];
    for batch in &batches {
        for row in batch.chunks(nh) {
            for (hi, v) in row.iter().enumerate() {
                per_horizon[hi].push(*v);
            }
        }
    }
    Ok(per_horizon.iter().map(|v| Estimate::from_samples(v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn base() -> RateParams {
        RateParams::new(0.2, 0.03).unwrap()
    }

    #[test]
    fn m_is_derived() {
        let p = base();
        assert_eq!(p.m_r(), 0.03 * 0.03 / (4.0 * 0.2));
        assert!((p.m_r() - 1.125e-3).abs() < 1e-18);
    }

    #[test]
    fn unit_price_at_zero_maturity() {
        for r in [0.0, 0.001, 0.02, 0.5] {
            assert_eq!(zcb_price(r, 0.0, &base()).unwrap(), 1.0);
        }
        let k = base().coefficients(0.0);
        assert_eq!((k.a, k.b, k.c), (1.0, 0.0, 0.0));
    }

    #[test]
    fn constants_follow_definitions() {
        let p = base();
        let k = p.coefficients(1.0);
        let psi = (2.0_f64 * 0.03 * 0.03).sqrt();
        assert_eq!(k.psi, psi);
        assert!((k.c1 - 0.04 / (psi * 0.0009)).abs() < 1e-9);
        assert!((k.c2 - (psi / 4.0 - 0.04 / (psi * psi))).abs() < 1e-9);
        assert!((k.c3 - (-0.16 / psi.powi(3))).abs() < 1e-6);
        assert!((k.c1 + k.c3 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn matches_textbook_form() {
        // the printed expressions, evaluated naively, agree with the stable form
        let (theta, sigma): (f64, f64) = (0.2, 0.03);
        let k = base().coefficients(3.0);
        let e = (k.psi * 3.0).exp();
        let a = (2.0 / (1.0 + e)).sqrt() * (k.c1 + k.c2 * 3.0 + k.c3 / (1.0 + e)).exp();
        let b = -k.psi / (sigma * sigma) + 2.0 * k.psi / (sigma * sigma * (1.0 + e));
        let c = 2.0 * theta * (1.0 - (k.psi * 1.5).exp()).powi(2) / (sigma * sigma * (1.0 + e));
        assert!((k.a / a - 1.0).abs() < 1e-9);
        assert!((k.b - b).abs() < 1e-9);
        assert!((k.c - c).abs() < 1e-9);
    }

    #[test]
    fn coefficient_signs() {
        for s in [0.1, 1.0, 5.0, 20.0] {
            let k = base().coefficients(s);
            assert!(k.b < 0.0);
            assert!(k.c >= 0.0);
        }
    }

    #[test]
    fn decreasing_in_maturity() {
        let p = base();
        let mut prev = 1.0;
        for i in 1..=400 {
            let s = i as f64 * 0.1;
            let v = zcb_price(0.02, s, &p).unwrap();
            assert!(v <= prev, "s={s}");
            assert!(v > 0.0 && v <= 1.0);
            prev = v;
        }
    }

    #[test]
    fn rejects_negative_inputs() {
        assert!(zcb_price(-0.01, 1.0, &base()).is_err());
        assert!(zcb_price(0.01, -1.0, &base()).is_err());
    }

    #[test]
    fn girsanov_identity_and_boundary() {
        let p = base();
        assert_eq!(girsanov_transform(&p, 0.0).unwrap(), p);
        assert!(girsanov_transform(&p, 0.2 / 0.03).is_err());
        let q = girsanov_transform(&p, 1.5).unwrap();
        assert!((q.theta_r() - (0.2 - 1.5 * 0.03)).abs() < 1e-15);
        // m̃ = m θ / (θ − γσ)
        assert!((q.m_r() - p.m_r() * 0.2 / (0.2 - 0.045)).abs() < 1e-15);
    }

    #[test]
    fn conversion_params_at_unit_nu_are_identity() {
        let p = base();
        let q = conversion_measure_params(&p, -0.5, 0.2, 1.0).unwrap();
        assert_eq!(q.theta_r().to_bits(), p.theta_r().to_bits());
        assert_eq!(q.sigma_r().to_bits(), p.sigma_r().to_bits());
    }

    #[test]
    fn conversion_params_example() {
        let q = conversion_measure_params(&base(), -0.5, 0.2, 0.5).unwrap();
        // independent arithmetic: θ* = 0.2 + 0.03·0.5·0.2·0.5
        let theta_star: f64 = 0.2 - 0.03 * (-0.5) * 0.2 * (1.0 - 0.5);
        assert!((theta_star - 0.2015).abs() < 1e-15);
        assert!((q.theta_r() - 0.5_f64.sqrt() * 0.2015).abs() < 1e-15);
        assert!((q.sigma_r() - 0.5_f64.sqrt() * 0.03).abs() < 1e-15);
        assert_eq!(q.m_r(), q.sigma_r() * q.sigma_r() / (4.0 * q.theta_r()));
    }

    #[test]
    fn conversion_params_degenerate() {
        // θ − σρσ_S(1−ν) ≤ 0
        assert!(conversion_measure_params(&base(), 1.0, 20.0, 0.1).is_err());
        assert!(conversion_measure_params(&base(), 0.0, 0.2, 0.0).is_err());
    }

    #[test]
    fn implied_libor() {
        let p = base();
        let r = implied_initial_libor(&p, 0.02, 0.25).unwrap();
        let bond = zcb_price(0.02, 0.25, &p).unwrap();
        assert!((r - (1.0 / bond - 1.0) / 0.25).abs() < 1e-15);
        assert!(implied_initial_libor(&p, 0.02, 0.0).is_err());
    }

    #[test]
    fn path_is_deterministic() {
        let p = base();
        let mk = || {
            let mut rng = PathRng::seed_from_u64(42);
            simulate_short_rate_path(&p, 0.02, 1.0, 0.01, RateScheme::SignedRoot, &mut rng).unwrap()
        };
        let (a, b) = (mk(), mk());
        assert_eq!(a, b);
        assert_eq!(a.times.len(), 101);
        assert_eq!(*a.times.last().unwrap(), 1.0);
    }

    #[test]
    fn uneven_horizon_has_short_last_step() {
        let mut rng = PathRng::seed_from_u64(1);
        let path = simulate_short_rate_path(&base(), 0.02, 1.05, 0.1, RateScheme::FullTruncation, &mut rng).unwrap();
        assert_eq!(path.times.len(), 12);
        assert_eq!(*path.times.last().unwrap(), 1.05);
        assert!(path.rate.iter().all(|r| *r >= 0.0));
    }

    #[test]
    fn vanishing_volatility_follows_ode() {
        // √r decreases linearly at rate θ/2 until it reaches zero
        let p = RateParams::new(0.2, 1e-12).unwrap();
        let mut rng = PathRng::seed_from_u64(3);
        let path = simulate_short_rate_path(&p, 0.02, 0.5, 0.01, RateScheme::SignedRoot, &mut rng).unwrap();
        for (t, x) in path.times.iter().zip(&path.root) {
            assert!((x - (0.02_f64.sqrt() - 0.1 * t)).abs() < 1e-9);
        }
        let mut rng = PathRng::seed_from_u64(3);
        let trunc = simulate_short_rate_path(&p, 0.02, 0.5, 1e-4, RateScheme::FullTruncation, &mut rng).unwrap();
        let last = *trunc.root.last().unwrap();
        assert!((last - (0.02_f64.sqrt() - 0.05)).abs() < 1e-4);
    }

    #[test]
    fn small_mc_agrees_with_closed_form() {
        let p = base();
        let plan = McPlan::new(4000, 9);
        for antithetic in [false, true] {
            let settings = DiscountMc {
                antithetic,
                ..DiscountMc::plain(1.0 / 200.0)
            };
            let est = mc_discount_factors(&p, 0.02, &[0.0, 1.0, 3.0], &settings, &plan).unwrap();
            assert_eq!(est[0].mean, 1.0);
            assert_eq!(est[1].n, if antithetic { 2000 } else { 4000 });
            for (e, s) in est.iter().zip([0.0, 1.0, 3.0]) {
                let exact = zcb_price(0.02, s, &p).unwrap();
                assert!((e.mean - exact).abs() <= 4.0 * e.se + 1e-6, "s={s} {e:?} {exact}");
            }
        }
    }

    #[test]
    fn antithetic_pairs_reduce_variance() {
        let p = base();
        let plan = McPlan::new(2000, 10);
        let run = |antithetic| {
            let settings = DiscountMc {
                antithetic,
                ..DiscountMc::plain(0.01)
            };
            mc_discount_factors(&p, 0.02, &[5.0], &settings, &plan).unwrap()[0]
        };
        let (plain, anti) = (run(false), run(true));
        assert!(anti.se < plain.se, "{anti:?} vs {plain:?}");
    }

    #[test]
    fn dominant_path_boundary_conditions() {
        let p = base();
        let x0 = 0.02f64.sqrt();
        let path = dominant_root_path(&p, x0, 32.0);
        assert!((path(0.0) - x0).abs() < 1e-15);
        let h = 1e-5;
        let slope = (path(32.0 + h) - path(32.0 - h)) / (2.0 * h);
        assert!((slope + 0.1).abs() < 1e-8, "{slope}");
    }

    #[test]
    fn importance_sampling_is_unbiased_and_sharper() {
        let p = base();
        let plan = McPlan::new(2000, 11);
        let run = |importance| {
            let settings = DiscountMc {
                importance,
                ..DiscountMc::plain(0.01)
            };
            mc_discount_factors(&p, 0.02, &[2.0, 10.0], &settings, &plan).unwrap()
        };
        let (plain, is) = (run(false), run(true));
        for (k, s) in [2.0, 10.0].into_iter().enumerate() {
            let exact = zcb_price(0.02, s, &p).unwrap();
            assert!(is[k].covers(exact, 4.0), "s={s} {:?} {exact}", is[k]);
            assert!(is[k].se < plain[k].se);
        }
    }
}
