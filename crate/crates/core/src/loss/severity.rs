use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_lr};

use crate::error::{Error, Result};
use crate::quad::{integrate, Tolerance};

/// Burr type XII parameters: shapes `c_b`, `k_b` and scale `zeta_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurrParams {
    pub c_b: f64,
    pub k_b: f64,
    pub zeta_b: f64,
}

/// Single-loss distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Severity {
    Burr(BurrParams),
    Exponential { beta: f64 },
}

/// Quantile cut-off for the Burr integrals; the neglected mass is 1e-12.
const UPPER_U: f64 = 1.0 - 1e-12;

impl Severity {
    pub fn burr(c_b: f64, k_b: f64, zeta_b: f64) -> Result<Self> {
        let s = Severity::Burr(BurrParams { c_b, k_b, zeta_b });
        s.validate()?;
        Ok(s)
    }

    pub fn exponential(beta: f64) -> Result<Self> {
        let s = Severity::Exponential { beta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Severity::Burr(BurrParams { c_b, k_b, zeta_b }) => {
                for (name, v) in [("c_b", c_b), ("k_b", k_b), ("zeta_b", zeta_b)] {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(Error::config(
                            format!("loss.severity.{name}"),
                            format!("must be > 0, got {v}"),
                        ));
                    }
                }
            }
            Severity::Exponential { beta } => {
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(Error::config("loss.severity.beta", format!("must be > 0, got {beta}")));
                }
            }
        }
        Ok(())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            Severity::Burr(BurrParams { c_b, k_b, zeta_b }) => {
                let y = (x / zeta_b).powf(c_b);
                -(-k_b * y.ln_1p()).exp_m1()
            }
            Severity::Exponential { beta } => -(-beta * x).exp_m1(),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match *self {
            Severity::Burr(BurrParams { c_b, k_b, zeta_b }) => {
                let z = x / zeta_b;
                k_b * c_b / zeta_b * z.powf(c_b - 1.0) / (1.0 + z.powf(c_b)).powf(k_b + 1.0)
            }
            Severity::Exponential { beta } => beta * (-beta * x).exp(),
        }
    }

    /// Inverse cdf for `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Severity::Burr(BurrParams { c_b, k_b, zeta_b }) => {
                // (1−u)^{−1/k} − 1, accurate for small u
                let w = (-(-u).ln_1p() / k_b).exp_m1();
                zeta_b * w.powf(1.0 / c_b)
            }
            Severity::Exponential { beta } => -(-u).ln_1p() / beta,
        }
    }

    /// Draw by inversion.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    /// `E[X]`, or `None` when it is infinite (Burr with `k_b·c_b ≤ 1`).
    pub fn mean(&self) -> Option<f64> {
        match *self {
            Severity::Burr(BurrParams { c_b, k_b, zeta_b }) => {
                (k_b * c_b > 1.0).then(|| zeta_b * gamma(k_b - 1.0 / c_b) * gamma(1.0 + 1.0 / c_b) / gamma(k_b))
            }
            Severity::Exponential { beta } => Some(1.0 / beta),
        }
    }

    /// Laplace transform `E[e^{−sX}]`, `s ≥ 0`.
    pub fn laplace(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        if s == 0.0 {
            return Ok(1.0);
        }
        match *self {
            Severity::Exponential { beta } => Ok(beta / (beta + s)),
            Severity::Burr(_) => {
                let q = integrate(
                    |u| (-s * self.quantile(u)).exp(),
                    0.0,
                    UPPER_U,
                    Tolerance { abs: 1e-14, rel: 1e-10 },
                )?;
                Ok(q.value)
            }
        }
    }

    /// `1 − E[e^{−sX}]`, integrated directly so that small arguments keep
    /// full relative precision.
    pub fn laplace_complement(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        match *self {
            Severity::Exponential { beta } => Ok(s / (beta + s)),
            Severity::Burr(_) => {
                let q = integrate(
                    |u| -(-s * self.quantile(u)).exp_m1(),
                    0.0,
                    UPPER_U,
                    Tolerance { abs: 1e-16, rel: 1e-10 },
                )?;
                Ok(q.value + (1.0 - UPPER_U))
            }
        }
    }

    /// Mean of the tilted law `e^{−θx} F(dx) / L(θ)`.
    pub fn tilted_mean(&self, theta: f64) -> Result<f64> {
        check_arg(theta)?;
        if theta == 0.0 {
            return self
                .mean()
                .ok_or_else(|| Error::Numerical("severity mean is infinite".into()));
        }
        match *self {
            Severity::Exponential { beta } => Ok(1.0 / (beta + theta)),
            Severity::Burr(_) => {
                let num = integrate(
                    |u| {
                        let x = self.quantile(u);
                        x * (-theta * x).exp()
                    },
                    0.0,
                    UPPER_U,
                    Tolerance { abs: 0.0, rel: 1e-10 },
                )?;
                Ok(num.value / self.laplace(theta)?)
            }
        }
    }

    /// Distribution function of the `n`-fold convolution, for Exponential
    /// severity only (Erlang law). `F^{0*}` is the unit step at zero.
    pub fn erlang_convolution_cdf(&self, n: usize, x: f64) -> Option<f64> {
        match *self {
            Severity::Exponential { beta } => Some(if n == 0 {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else if x <= 0.0 {
                0.0
            } else {
                gamma_lr(n as f64, beta * x)
            }),
            Severity::Burr(_) => None,
        }
    }
}

fn check_arg(s: f64) -> Result<()> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::invalid(format!(
            "Laplace argument must be finite and >= 0, got {s}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_burr() -> Severity {
        Severity::burr(1.57, 0.7, 9.53e7).unwrap()
    }

    #[test]
    fn cdf_at_scale() {
        let s = reference_burr();
        assert!((s.cdf(9.53e7) - (1.0 - 2f64.powf(-0.7))).abs() < 1e-14);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let s = reference_burr();
        for u in [1e-9, 0.1, 0.5, 0.9, 0.999_999] {
            let x = s.quantile(u);
            assert!((s.cdf(x) - u).abs() < 1e-12, "u={u}");
        }
        let median = s.quantile(0.5);
        let lhs = (1.0 + (median / 9.53e7).powf(1.57)).powf(-0.7);
        assert!((lhs - 0.5).abs() < 1e-12);
    }

    #[test]
    fn burr_mean_closed_form() {
        let m = reference_burr().mean().unwrap();
        assert!((m / 1.0116e9 - 1.0).abs() < 1e-3, "{m}");
        assert!(Severity::burr(1.0, 0.9, 1.0).unwrap().mean().is_none());
    }

    #[test]
    fn laplace_at_zero_is_one() {
        assert_eq!(reference_burr().laplace(0.0).unwrap(), 1.0);
        assert_eq!(Severity::exponential(2.0).unwrap().laplace(0.0).unwrap(), 1.0);
        assert!(reference_burr().laplace(-1.0).is_err());
    }

    #[test]
    fn exponential_laplace_closed_form() {
        let s = Severity::exponential(2.0).unwrap();
        assert_eq!(s.laplace(3.0).unwrap(), 2.0 / 5.0);
        assert_eq!(s.laplace_complement(3.0).unwrap(), 3.0 / 5.0);
    }

    #[test]
    fn burr_laplace_complement_is_consistent() {
        let s = reference_burr();
        for a in [5.81e-11, 2.9e-11, 1e-9] {
            let l = s.laplace(a).unwrap();
            let c = s.laplace_complement(a).unwrap();
            assert!((l + c - 1.0).abs() < 1e-8, "a={a}: {l} + {c}");
        }
    }

    #[test]
    fn burr_laplace_against_density_quadrature() {
        // independent route: integrate e^{-sx} f(x) over x on log-spaced segments
        let s = Severity::burr(2.0, 1.5, 1.0).unwrap();
        let arg = 0.7;
        let mut edges = vec![0.0];
        edges.extend((0..60).map(|i| 1e-6 * 10f64.powf(i as f64 * 0.25)));
        let mut total = 0.0;
        for w in edges.windows(2) {
            total += integrate(|x| (-arg * x).exp() * s.pdf(x), w[0], w[1], Tolerance::absolute(1e-15))
                .unwrap()
                .value;
        }
        assert!((s.laplace(arg).unwrap() - total).abs() < 1e-9);
    }

    #[test]
    fn tilted_mean_is_smaller() {
        let s = reference_burr();
        let t = s.tilted_mean(5.81e-11).unwrap();
        assert!(t < s.mean().unwrap());
        let e = Severity::exponential(1.5).unwrap();
        assert_eq!(e.tilted_mean(0.5).unwrap(), 0.5);
    }

    #[test]
    fn erlang_cdf() {
        let e = Severity::exponential(1.0).unwrap();
        assert_eq!(e.erlang_convolution_cdf(0, 2.0), Some(1.0));
        let one = e.erlang_convolution_cdf(1, 2.0).unwrap();
        assert!((one - (1.0 - (-2.0f64).exp())).abs() < 1e-14);
        // P(Gamma(2,1) <= 2) = 1 - 3 e^{-2}
        let two = e.erlang_convolution_cdf(2, 2.0).unwrap();
        assert!((two - (1.0 - 3.0 * (-2.0f64).exp())).abs() < 1e-14);
        assert!(reference_burr().erlang_convolution_cdf(2, 1.0).is_none());
    }
}
