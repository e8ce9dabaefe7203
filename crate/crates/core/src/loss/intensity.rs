use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{gk15, integrate, Tolerance};

/// Seasonal catastrophe arrival rate
/// `λ(t) = a + b·t + p·sin(2π(t + phase)) + q·exp(cos(2πt / period))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityParams {
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub phase: f64,
    pub q: f64,
    pub period: f64,
}

impl IntensityParams {
    /// Constant rate `a`.
    pub fn constant(a: f64) -> Self {
        IntensityParams {
            a,
            b: 0.0,
            p: 0.0,
            phase: 0.0,
            q: 0.0,
            period: 1.0,
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        self.a == 0.0 && self.b == 0.0 && self.p == 0.0 && self.q == 0.0
    }

    pub fn at(&self, t: f64) -> f64 {
        self.a
            + self.b * t
            + self.p * (2.0 * PI * (t + self.phase)).sin()
            + self.q * (2.0 * PI * t / self.period).cos().exp()
    }

    /// Upper bound of `λ` on `[0, horizon]`, used as the thinning majorant.
    pub fn majorant(&self, horizon: f64) -> f64 {
        let linear = self.a + (self.b * horizon).max(0.0);
        let seasonal = self.p.abs();
        let cyclic = if self.q >= 0.0 { self.q * E } else { self.q / E };
        (linear + seasonal + cyclic).max(0.0)
    }

    /// Checks `λ(t) ≥ 0` on a fine grid over `[0, horizon]`.
    pub fn validate(&self, horizon: f64) -> Result<()> {
        if !(self.period > 0.0) {
            return Err(Error::config(
                "loss.intensity.period",
                format!("must be > 0, got {}", self.period),
            ));
        }
        let n = ((horizon * 2000.0).ceil() as usize).max(2000);
        for i in 0..=n {
            let t = horizon * i as f64 / n as f64;
            let v = self.at(t);
            if !(v >= 0.0) {
                return Err(Error::config(
                    "loss.intensity",
                    format!("intensity must be non-negative on [0, T]; λ({t:.4}) = {v}"),
                ));
            }
        }
        Ok(())
    }
}

/// `∫_{t1}^{t2} λ(u) du` by adaptive quadrature (absolute tolerance 1e-10).
pub fn cumulative_intensity(params: &IntensityParams, t1: f64, t2: f64) -> Result<f64> {
    if !(t1 >= 0.0 && t2 >= t1) {
        return Err(Error::invalid(format!("need 0 <= t1 <= t2, got [{t1}, {t2}]")));
    }
    if params.b == 0.0 && params.p == 0.0 && params.q == 0.0 {
        return Ok(params.a * (t2 - t1));
    }
    Ok(integrate(|u| params.at(u), t1, t2, Tolerance::absolute(1e-10))?.value)
}

/// Cached `Λ(0, t)`: cell integrals on a fixed grid plus one Kronrod rule on
/// the final partial cell.
#[derive(Debug, Clone)]
pub struct CumulativeIntensity {
    params: IntensityParams,
    cell: f64,
    prefix: Vec<f64>,
}

impl CumulativeIntensity {
    const CELL: f64 = 1.0 / 128.0;

    pub fn new(params: IntensityParams, horizon: f64) -> Result<Self> {
        let cells = (horizon / Self::CELL).ceil() as usize + 1;
        let mut prefix = Vec::with_capacity(cells + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for i in 0..cells {
            let a = i as f64 * Self::CELL;
            acc += integrate(|u| params.at(u), a, a + Self::CELL, Tolerance::absolute(1e-14))?.value;
            prefix.push(acc);
        }
        Ok(CumulativeIntensity {
            params,
            cell: Self::CELL,
            prefix,
        })
    }

    pub fn params(&self) -> &IntensityParams {
        &self.params
    }

    /// `Λ(0, t)`; falls back to direct quadrature beyond the cached horizon.
    pub fn at(&self, t: f64) -> f64 {
        let k = (t / self.cell).floor() as usize;
        if k + 1 >= self.prefix.len() {
            return cumulative_intensity(&self.params, 0.0, t).unwrap_or(f64::NAN);
        }
        let lo = k as f64 * self.cell;
        let tail = if t > lo {
            gk15(&|u| self.params.at(u), lo, t).value
        } else {
            0.0
        };
        self.prefix[k] + tail
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn reference_intensity() -> IntensityParams {
        IntensityParams {
            a: 24.93,
            b: 0.03,
            p: 5.61,
            phase: 7.07,
            q: 0.30,
            period: 4.76,
        }
    }

    #[test]
    fn value_at_origin() {
        let expected = 24.93 + 5.61 * (2.0 * PI * 7.07).sin() + 0.30 * E;
        let got = reference_intensity().at(0.0);
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 28.134).abs() < 1e-3);
    }

    #[test]
    fn constant_case() {
        let c = IntensityParams::constant(7.5);
        for t in [0.0, 0.3, 4.0] {
            assert_eq!(c.at(t), 7.5);
        }
        assert_eq!(cumulative_intensity(&c, 1.0, 3.0).unwrap(), 15.0);
    }

    #[test]
    fn seasonal_term_has_unit_period() {
        let p = IntensityParams {
            b: 0.0,
            q: 0.0,
            ..reference_intensity()
        };
        for t in [0.0, 0.17, 2.4] {
            assert!((p.at(t + 1.0) - p.at(t)).abs() < 1e-10);
        }
    }

    #[test]
    fn majorant_bounds_intensity() {
        let p = reference_intensity();
        let m = p.majorant(5.0);
        for i in 0..=5000 {
            assert!(p.at(i as f64 * 1e-3) <= m);
        }
    }

    #[test]
    fn empty_interval_integrates_to_zero() {
        assert_eq!(cumulative_intensity(&reference_intensity(), 2.0, 2.0).unwrap(), 0.0);
        assert!(cumulative_intensity(&reference_intensity(), 2.0, 1.0).is_err());
    }

    #[test]
    fn cached_matches_direct() {
        let p = reference_intensity();
        let cache = CumulativeIntensity::new(p, 5.0).unwrap();
        for t in [0.0, 0.001, 0.5, 1.234_567, 4.999, 5.0, 6.0] {
            let direct = cumulative_intensity(&p, 0.0, t).unwrap();
            assert!((cache.at(t) - direct).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn negative_intensity_rejected() {
        let p = IntensityParams {
            a: 1.0,
            p: 2.0,
            ..IntensityParams::constant(0.0)
        };
        assert!(p.validate(1.0).is_err());
        assert!(IntensityParams::constant(0.0).validate(1.0).is_ok());
    }
}
