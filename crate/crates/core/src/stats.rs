//! Monte Carlo summaries: compensated sums, mean/standard-error estimates and
//! a one-sample Kolmogorov–Smirnov test.

use serde::Serialize;

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// A sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    /// An exactly known quantity (zero standard error).
    pub fn exact(value: f64) -> Self {
        Estimate {
            mean: value,
            se: 0.0,
            n: 0,
        }
    }

    /// Two-pass mean and standard error of the mean.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                se: f64::NAN,
                n,
            };
        }
        let mean = xs.iter().copied().collect::<CompensatedSum>().value() / n as f64;
        if n == 1 {
            return Estimate { mean, se: 0.0, n };
        }
        let ss = xs
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .collect::<CompensatedSum>()
            .value();
        let var = ss / (n - 1) as f64;
        Estimate {
            mean,
            se: (var / n as f64).sqrt(),
            n,
        }
    }

    /// Estimate of a proportion `k / n` with the binomial standard error.
    pub fn proportion(k: usize, n: usize) -> Self {
        let p = k as f64 / n as f64;
        Estimate {
            mean: p,
            se: (p * (1.0 - p) / n as f64).sqrt(),
            n,
        }
    }

    /// `(self - other) / sqrt(se_a^2 + se_b^2)`, treating the two as independent.
    pub fn z_score(&self, other: &Estimate) -> f64 {
        let diff = self.mean - other.mean;
        let se = self.se.hypot(other.se);
        if se == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY * diff.signum()
            }
        } else {
            diff / se
        }
    }

    /// True when `value` lies within `k` standard errors of the mean.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.se
    }
}

/// Kolmogorov–Smirnov distance between the empirical distribution of
/// `samples` and the continuous cdf `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        let hi = (i + 1) as f64 / n - f;
        let lo = f - i as f64 / n;
        d.max(hi).max(lo)
    })
}

/// Asymptotic p-value of the KS statistic `d` for sample size `n`
/// (Kolmogorov distribution with the Stephens small-sample correction).
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let j = j as f64;
        let term = 2.0 * (-1.0_f64).powf(j - 1.0) * (-2.0 * j * j * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn estimate_of_constant_has_zero_se() {
        let e = Estimate::from_samples(&[2.0; 10]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.se, 0.0);
    }

    #[test]
    fn estimate_matches_textbook() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        // sample variance 5/3, se = sqrt(5/12)
        assert!((e.se - (5.0_f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ks_pvalue_limits() {
        assert!(ks_pvalue(0.0, 100) > 0.999);
        assert!(ks_pvalue(0.5, 1000) < 1e-10);
        // critical value for alpha = 0.05 is about 1.36 / sqrt(n)
        let p = ks_pvalue(1.358 / (10_000f64).sqrt(), 10_000);
        assert!((p - 0.05).abs() < 0.005, "{p}");
    }
}
