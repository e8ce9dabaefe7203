//! Globally adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Integral estimate and its error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn absolute(abs: f64) -> Self {
        Tolerance { abs, rel: 0.0 }
    }
    pub const fn relative(rel: f64) -> Self {
        Tolerance { abs: 0.0, rel }
    }
}

/// Single 15-point Kronrod rule with its embedded 7-point Gauss error estimate.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Quadrature {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Quadrature {
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

struct Segment {
    a: f64,
    b: f64,
    q: Quadrature,
}

/// Integrates `f` over `[a, b]`, bisecting the segment with the largest error
/// until the summed error meets `max(tol.abs, tol.rel * |value|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature { value: 0.0, error: 0.0 });
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("quadrature bounds must be finite"));
    }
    const MAX_SEGMENTS: usize = 4000;
    let mut segments = vec![Segment {
        a,
        b,
        q: gk15(&f, a, b),
    }];
    loop {
        let (value, error) = segments
            .iter()
            .fold((0.0, 0.0), |(v, e), s| (v + s.q.value, e + s.q.error));
        if !value.is_finite() {
            return Err(Error::Numerical("integrand is not finite".into()));
        }
        let target = tol.abs.max(tol.rel * value.abs());
        if error <= target || segments.len() >= MAX_SEGMENTS {
            if error > target && error > 1e-6 * value.abs().max(1e-300) {
                return Err(Error::Numerical(format!(
                    "quadrature did not converge: error {error:e} for value {value:e}"
                )));
            }
            return Ok(Quadrature { value, error });
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.q.error.total_cmp(&y.1.q.error))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            // interval exhausted at machine precision
            return Ok(Quadrature { value, error });
        }
        segments.push(Segment {
            a: s.a,
            b: mid,
            q: gk15(&f, s.a, mid),
        });
        segments.push(Segment {
            a: mid,
            b: s.b,
            q: gk15(&f, mid, s.b),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = integrate(|x| 3.0 * x * x, 0.0, 2.0, Tolerance::absolute(1e-14)).unwrap();
        assert!((q.value - 8.0).abs() < 1e-13);
    }

    #[test]
    fn handles_root_singularity() {
        let q = integrate(|x: f64| x.sqrt(), 0.0, 1.0, Tolerance::relative(1e-10)).unwrap();
        assert!((q.value - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn oscillatory() {
        let q = integrate(
            |x: f64| (20.0 * x).sin(),
            0.0,
            std::f64::consts::PI,
            Tolerance::absolute(1e-12),
        )
        .unwrap();
        assert!(q.value.abs() < 1e-11);
    }

    #[test]
    fn empty_interval() {
        let q = integrate(|x| x, 1.0, 1.0, Tolerance::absolute(1e-12)).unwrap();
        assert_eq!(q.value, 0.0);
    }
}
