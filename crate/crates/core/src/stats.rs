//! Student-t machinery and one-tailed two-sample t-tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Alternative hypothesis of a one-tailed test on `mean(a) - mean(b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    AGreater,
    ALess,
}

impl Tail {
    pub fn flip(self) -> Self {
        match self {
            Tail::AGreater => Tail::ALess,
            Tail::ALess => Tail::AGreater,
        }
    }
}

/// Variance model of the two-sample statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceModel {
    /// Unequal variances, Welch-Satterthwaite degrees of freedom.
    #[default]
    Welch,
    /// Pooled variance, `n_a + n_b - 2` degrees of freedom.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest<T> {
    pub t: T,
    pub df: T,
    pub p: T,
    pub significant: bool,
}

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

pub fn mean<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |a, &x| a + x) / T::of_usize(xs.len())
}

/// Unbiased sample variance (`n - 1` denominator).
pub fn sample_variance<T: Real>(xs: &[T]) -> T {
    let m = mean(xs);
    xs.iter().fold(T::zero(), |a, &x| a + (x - m) * (x - m)) / T::of_usize(xs.len() - 1)
}

/// One-tailed two-sample t-test. Significance is judged at p < 0.05.
pub fn t_test_one_tailed<T: Real>(
    a: &[T],
    b: &[T],
    tail: Tail,
    model: VarianceModel,
) -> Result<TTest<T>> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::param(format!(
            "t-test needs at least 2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::param("t-test samples must be finite"));
    }
    let (na, nb) = (T::of_usize(a.len()), T::of_usize(b.len()));
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_variance(a), sample_variance(b));
    let one = T::one();
    let (se, df) = match model {
        VarianceModel::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let se2 = qa + qb;
            let denom = qa * qa / (na - one) + qb * qb / (nb - one);
            let df = if denom > T::zero() {
                se2 * se2 / denom
            } else {
                na + nb - T::lit(2.0)
            };
            (se2.sqrt(), df)
        }
        VarianceModel::Pooled => {
            let df = na + nb - T::lit(2.0);
            let sp2 = ((na - one) * va + (nb - one) * vb) / df;
            ((sp2 * (one / na + one / nb)).sqrt(), df)
        }
    };
    let diff = ma - mb;
    let t = if se > T::zero() {
        diff / se
    } else if diff == T::zero() {
        return Err(Error::Degenerate(
            "both samples constant with equal means".into(),
        ));
    } else if diff > T::zero() {
        T::infinity()
    } else {
        T::neg_infinity()
    };
    let upper = student_t_sf(t, df);
    let p = match tail {
        Tail::AGreater => upper,
        Tail::ALess => student_t_sf(-t, df),
    };
    Ok(TTest {
        t,
        df,
        p,
        significant: p.as_f64() < SIGNIFICANCE_LEVEL,
    })
}

/// Upper tail `P(T > t)` of Student's t with `df` (possibly fractional) degrees of freedom.
pub fn student_t_sf<T: Real>(t: T, df: T) -> T {
    if t.is_infinite() {
        return if t > T::zero() { T::zero() } else { T::one() };
    }
    let x = df / (df + t * t);
    let half_tail = T::lit(0.5) * beta_reg(df * T::lit(0.5), T::lit(0.5), x);
    if t >= T::zero() {
        half_tail
    } else {
        T::one() - half_tail
    }
}

pub fn student_t_cdf<T: Real>(t: T, df: T) -> T {
    T::one() - student_t_sf(t, df)
}

/// Quantile of Student's t by bisection on the CDF.
pub fn student_t_quantile(p: f64, df: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile probability out of (0,1)");
    let (mut lo, mut hi) = (-1e6f64, 1e6f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Natural log of the gamma function (Lanczos, g = 7), for `x > 0`.
pub fn ln_gamma<T: Real>(x: T) -> T {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < T::lit(0.5) {
        // reflection
        let pi = T::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(COEF[0]);
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (x + T::of_usize(i));
    }
    let t = x + T::lit(7.5);
    T::lit(0.5) * (T::lit(2.0) * T::PI()).ln() + (x + T::lit(0.5)) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn beta_reg<T: Real>(a: T, b: T, x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if x >= T::one() {
        return T::one();
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (T::one() - x).ln();
    let front = ln_front.exp();
    if x < (a + T::one()) / (a + b + T::lit(2.0)) {
        front * beta_cf(a, b, x) / a
    } else {
        T::one() - front * beta_cf(b, a, T::one() - x) / b
    }
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf<T: Real>(a: T, b: T, x: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let eps = T::epsilon();
    let one = T::one();
    let two = T::lit(2.0);
    let (qab, qap, qam) = (a + b, a + one, a - one);
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=10_000usize {
        let m = T::of_usize(m);
        let m2 = two * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let del = d * c;
        h = h * del;
        if (del - one).abs() <= eps {
            break;
        }
    }
    h
}
