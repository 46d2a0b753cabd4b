//! Summary statistics, Welch's unequal-variance t-test and confusion-matrix
//! metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_ALPHA: f64 = 0.05;

const BETA_CF_EPS: f64 = 1e-12;
const BETA_CF_MAX_ITER: usize = 300;
const TINY: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("samples contain a non-finite value")]
    NonFinite,
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("degrees of freedom must be positive, got {0}")]
    BadDf(f64),
    #[error("incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}")]
    NoConvergence { a: f64, b: f64, x: f64 },
    #[error("confusion counts are all zero")]
    EmptyCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation, `n - 1` denominator.
    pub sd: f64,
}

impl SampleSummary {
    pub fn variance(&self) -> f64 {
        self.sd * self.sd
    }
}

fn sample_moments(samples: &[f64]) -> Result<(usize, f64, f64), StatsError> {
    let n = samples.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples(n));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok((n, mean, ss / (n - 1) as f64))
}

pub fn summarize(samples: &[f64]) -> Result<SampleSummary, StatsError> {
    let (n, mean, var) = sample_moments(samples)?;
    Ok(SampleSummary {
        n,
        mean,
        sd: var.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
    pub drift: bool,
}

/// Welch's t-test of `mean(a) = mean(b)`, two-sided, drift flagged at `p < alpha`.
///
/// With both variances zero: equal means give `t = 0, p = 1`; different means
/// give `t = ±inf, p = 0`. In both cases `df = n_a + n_b - 2`.
pub fn welch_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<WelchResult, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::BadAlpha(alpha));
    }
    let (na, ma, va) = sample_moments(a)?;
    let (nb, mb, vb) = sample_moments(b)?;
    let (na, nb) = (na as f64, nb as f64);
    let sea = va / na;
    let seb = vb / nb;
    let se2 = sea + seb;
    let diff = ma - mb;

    if se2 == 0.0 {
        let (t, p) = if diff == 0.0 {
            (0.0, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, 0.0)
        };
        return Ok(WelchResult {
            t,
            df: na + nb - 2.0,
            p,
            drift: p < alpha,
        });
    }

    let t = diff / se2.sqrt();
    let df = se2 * se2 / (sea * sea / (na - 1.0) + seb * seb / (nb - 1.0));
    let p = two_sided_p(t, df)?;
    Ok(WelchResult {
        t,
        df,
        p,
        drift: p < alpha,
    })
}

/// `P(|T_df| > |t|)`.
pub fn two_sided_p(t: f64, df: f64) -> Result<f64, StatsError> {
    if df.is_nan() || df <= 0.0 {
        return Err(StatsError::BadDf(df));
    }
    if t.is_nan() {
        return Ok(f64::NAN);
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    let x = df / (df + t * t);
    Ok(inc_beta(0.5 * df, 0.5, x)?.clamp(0.0, 1.0))
}

/// Upper tail `P(T_df > t)` of Student's t distribution.
pub fn student_t_sf(t: f64, df: f64) -> Result<f64, StatsError> {
    let half = 0.5 * two_sided_p(t, df)?;
    Ok(if t >= 0.0 { half } else { 1.0 - half })
}

/// `ln Γ(x)` for `x > 0`, Lanczos approximation (g = 7, 9 terms).
#[allow(clippy::excessive_precision)]
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection keeps the series in its accurate range
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0`, `x ∈ [0, 1]`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> Result<f64, StatsError> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x >= 1.0 {
        return Ok(1.0);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The continued fraction converges fast only below the mean; reflect otherwise.
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_cf(a, b, x)? / a)
    } else {
        Ok(1.0 - front * beta_cf(b, a, 1.0 - x)? / b)
    }
}

/// Continued fraction for the incomplete beta, modified Lentz evaluation.
fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64, StatsError> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let guard = |v: f64| if v.abs() < TINY { TINY } else { v };
    let mut c = 1.0;
    let mut d = 1.0 / guard(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..=BETA_CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < BETA_CF_EPS {
            return Ok(h);
        }
    }
    Err(StatsError::NoConvergence { a, b, x })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Adds one labelled decision.
    pub fn record(&mut self, actual_positive: bool, predicted_positive: bool) {
        match (actual_positive, predicted_positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }
}

/// A ratio whose denominator may be zero; `value` is 0 when `undefined`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    pub undefined: bool,
}

impl Ratio {
    fn of(num: f64, den: f64) -> Self {
        if den == 0.0 {
            Ratio {
                value: 0.0,
                undefined: true,
            }
        } else {
            Ratio {
                value: num / den,
                undefined: false,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub accuracy: f64,
    pub precision: Ratio,
    pub recall: Ratio,
    pub f1: Ratio,
}

pub fn confusion_metrics(c: &ConfusionCounts) -> Result<ConfusionMetrics, StatsError> {
    let total = c.total();
    if total == 0 {
        return Err(StatsError::EmptyCounts);
    }
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let precision = Ratio::of(tp, tp + fp);
    let recall = Ratio::of(tp, tp + fn_);
    let f1 = if precision.undefined || recall.undefined {
        Ratio {
            value: 0.0,
            undefined: true,
        }
    } else {
        Ratio::of(
            2.0 * precision.value * recall.value,
            precision.value + recall.value,
        )
    };
    Ok(ConfusionMetrics {
        accuracy: (tp + tn) / total as f64,
        precision,
        recall,
        f1,
    })
}
