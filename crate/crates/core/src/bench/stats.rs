//! Two-sample tests used to read experiment results.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
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

pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Regularised incomplete beta `I_x(a, b)`.
pub fn beta_inc(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Student t survival function `P(T > t)`.
pub fn t_sf(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let tail = 0.5 * beta_inc(0.5 * df, 0.5, df / (df + t * t));
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

pub fn t_cdf(t: f64, df: f64) -> f64 {
    t_sf(-t, df)
}

/// Quantile by bisection on the CDF.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (-1e3, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn need_two(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Invalid("each sample needs at least two values".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub mean_diff: f64,
    pub se: f64,
    /// Both samples constant; `p` is then 1 for equal means and 0 otherwise.
    pub degenerate: bool,
}

/// Unequal-variance two-sample t test, two-sided, with Satterthwaite df.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    need_two(a, b)?;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ea, eb) = (va / na, vb / nb);
    let se = (ea + eb).sqrt();
    let diff = ma - mb;
    if se == 0.0 {
        let equal = diff == 0.0;
        return Ok(WelchResult {
            t: if equal { 0.0 } else { diff.signum() * f64::INFINITY },
            df: na + nb - 2.0,
            p: if equal { 1.0 } else { 0.0 },
            mean_diff: diff,
            se,
            degenerate: true,
        });
    }
    let df = (ea + eb).powi(2) / (ea * ea / (na - 1.0) + eb * eb / (nb - 1.0));
    let t = diff / se;
    Ok(WelchResult { t, df, p: (2.0 * t_sf(t.abs(), df)).min(1.0), mean_diff: diff, se, degenerate: false })
}

/// Mean difference over the pooled standard deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    need_two(a, b)?;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sp = (((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0)).sqrt();
    if sp == 0.0 {
        return Err(Error::Invalid("pooled standard deviation is zero".into()));
    }
    Ok((ma - mb) / sp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolmResult {
    pub reject: Vec<bool>,
    pub adjusted: Vec<f64>,
}

/// Holm step-down; outputs are in input order.
pub fn holm_bonferroni(p: &[f64], alpha: f64) -> Result<HolmResult> {
    if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::Invalid("p values must lie in [0, 1]".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Invalid("alpha must lie in [0, 1]".into()));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p[i].total_cmp(&p[j]).then(i.cmp(&j)));
    let mut adjusted = vec![0.0; m];
    let mut reject = vec![false; m];
    let mut running = 0.0f64;
    for (k, &i) in order.iter().enumerate() {
        running = running.max(((m - k) as f64 * p[i]).min(1.0));
        adjusted[i] = running;
        // The running max makes this stop at the first failure.
        reject[i] = running <= alpha;
    }
    Ok(HolmResult { reject, adjusted })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TostResult {
    pub mean_diff: f64,
    pub se: f64,
    pub df: f64,
    /// Against `H0: diff <= -margin`.
    pub p_lower: f64,
    /// Against `H0: diff >= +margin`.
    pub p_upper: f64,
    pub p: f64,
    pub equivalent: bool,
    /// `(1 - 2 alpha)` confidence interval for the difference.
    pub ci: (f64, f64),
}

/// Two one-sided tests from summary statistics.
pub fn tost_summary(mean_diff: f64, se: f64, df: f64, margin: f64, alpha: f64) -> Result<TostResult> {
    if margin <= 0.0 {
        return Err(Error::Invalid("equivalence margin must be positive".into()));
    }
    if se <= 0.0 || df <= 0.0 {
        return Err(Error::Invalid("standard error and df must be positive".into()));
    }
    let p_lower = t_sf((mean_diff + margin) / se, df);
    let p_upper = t_cdf((mean_diff - margin) / se, df);
    let p = p_lower.max(p_upper);
    let q = t_quantile(1.0 - alpha, df);
    Ok(TostResult {
        mean_diff,
        se,
        df,
        p_lower,
        p_upper,
        p,
        equivalent: p <= alpha,
        ci: (mean_diff - q * se, mean_diff + q * se),
    })
}

pub fn tost(a: &[f64], b: &[f64], margin: f64, alpha: f64) -> Result<TostResult> {
    let w = welch_t(a, b)?;
    if w.degenerate {
        return Err(Error::Invalid("both samples are constant".into()));
    }
    tost_summary(w.mean_diff, w.se, w.df, margin, alpha)
}
