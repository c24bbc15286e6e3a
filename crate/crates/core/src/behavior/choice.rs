use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Max-shifted softmax.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = out.iter().sum();
    for p in &mut out {
        *p /= s;
    }
    out
}

/// Two-level nested logit. `nests` partitions `1..utilities.len()`; alternative
/// 0 forms its own degenerate nest.
pub fn nested_logit(utilities: &[f64], nests: &[Vec<usize>], lambdas: &[f64]) -> Vec<f64> {
    let mut inclusive = Vec::with_capacity(nests.len() + 1);
    inclusive.push(utilities[0]);
    let mut within = Vec::with_capacity(nests.len());
    for (nest, &lam) in nests.iter().zip(lambdas) {
        let scaled: Vec<f64> = nest.iter().map(|&j| utilities[j] / lam).collect();
        inclusive.push(lam * log_sum_exp(&scaled));
        within.push(softmax(&scaled));
    }
    let upper = softmax(&inclusive);
    let mut probs = vec![0.0; utilities.len()];
    probs[0] = upper[0];
    for (k, nest) in nests.iter().enumerate() {
        for (i, &j) in nest.iter().enumerate() {
            probs[j] = upper[k + 1] * within[k][i];
        }
    }
    probs
}

pub fn validate_simplex(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::NotSimplex("empty".into()));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < -1e-12 || *p > 1.0 + 1e-12) {
        return Err(Error::NotSimplex(format!("entry outside [0,1]: {probs:?}")));
    }
    let s: f64 = probs.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::NotSimplex(format!("sum is {s}")));
    }
    Ok(())
}

/// Inverse-CDF lookup for a uniform `u` in [0, 1).
pub fn inverse_cdf(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}

pub fn sample_outcome(probs: &[f64], rng: &mut Rng) -> Result<usize> {
    validate_simplex(probs)?;
    Ok(inverse_cdf(probs, rng.gen::<f64>()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn analytic_softmax_cases() {
        let p = softmax(&[0.0; 4]);
        assert!(p.iter().all(|x| (x - 0.25).abs() < 1e-15));
        let p = softmax(&[0.0, 2f64.ln()]);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15 && (p[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn sampler_edge_cases() {
        let mut rng = stream(1, 0);
        for _ in 0..1000 {
            assert_eq!(sample_outcome(&[1.0, 0.0, 0.0], &mut rng).unwrap(), 0);
        }
        assert!(sample_outcome(&[0.3, 0.6], &mut rng).is_err());
        assert!(sample_outcome(&[], &mut rng).is_err());
    }

    #[test]
    fn fair_coin_concentration() {
        let mut rng = stream(11, 0);
        let n = 100_000;
        let zeros = (0..n).filter(|_| sample_outcome(&[0.5, 0.5], &mut rng).unwrap() == 0).count();
        let f = zeros as f64 / n as f64;
        assert!((0.495..=0.505).contains(&f), "{f}");
    }

    #[test]
    fn frequencies_within_multinomial_band() {
        let probs = [0.1, 0.45, 0.05, 0.4];
        let mut rng = stream(5, 0);
        let n = 100_000usize;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_outcome(&probs, &mut rng).unwrap()] += 1;
        }
        for (c, p) in counts.iter().zip(probs) {
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() <= 3.0 * sd + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn nested_unit_lambda_is_mnl(v in prop::collection::vec(-8.0f64..8.0, 6)) {
            let mut u = vec![0.0];
            u.extend(v);
            let a = nested_logit(&u, &[vec![1, 2, 3], vec![4, 5, 6]], &[1.0, 1.0]);
            let b = softmax(&u);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn location_invariance(v in prop::collection::vec(-10.0f64..10.0, 1..8), c in -50.0f64..50.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            for (x, y) in softmax(&v).iter().zip(softmax(&shifted)) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn nested_is_simplex(v in prop::collection::vec(-8.0f64..8.0, 6), l1 in 0.05f64..=1.0, l2 in 0.05f64..=1.0) {
            let mut u = vec![0.0];
            u.extend(v);
            let p = nested_logit(&u, &[vec![1, 3], vec![2, 4, 5, 6]], &[l1, l2]);
            prop_assert!(validate_simplex(&p).is_ok());
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
