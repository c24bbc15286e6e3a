use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::report::BoundReport;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// One decision per epoch `1..=T`; decision `tau` with delay `D` counts as
/// matured at epoch `t` once `tau + D <= t`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaturationReport {
    /// Mean of `N_t / t` over trials, index `t - 1`.
    pub ratio: Vec<f64>,
    /// Mean over trials of `N_T / T`.
    pub final_ratio: f64,
    pub min_final_ratio: f64,
    /// Mean of `t - N_t` over trials and all `t > D_max`.
    pub mean_gap: f64,
    pub expected_gap: f64,
    /// Epochs (over all trials) where `N_t` left `[t - D_max, t]`.
    pub violations: usize,
    pub bounds: Vec<BoundReport>,
}

/// `sum_{k >= 0} P(D > k)`: expected count of unmatured decisions once the
/// clock is past the largest delay.
pub fn expected_unmatured(support: &[usize]) -> f64 {
    let n = support.len() as f64;
    let dmax = support.iter().copied().max().unwrap_or(0);
    (0..dmax).map(|k| support.iter().filter(|&&d| d > k).count() as f64 / n).sum()
}

fn one_trial(support: &[usize], horizon: usize, rng: &mut Rng) -> Vec<usize> {
    // arrive[t] counts decisions whose outcome arrives at epoch t.
    let mut arrive = vec![0usize; horizon + 1];
    for tau in 1..=horizon {
        let d = support[rng.gen_range(0..support.len())];
        if tau + d <= horizon {
            arrive[tau + d] += 1;
        }
    }
    let mut n = Vec::with_capacity(horizon);
    let mut acc = 0;
    for a in arrive.iter().skip(1) {
        acc += a;
        n.push(acc);
    }
    n
}

/// Simulates delayed maturation with delays uniform on `support`.
pub fn maturation_curve(support: &[usize], horizon: usize, n_trials: usize, seed: u64) -> Result<MaturationReport> {
    if support.is_empty() || horizon == 0 || n_trials == 0 {
        return Err(Error::Invalid("need a delay support, a horizon and at least one trial".into()));
    }
    let dmax = *support.iter().max().expect("nonempty");
    let mut ratio = vec![0.0; horizon];
    let (mut final_sum, mut final_min) = (0.0, f64::INFINITY);
    let (mut gap_sum, mut gap_n) = (0.0, 0usize);
    let mut violations = 0;
    let (mut worst_low, mut worst_high) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for k in 0..n_trials {
        let mut rng = rng::stream(rng::derive(seed, k as u64), rng::STREAM_ENV);
        let n = one_trial(support, horizon, &mut rng);
        for (i, &nt) in n.iter().enumerate() {
            let t = i + 1;
            let low = t.saturating_sub(dmax) as f64 - nt as f64;
            let high = nt as f64 - t as f64;
            worst_low = worst_low.max(low);
            worst_high = worst_high.max(high);
            if low > 0.0 || high > 0.0 {
                violations += 1;
            }
            ratio[i] += nt as f64 / t as f64 / n_trials as f64;
            if t > dmax {
                gap_sum += (t - nt) as f64;
                gap_n += 1;
            }
        }
        let f = n[horizon - 1] as f64 / horizon as f64;
        final_sum += f;
        final_min = final_min.min(f);
    }
    let instance = format!("delays={}..={} T={horizon} trials={n_trials}", support[0], dmax);
    Ok(MaturationReport {
        final_ratio: final_sum / n_trials as f64,
        min_final_ratio: final_min,
        ratio,
        mean_gap: if gap_n > 0 { gap_sum / gap_n as f64 } else { 0.0 },
        expected_gap: expected_unmatured(support),
        violations,
        bounds: vec![
            BoundReport::new("maturation_lower", instance.clone(), worst_low, 0.0),
            BoundReport::new("maturation_upper", instance, worst_high, 0.0),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_delay_matures_everything() {
        let r = maturation_curve(&[0], 50, 3, 0).unwrap();
        assert!(r.ratio.iter().all(|x| *x == 1.0));
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn uniform_fourteen_hard_bounds() {
        let support: Vec<usize> = (1..=14).collect();
        let r = maturation_curve(&support, 1000, 20, 1).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.bounds.iter().all(|b| b.pass));
        assert!((0.986..=1.0).contains(&r.min_final_ratio));
    }

    #[test]
    fn closed_form_gap() {
        // P(D > k) = (14 - k) / 14 for k = 0..13, so the sum is 105 / 14.
        let support: Vec<usize> = (1..=14).collect();
        assert!((expected_unmatured(&support) - 7.5).abs() < 1e-12);
        assert_eq!(expected_unmatured(&[0]), 0.0);
        assert!((expected_unmatured(&[2]) - 2.0).abs() < 1e-12);
        let r = maturation_curve(&support, 2000, 50, 2).unwrap();
        // Gap variance per epoch is about 2.2 with correlation length 14,
        // so the standard error here is near 0.02.
        assert!((r.mean_gap - 7.5).abs() < 0.1, "{}", r.mean_gap);
    }
}
