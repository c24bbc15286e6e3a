//! Customer covariates.
//!
//! Layout: `[0]` days to arrival, `(d - 1) / 89` for d uniform on 1..=90;
//! `[1..3]` channel dummies (OTA, corporate; direct is the reference);
//! `[3..6]` loyalty dummies (silver, gold, platinum; none is the reference);
//! the rest standard uniform. Dropping one level per categorical keeps the
//! covariates from being collinear with a choice-model intercept.

use rand::Rng as _;

use crate::behavior::inverse_cdf;
use crate::rng::Rng;

pub(crate) const FIXED_FEATURES: usize = 6;

const CHANNEL_WEIGHTS: [f64; 3] = [0.5, 0.35, 0.15];
const LOYALTY_WEIGHTS: [f64; 4] = [0.55, 0.25, 0.15, 0.05];

pub fn draw_features(dim: usize, rng: &mut Rng) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    let days: u32 = rng.gen_range(1..=90);
    x[0] = (days - 1) as f64 / 89.0;
    let channel = inverse_cdf(&CHANNEL_WEIGHTS, rng.gen());
    if channel > 0 {
        x[channel] = 1.0;
    }
    let loyalty = inverse_cdf(&LOYALTY_WEIGHTS, rng.gen());
    if loyalty > 0 {
        x[2 + loyalty] = 1.0;
    }
    for v in x.iter_mut().skip(FIXED_FEATURES) {
        *v = rng.gen();
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn layout_and_frequencies() {
        let mut rng = stream(8, 0);
        let n = 50_000;
        let mut sums = vec![0.0; 12];
        for _ in 0..n {
            let x = draw_features(12, &mut rng);
            assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(x[1] + x[2] <= 1.0 && x[3] + x[4] + x[5] <= 1.0);
            for (s, v) in sums.iter_mut().zip(&x) {
                *s += v;
            }
        }
        let means: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        let expect = [0.5, 0.35, 0.15, 0.25, 0.15, 0.05, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5];
        for (m, e) in means.iter().zip(expect) {
            assert!((m - e).abs() < 0.01, "{means:?}");
        }
    }
}
