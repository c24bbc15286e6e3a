use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::report::BoundReport;
use crate::behavior::{softmax, ReferenceWorld};
use crate::environment::{draw_features, EnvConfig};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// MNL over an outside option (utility 0, reward 0) and `theta.len()`
/// alternatives with utilities `theta_j . phi` and rewards `rewards[j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearChoiceReward {
    pub theta: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

impl LinearChoiceReward {
    pub fn new(theta: Vec<Vec<f64>>, rewards: Vec<f64>) -> Result<Self> {
        if theta.len() != rewards.len() || theta.iter().any(|t| t.len() != theta[0].len()) {
            return Err(Error::Dimension("one coefficient row of equal length per reward".into()));
        }
        Ok(LinearChoiceReward { theta, rewards })
    }

    pub fn dim(&self) -> usize {
        self.theta.first().map_or(0, Vec::len)
    }

    pub fn probabilities(&self, phi: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.theta.len() + 1);
        v.push(0.0);
        v.extend(self.theta.iter().map(|t| t.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>()));
        softmax(&v)
    }

    pub fn mean_reward(&self, phi: &[f64]) -> f64 {
        self.probabilities(phi).iter().skip(1).zip(&self.rewards).map(|(p, r)| p * r).sum()
    }

    /// Largest Euclidean row norm.
    pub fn b_theta(&self) -> f64 {
        self.theta.iter().map(|t| t.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max)
    }

    pub fn lipschitz(&self, r_max: f64) -> f64 {
        self.b_theta() * r_max
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn nearest_distance(phi: &[f64], support: &[Vec<f64>]) -> f64 {
    support.iter().map(|s| distance(phi, s)).fold(f64::INFINITY, f64::min)
}

/// Pointwise check of `|m(phi) - r(phi)| <= eps_train + (L_m + L_r) delta(phi)`
/// with `L_m = B_theta R_max` and `delta` the distance to the nearest
/// training feature.
pub fn extrapolation_bound_check(
    model: &LinearChoiceReward,
    truth: impl Fn(&[f64]) -> f64,
    l_r: f64,
    r_max: f64,
    train: &[Vec<f64>],
    test: &[Vec<f64>],
) -> Result<Vec<BoundReport>> {
    if train.is_empty() {
        return Err(Error::Invalid("empty training support".into()));
    }
    if model.rewards.iter().any(|r| !(0.0..=r_max).contains(r)) {
        return Err(Error::Invalid("alternative rewards must lie in [0, r_max]".into()));
    }
    let eps_train = train.iter().map(|phi| (model.mean_reward(phi) - truth(phi)).abs()).fold(0.0, f64::max);
    let l = model.lipschitz(r_max) + l_r;
    Ok(test
        .iter()
        .enumerate()
        .map(|(i, phi)| {
            let delta = nearest_distance(phi, train);
            let err = (model.mean_reward(phi) - truth(phi)).abs();
            BoundReport::new("extrapolation", format!("point={i} delta={delta:.4}"), err, eps_train + l * delta)
        })
        .collect())
}

/// Reference-world instance at one price action: truth is the booking MNL
/// with room prices as rewards, the model adds Gaussian noise of sd
/// `noise` to every coefficient. Features are `(1, x)`.
pub struct ReferenceInstance {
    pub truth: LinearChoiceReward,
    pub model: LinearChoiceReward,
    pub r_max: f64,
}

impl ReferenceInstance {
    pub fn new(action: usize, noise: f64, rng: &mut Rng) -> Result<Self> {
        let world = ReferenceWorld::load();
        let seg = world.segment();
        let cfg = EnvConfig::default();
        let prices = cfg.room_prices(action);
        let base = seg.booking_utilities(&vec![0.0; cfg.feature_dim], &prices, 1.0, 1.0);
        let theta: Vec<Vec<f64>> = (0..prices.len())
            .map(|j| std::iter::once(base[j + 1]).chain(seg.booking.gamma[j].iter().copied()).collect())
            .collect();
        let truth = LinearChoiceReward::new(theta.clone(), prices.clone())?;
        let n = Normal::new(0.0, noise).map_err(|e| Error::Invalid(e.to_string()))?;
        let noisy = theta.iter().map(|t| t.iter().map(|x| x + n.sample(rng)).collect()).collect();
        let model = LinearChoiceReward::new(noisy, prices)?;
        Ok(ReferenceInstance { truth, model, r_max: crate::learners::R_MAX })
    }

    pub fn feature(x: Vec<f64>) -> Vec<f64> {
        std::iter::once(1.0).chain(x).collect()
    }

    /// Training support: customers booking at most 45 days ahead.
    pub fn draw_train(n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        let dim = EnvConfig::default().feature_dim;
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let x = draw_features(dim, rng);
            if x[0] <= 0.5 {
                out.push(Self::feature(x));
            }
        }
        out
    }

    pub fn draw_test(n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        let dim = EnvConfig::default().feature_dim;
        (0..n).map(|_| Self::feature(draw_features(dim, rng))).collect()
    }

    pub fn check(&self, train: &[Vec<f64>], test: &[Vec<f64>]) -> Result<Vec<BoundReport>> {
        let l_r = self.truth.lipschitz(self.r_max);
        extrapolation_bound_check(&self.model, |phi| self.truth.mean_reward(phi), l_r, self.r_max, train, test)
    }
}

/// Reference-world sweep: `n_test` random test points against `n_train`
/// restricted training features.
pub fn extrapolation_sweep(n_train: usize, n_test: usize, seed: u64) -> Result<Vec<BoundReport>> {
    let mut rng = rng::stream(seed, rng::STREAM_DATA);
    let action = rng.gen_range(0..EnvConfig::default().n_actions());
    let inst = ReferenceInstance::new(action, 0.1, &mut rng)?;
    let train = ReferenceInstance::draw_train(n_train, &mut rng);
    let test = ReferenceInstance::draw_test(n_test, &mut rng);
    inst.check(&train, &test)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SoftmaxLipschitzReport {
    pub pairs: usize,
    /// Pairs breaking `||s(z) - s(z')||_1 <= 0.5 ||z - z'||_inf + 1e-12`.
    pub violations: usize,
    /// Largest ratio `||s(z) - s(z')||_1 / ||z - z'||_inf` seen.
    pub worst_ratio: f64,
    /// Pairs breaking the same inequality with constant 1.
    pub violations_unit: usize,
    /// Pairs breaking `||s(z) - s(z')||_1 <= 0.5 ||z - z'||_1`.
    pub violations_l1: usize,
}

pub const SOFTMAX_TOL: f64 = 1e-12;

/// Random utility vectors of length 2..=8 with entries uniform on [-3, 3].
pub fn softmax_lipschitz_suite(n_pairs: usize, seed: u64) -> SoftmaxLipschitzReport {
    let mut rng = rng::stream(seed, rng::STREAM_DATA);
    let mut rep = SoftmaxLipschitzReport {
        pairs: n_pairs,
        violations: 0,
        worst_ratio: 0.0,
        violations_unit: 0,
        violations_l1: 0,
    };
    for _ in 0..n_pairs {
        let k = rng.gen_range(2..=8);
        let z: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let z2: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let lhs: f64 = softmax(&z).iter().zip(softmax(&z2)).map(|(a, b)| (a - b).abs()).sum();
        let inf = z.iter().zip(&z2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let l1: f64 = z.iter().zip(&z2).map(|(a, b)| (a - b).abs()).sum();
        rep.violations += usize::from(lhs > 0.5 * inf + SOFTMAX_TOL);
        rep.violations_unit += usize::from(lhs > inf + SOFTMAX_TOL);
        rep.violations_l1 += usize::from(lhs > 0.5 * l1 + SOFTMAX_TOL);
        if inf > 0.0 {
            rep.worst_ratio = rep.worst_ratio.max(lhs / inf);
        }
    }
    rep
}
