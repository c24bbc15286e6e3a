//! Learning agents for delayed rewards.
//!
//! The three pipelines share one update rule and differ only in how the
//! delayed part of the label reaches it: the maturity buffer (MB) waits for
//! the real outcome, choice-assisted (CA) samples it from the fitted model at
//! decision time, and CA-DR inserts the model expectation and patches it when
//! the outcome matures. MPC plans directly with the model.

mod env;
mod mlp;
mod mpc;
mod replay;
mod tabular;
mod targets;
mod train;

pub use env::{
    BookingEnv, BookingPlanState, BookingWorldModel, DelayedEnv, EnvStep, Matured, OracleEnv, OracleItem, OracleModel,
    Pending, WorldModel,
};
pub use mlp::{dqn_train_step, encode_state, Adam, Mlp, MLP_SCHEMA_VERSION};
pub use mpc::{mpc_select_action, MpcConfig};
pub use replay::{Handle, MaturityBuffer, Provenance, ReplayBuffer, TransitionRecord};
pub use tabular::QTable;
pub use targets::{clip_reward, doubly_robust_target, impute_synthetic_transition};
pub use train::{
    evaluate_policy, read_qtable_csv, train_agent, write_curve_csv, write_qtable_csv, ActionPolicy, ConstantPolicy,
    CurvePoint, DqnConfig, EvalStats, Method, TrainConfig, TrainOutcome, TrainedPolicy, Variant,
};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Reward clip per decision, in dollars.
pub const R_MAX: f64 = 1000.0;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn epsilon_greedy(q: &[f64], epsilon: f64, rng: &mut Rng) -> Result<usize> {
    if q.is_empty() {
        return Err(Error::Invalid("empty action-value vector".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Invalid(format!("epsilon {epsilon} outside [0, 1]")));
    }
    // Both draws are always taken so the stream position does not depend on q.
    let u: f64 = rng.gen();
    let k = rng.gen_range(0..q.len());
    Ok(if u < epsilon { k } else { argmax(q) })
}

/// Linear decay from `start` to `end` over `decay_episodes`, then flat.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_episodes: usize,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule { start: 1.0, end: 0.01, decay_episodes: 100 }
    }
}

impl EpsilonSchedule {
    pub fn constant(eps: f64) -> Self {
        EpsilonSchedule { start: eps, end: eps, decay_episodes: 0 }
    }

    pub fn at(&self, episode: usize) -> f64 {
        if episode >= self.decay_episodes {
            return self.end;
        }
        let f = (episode as f64 / self.decay_episodes as f64).min(1.0);
        self.start + (self.end - self.start) * f
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn greedy_and_ties() {
        let mut rng = stream(0, 0);
        assert_eq!(epsilon_greedy(&[1.0, 3.0, 2.0], 0.0, &mut rng).unwrap(), 1);
        assert_eq!(epsilon_greedy(&[5.0, 5.0], 0.0, &mut rng).unwrap(), 0);
        assert!(epsilon_greedy(&[], 0.1, &mut rng).is_err());
        assert!(epsilon_greedy(&[1.0], 1.5, &mut rng).is_err());
    }

    #[test]
    fn uniform_exploration_band() {
        // 1/13 with a three-sigma band at n = 1e5.
        let mut rng = stream(1, 0);
        let n = 100_000;
        let mut counts = [0usize; 13];
        let q = [0.0; 13];
        for _ in 0..n {
            counts[epsilon_greedy(&q, 1.0, &mut rng).unwrap()] += 1;
        }
        let p = 1.0 / 13.0;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((p - 3.0 * sd..=p + 3.0 * sd).contains(&f), "{f}");
            assert!((0.0706..=0.0832).contains(&f));
        }
    }

    #[test]
    fn schedule_endpoints() {
        let s = EpsilonSchedule::default();
        assert_eq!(s.at(0), 1.0);
        assert!((s.at(50) - 0.505).abs() < 1e-12);
        assert_eq!(s.at(100), 0.01);
        assert_eq!(s.at(140), 0.01);
        assert_eq!(EpsilonSchedule::constant(0.3).at(7), 0.3);
    }
}
