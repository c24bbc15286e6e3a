use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::argmax;
use super::env::WorldModel;
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub rollouts: usize,
    /// Look-ahead epochs after the current one.
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig { rollouts: 30, horizon: 24, gamma: 1.0 }
    }
}

/// Scores each action by the mean model return of holding it for the
/// horizon. Rollout `r` replays the same random stream for every action.
pub fn mpc_select_action<I, M: WorldModel<I>>(
    model: &M,
    s: usize,
    epoch: usize,
    n_actions: usize,
    cfg: &MpcConfig,
    rng: &mut Rng,
) -> usize {
    let key: u64 = rng.gen();
    let mut value = vec![0.0; n_actions];
    for (a, v) in value.iter_mut().enumerate() {
        for r in 0..cfg.rollouts {
            let mut prng = rng::stream(rng::derive(key, r as u64), rng::STREAM_PLAN);
            let mut st = model.plan_start(s, epoch);
            let mut disc = 1.0;
            for _ in 0..=cfg.horizon {
                match model.plan_step(&mut st, a, &mut prng) {
                    Some(rew) => *v += disc * rew,
                    None => break,
                }
                disc *= cfg.gamma;
            }
        }
    }
    argmax(&value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::ReferenceWorld;
    use crate::dcm::DcmParams;
    use crate::environment::{draw_features, EnvConfig, Shock};
    use crate::learners::env::{BookingWorldModel, OracleModel};
    use crate::rng::stream;
    use crate::theory::{greedy_actions, value_iteration, SmallMdp};

    fn oracle(mdp: SmallMdp) -> OracleModel {
        OracleModel { mdp, share: 0.5, mature_prob: 0.5, bias: 0.0 }
    }

    #[test]
    fn zero_horizon_picks_best_immediate_label() {
        let mut rng = stream(0, 0);
        let mdp = SmallMdp::random(5, 4, 0.9, 1.0, &mut rng);
        let m = oracle(mdp.clone());
        let cfg = MpcConfig { rollouts: 3, horizon: 0, gamma: 0.9 };
        for s in 0..5 {
            let want = argmax(&(0..4).map(|a| mdp.reward(s, a)).collect::<Vec<_>>());
            assert_eq!(mpc_select_action(&m, s, 0, 4, &cfg, &mut rng), want);
        }
    }

    #[test]
    fn zero_horizon_booking_matches_direct_expectation() {
        let world = ReferenceWorld::load();
        let cfg = EnvConfig::default();
        let params = DcmParams::from_segment(&world.segment(), 1.0, 1.0);
        let m = BookingWorldModel::new(params.clone(), cfg.clone()).unwrap();
        // Independent estimate of the expected one-step label per action.
        let mut rng = stream(11, 0);
        let n = 20_000;
        let mut value = vec![0.0; cfg.n_actions()];
        for _ in 0..n {
            let x = draw_features(cfg.feature_dim, &mut rng);
            for (a, v) in value.iter_mut().enumerate() {
                let prices = cfg.room_prices(a);
                let probs = params.booking_probabilities(&x, &prices);
                for (j, p) in prices.iter().enumerate() {
                    let keep = 1.0 - params.shock_probabilities(&x, *p)[Shock::Cancel.index()];
                    *v += probs[j + 1] * p * keep / n as f64;
                }
            }
        }
        let want = argmax(&value);
        let mut sorted = value.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(sorted[0] - sorted[1] > 2.0, "{value:?}");
        let mpc = MpcConfig { rollouts: n, horizon: 0, gamma: 1.0 };
        assert_eq!(mpc_select_action(&m, 26, 0, cfg.n_actions(), &mpc, &mut rng), want);
    }

    #[test]
    fn dominant_action_chosen() {
        let p = vec![0.5; 2 * 3 * 2];
        let r = vec![0.1, 0.9, 0.1, 0.2, 0.8, 0.2];
        let m = oracle(SmallMdp::new(2, 3, p, r, 0.9, 1.0).unwrap());
        let mut rng = stream(1, 0);
        for s in 0..2 {
            assert_eq!(mpc_select_action(&m, s, 0, 3, &MpcConfig::default(), &mut rng), 1);
        }
    }

    #[test]
    fn matches_value_iteration_on_two_state_mdp() {
        let p = vec![0.9, 0.1, 0.2, 0.8, 0.7, 0.3, 0.3, 0.7];
        let mdp = SmallMdp::new(2, 2, p, vec![0.3, 0.2, 0.5, 0.9], 0.9, 1.0).unwrap();
        let greedy = greedy_actions(&value_iteration(&mdp, 1e-10).unwrap(), 2);
        // Holding one action is optimal here, so open-loop plans can find it.
        assert_eq!(greedy, vec![1, 1]);
        let m = oracle(mdp);
        let cfg = MpcConfig { rollouts: 2000, horizon: 100, gamma: 0.9 };
        let mut rng = stream(2, 0);
        let hits = (0..2).filter(|&s| mpc_select_action(&m, s, 0, 2, &cfg, &mut rng) == greedy[s]).count();
        assert!(hits as f64 / 2.0 >= 0.95);
    }
}
