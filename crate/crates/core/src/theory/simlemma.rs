use rand::Rng as _;
use rayon::prelude::*;

use super::mdp::{sup_distance, value_iteration, SmallMdp};
use super::report::BoundReport;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

const VI_TOL: f64 = 1e-11;

/// Worst-case gap between optimal values of two MDPs whose rewards differ by
/// at most `eps_r` and whose transition rows differ by at most `eps_p` in L1.
pub fn simulation_bound(gamma: f64, r_max: f64, eps_r: f64, eps_p: f64) -> f64 {
    eps_r / (1.0 - gamma) + gamma * r_max * eps_p / ((1.0 - gamma) * (1.0 - gamma))
}

/// Moves `row` by a random direction of L1 size `eps`, clips negative mass,
/// renormalises, and finally shrinks towards `row` if clipping grew the step.
pub fn perturb_row(row: &[f64], eps: f64, rng: &mut Rng) -> Vec<f64> {
    let n = row.len();
    if eps == 0.0 || n < 2 {
        return row.to_vec();
    }
    let mut d: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    d.iter_mut().for_each(|x| *x -= mean);
    let l1: f64 = d.iter().map(|x| x.abs()).sum();
    if l1 == 0.0 {
        return row.to_vec();
    }
    let mut out: Vec<f64> = row.iter().zip(&d).map(|(p, x)| (p + eps * x / l1).max(0.0)).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    let dist: f64 = out.iter().zip(row).map(|(a, b)| (a - b).abs()).sum();
    if dist > eps {
        let t = eps / dist;
        for (o, p) in out.iter_mut().zip(row) {
            *o = p + t * (*o - p);
        }
    }
    fix_sum(&mut out);
    out
}

// Push rounding residue into the largest entry.
fn fix_sum(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    let i = crate::learners::argmax(row);
    row[i] += 1.0 - total;
}

pub fn perturb_mdp(mdp: &SmallMdp, eps_r: f64, eps_p: f64, rng: &mut Rng) -> Result<SmallMdp> {
    let r = mdp.r.iter().map(|x| (x + eps_r * (2.0 * rng.gen::<f64>() - 1.0)).clamp(0.0, mdp.r_max)).collect();
    let mut p = Vec::with_capacity(mdp.p.len());
    for row in mdp.p.chunks(mdp.n_states) {
        p.extend(perturb_row(row, eps_p, rng));
    }
    SmallMdp::new(mdp.n_states, mdp.n_actions, p, r, mdp.gamma, mdp.r_max)
}

/// Solves `n_trials` perturbed copies of `mdp` and compares each optimal
/// value gap with the simulation bound.
pub fn simulation_lemma_check(
    mdp: &SmallMdp,
    eps_r: f64,
    eps_p: f64,
    n_trials: usize,
    rng: &mut Rng,
) -> Result<Vec<BoundReport>> {
    if eps_r < 0.0 || eps_p < 0.0 {
        return Err(Error::Invalid("perturbation sizes must be nonnegative".into()));
    }
    let q = value_iteration(mdp, VI_TOL)?;
    let bound = simulation_bound(mdp.gamma, mdp.r_max, eps_r, eps_p);
    let mut out = Vec::with_capacity(n_trials);
    for k in 0..n_trials {
        let other = perturb_mdp(mdp, eps_r, eps_p, rng)?;
        let q2 = value_iteration(&other, VI_TOL)?;
        let instance = format!(
            "{}x{} gamma={} eps_r={eps_r:.4} eps_p={eps_p:.4} trial={k}",
            mdp.n_states, mdp.n_actions, mdp.gamma
        );
        out.push(BoundReport::new("simulation_lemma", instance, sup_distance(&q, &q2), bound));
    }
    Ok(out)
}

pub const SWEEP_GAMMAS: [f64; 3] = [0.5, 0.9, 0.99];

/// Random 5x3 instances cycling through `SWEEP_GAMMAS`, perturbation sizes
/// uniform on [0, 0.2].
pub fn simulation_lemma_sweep(n_instances: usize, seed: u64) -> Result<Vec<BoundReport>> {
    let reports: Result<Vec<Vec<BoundReport>>> = (0..n_instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(rng::derive(seed, i as u64), rng::STREAM_INIT);
            let gamma = SWEEP_GAMMAS[i % SWEEP_GAMMAS.len()];
            let mdp = SmallMdp::random(5, 3, gamma, 1.0, &mut rng);
            let eps_r = 0.2 * rng.gen::<f64>();
            let eps_p = 0.2 * rng.gen::<f64>();
            simulation_lemma_check(&mdp, eps_r, eps_p, 1, &mut rng)
        })
        .collect();
    Ok(reports?.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn zero_perturbation_gives_zero_gap() {
        let mut rng = stream(0, 0);
        let m = SmallMdp::random(5, 3, 0.9, 1.0, &mut rng);
        let r = simulation_lemma_check(&m, 0.0, 0.0, 3, &mut rng).unwrap();
        assert!(r.iter().all(|x| x.measured == 0.0 && x.bound == 0.0 && x.pass));
    }

    #[test]
    fn reward_only_bound_instance() {
        assert!((simulation_bound(0.9, 1.0, 0.1, 0.0) - 1.0).abs() < 1e-12);
        let mut rng = stream(1, 0);
        let m = SmallMdp::random(5, 3, 0.9, 1.0, &mut rng);
        for r in simulation_lemma_check(&m, 0.1, 0.0, 20, &mut rng).unwrap() {
            assert!(r.pass && r.measured <= 1.0, "{r:?}");
        }
    }

    #[test]
    fn uniform_reward_shift_is_tight() {
        // Adding a constant c to every reward shifts Q* by exactly c / (1 - gamma).
        let mut rng = stream(2, 0);
        let m = SmallMdp::random(4, 2, 0.5, 2.0, &mut rng);
        let mut m2 = m.clone();
        m2.r.iter_mut().for_each(|x| *x = (*x * 0.5) + 0.1);
        let mut m1 = m.clone();
        m1.r.iter_mut().for_each(|x| *x *= 0.5);
        let gap = sup_distance(&value_iteration(&m1, 1e-12).unwrap(), &value_iteration(&m2, 1e-12).unwrap());
        assert!((gap - 0.2).abs() < 1e-9);
    }

    #[test]
    fn sweep_passes() {
        let r = simulation_lemma_sweep(30, 9).unwrap();
        assert_eq!(r.len(), 30);
        assert!(r.iter().all(|x| x.pass), "{:?}", r.iter().find(|x| !x.pass));
    }

    proptest! {
        #[test]
        fn perturbed_row_stays_in_ball(seed in any::<u64>(), eps in 0.0f64..1.5) {
            let mut rng = stream(seed, 0);
            let m = SmallMdp::random(6, 1, 0.5, 1.0, &mut rng);
            let row = m.row(0, 0).to_vec();
            let out = perturb_row(&row, eps, &mut rng);
            let dist: f64 = out.iter().zip(&row).map(|(a, b)| (a - b).abs()).sum();
            prop_assert!(dist <= eps + 1e-12);
            prop_assert!(out.iter().all(|x| *x >= 0.0));
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
