use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const MAX_STATES: usize = 10;
pub const MAX_ACTIONS: usize = 5;

/// Finite discounted MDP with row-stochastic transitions stored as
/// `p[(s * n_actions + a) * n_states + s']`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub p: Vec<f64>,
    pub r: Vec<f64>,
    pub gamma: f64,
    pub r_max: f64,
}

impl SmallMdp {
    pub fn new(n_states: usize, n_actions: usize, p: Vec<f64>, r: Vec<f64>, gamma: f64, r_max: f64) -> Result<Self> {
        let m = SmallMdp { n_states, n_actions, p, r, gamma, r_max };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let (ns, na) = (self.n_states, self.n_actions);
        if ns == 0 || ns > MAX_STATES || na == 0 || na > MAX_ACTIONS {
            return Err(Error::Invalid(format!("need 1..={MAX_STATES} states and 1..={MAX_ACTIONS} actions")));
        }
        if self.p.len() != ns * na * ns || self.r.len() != ns * na {
            return Err(Error::Dimension("transition or reward table has the wrong size".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Invalid("gamma must lie in [0, 1)".into()));
        }
        for (i, row) in self.p.chunks(ns).enumerate() {
            if row.iter().any(|q| *q < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::NotSimplex(format!("transition row {i}")));
            }
        }
        if self.r.iter().any(|x| !(0.0..=self.r_max).contains(x)) {
            return Err(Error::Invalid("rewards must lie in [0, r_max]".into()));
        }
        Ok(())
    }

    /// Random instance: exponential-normalised rows, uniform rewards.
    pub fn random(n_states: usize, n_actions: usize, gamma: f64, r_max: f64, rng: &mut Rng) -> Self {
        let mut p = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            let row: Vec<f64> = (0..n_states).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let s: f64 = row.iter().sum();
            let mut row: Vec<f64> = row.iter().map(|x| x / s).collect();
            let total: f64 = row.iter().sum();
            row[0] += 1.0 - total;
            p.extend(row);
        }
        let r = (0..n_states * n_actions).map(|_| rng.gen_range(0.0..=r_max)).collect();
        SmallMdp { n_states, n_actions, p, r, gamma, r_max }
    }

    pub fn v_max(&self) -> f64 {
        self.r_max / (1.0 - self.gamma)
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let i = (s * self.n_actions + a) * self.n_states;
        &self.p[i..i + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.r[s * self.n_actions + a]
    }

    pub fn bellman(&self, q: &[f64]) -> Vec<f64> {
        let v: Vec<f64> = q.chunks(self.n_actions).map(max).collect();
        let mut out = Vec::with_capacity(q.len());
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let ev: f64 = self.row(s, a).iter().zip(&v).map(|(p, v)| p * v).sum();
                out.push(self.reward(s, a) + self.gamma * ev);
            }
        }
        out
    }

    pub fn sample_next(&self, s: usize, a: usize, u: f64) -> usize {
        crate::behavior::inverse_cdf(self.row(s, a), u)
    }
}

pub(crate) fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Iterates the Bellman operator until successive iterates differ by at most
/// `tol (1 - gamma) / (2 gamma)`, which puts the result within `tol / 2` of Q*.
pub fn value_iteration(mdp: &SmallMdp, tol: f64) -> Result<Vec<f64>> {
    mdp.validate()?;
    let stop = if mdp.gamma == 0.0 { 0.0 } else { tol * (1.0 - mdp.gamma) / (2.0 * mdp.gamma) };
    let mut q = vec![0.0; mdp.n_states * mdp.n_actions];
    loop {
        let next = mdp.bellman(&q);
        let diff = sup_distance(&next, &q);
        q = next;
        if diff <= stop {
            return Ok(q);
        }
    }
}

pub fn greedy_actions(q: &[f64], n_actions: usize) -> Vec<usize> {
    q.chunks(n_actions).map(crate::learners::argmax).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn geometric_series() {
        let m = SmallMdp::new(1, 1, vec![1.0], vec![1.0], 0.5, 1.0).unwrap();
        let q = value_iteration(&m, 1e-12).unwrap();
        assert!((q[0] - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn zero_discount_returns_rewards() {
        let mut rng = stream(3, 0);
        let m = SmallMdp::random(4, 3, 0.0, 1.0, &mut rng);
        assert_eq!(value_iteration(&m, 1e-8).unwrap(), m.r);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(SmallMdp::new(2, 1, vec![0.5, 0.6, 1.0, 0.0], vec![0.0, 0.0], 0.9, 1.0).is_err());
        assert!(SmallMdp::new(1, 1, vec![1.0], vec![2.0], 0.9, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn fixed_point_residual_within_tol(seed in any::<u64>(), g in 0.0f64..0.99) {
            let mut rng = stream(seed, 0);
            let m = SmallMdp::random(5, 3, g, 1.0, &mut rng);
            let tol = 1e-8;
            let q = value_iteration(&m, tol).unwrap();
            prop_assert!(sup_distance(&m.bellman(&q), &q) <= tol);
            prop_assert!(q.iter().all(|v| *v >= -1e-12 && *v <= m.v_max() + 1e-9));
        }
    }
}
