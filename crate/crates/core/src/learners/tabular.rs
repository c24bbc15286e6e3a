use serde::{Deserialize, Serialize};

use super::argmax;
use crate::error::{Error, Result};

/// Action values with per-pair visit counts; step size `1/n(s,a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<f64>,
    pub visits: Vec<u64>,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        QTable { n_states, n_actions, values: vec![0.0; n_states * n_actions], visits: vec![0; n_states * n_actions] }
    }

    fn idx(&self, s: usize, a: usize) -> Result<usize> {
        if s >= self.n_states || a >= self.n_actions {
            return Err(Error::Index(format!("(s={s}, a={a}) outside {}x{}", self.n_states, self.n_actions)));
        }
        Ok(s * self.n_actions + a)
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn get(&self, s: usize, a: usize) -> Result<f64> {
        Ok(self.values[self.idx(s, a)?])
    }

    pub fn greedy(&self, s: usize) -> usize {
        argmax(self.row(s))
    }

    /// One Q-learning step; `s_next = None` is terminal.
    pub fn update(&mut self, s: usize, a: usize, reward: f64, s_next: Option<usize>, gamma: f64) -> Result<()> {
        let i = self.idx(s, a)?;
        let boot = match s_next {
            Some(sn) => {
                self.idx(sn, 0)?;
                gamma * self.row(sn).iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
            None => 0.0,
        };
        self.visits[i] += 1;
        let alpha = 1.0 / self.visits[i] as f64;
        self.values[i] += alpha * (reward + boot - self.values[i]);
        Ok(())
    }

    /// Replaces one earlier target by `target + delta`. With running-average
    /// step sizes that moves the estimate by `delta / n(s,a)`.
    pub fn patch(&mut self, s: usize, a: usize, delta: f64) -> Result<()> {
        let i = self.idx(s, a)?;
        if self.visits[i] == 0 {
            return Err(Error::Invalid(format!("patch of unvisited pair ({s}, {a})")));
        }
        self.values[i] += delta / self.visits[i] as f64;
        Ok(())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
