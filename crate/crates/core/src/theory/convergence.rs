use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mdp::{sup_distance, value_iteration, SmallMdp};
use super::report::BoundReport;
use super::simlemma::simulation_bound;
use crate::behavior::inverse_cdf;
use crate::error::{Error, Result};
use crate::learners::{epsilon_greedy, QTable};
use crate::rng;

/// Exploration rate of the behavior policy in every trace.
pub const TRACE_EPSILON: f64 = 0.3;
const GRID_PER_DECADE: usize = 10;

/// Injected model error `eps_t = c * t^-beta`, separately for rewards and
/// transitions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSchedule {
    pub c_r: f64,
    pub c_p: f64,
    pub beta: f64,
}

impl ErrorSchedule {
    pub fn exact() -> Self {
        ErrorSchedule { c_r: 0.0, c_p: 0.0, beta: 0.0 }
    }

    pub fn at(&self, t: u64) -> (f64, f64) {
        let f = (t.max(1) as f64).powf(-self.beta);
        (self.c_r * f, self.c_p * f)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub schedule: ErrorSchedule,
    pub steps: Vec<u64>,
    /// `||Q_t - Q*||_inf` at each grid step (mean over replicates).
    pub errors: Vec<f64>,
    /// OLS slope of log error on log t over the last decade.
    pub slope: f64,
    /// Mean error over the last decade.
    pub floor: f64,
    /// Fixed-model bound at `(c_r, c_p)`; meaningful for `beta = 0`.
    pub floor_bound: f64,
}

impl ConvergenceTrace {
    pub fn final_error(&self) -> f64 {
        *self.errors.last().expect("nonempty trace")
    }

    pub fn floor_report(&self) -> BoundReport {
        let s = self.schedule;
        BoundReport::new(
            "fixed_model_floor",
            format!("c_r={} c_p={} beta={}", s.c_r, s.c_p, s.beta),
            self.floor,
            self.floor_bound,
        )
    }
}

/// Steps `1..=n` on a log grid with ten points per decade.
pub fn geometric_grid(n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let t = 10f64.powf(k as f64 / GRID_PER_DECADE as f64).round() as u64;
        if t > n {
            break;
        }
        if out.last() != Some(&t) {
            out.push(t);
        }
        k += 1;
    }
    if out.last() != Some(&n) {
        out.push(n);
    }
    out
}

fn last_decade(steps: &[u64]) -> usize {
    let end = *steps.last().unwrap_or(&1) as f64;
    steps.iter().position(|&t| t as f64 >= end / 10.0).unwrap_or(0)
}

/// OLS slope of `ln y` on `ln t` over the final decade of `t`.
pub fn loglog_slope(steps: &[u64], errors: &[f64]) -> f64 {
    let from = last_decade(steps);
    let pts: Vec<(f64, f64)> = steps[from..]
        .iter()
        .zip(&errors[from..])
        .filter(|(_, e)| **e > 0.0)
        .map(|(t, e)| ((*t as f64).ln(), e.ln()))
        .collect();
    let n = pts.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn run(mdp: &SmallMdp, q_star: &[f64], sched: ErrorSchedule, steps: &[u64], seed: u64) -> Result<Vec<f64>> {
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    // Fixed perturbation directions: reward signs and a target row per pair.
    let mut init = rng::stream(seed, rng::STREAM_INIT);
    let signs: Vec<f64> = (0..ns * na).map(|_| if init.gen::<bool>() { 1.0 } else { -1.0 }).collect();
    let mut dirs = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let p = mdp.row(s, a);
            let mut q: Vec<f64> = (0..ns).map(|_| -(1.0 - init.gen::<f64>()).ln()).collect();
            let z: f64 = q.iter().sum();
            q.iter_mut().for_each(|x| *x /= z);
            let dist: f64 = q.iter().zip(p).map(|(a, b)| (a - b).abs()).sum();
            let d: Vec<f64> =
                if dist > 0.0 { q.iter().zip(p).map(|(a, b)| (a - b) / dist).collect() } else { vec![0.0; ns] };
            dirs.push((d, dist));
        }
    }
    let mut explore = rng::stream(seed, rng::STREAM_EXPLORE);
    let mut env = rng::stream(seed, rng::STREAM_ENV);
    let mut table = QTable::new(ns, na);
    let mut errors = Vec::with_capacity(steps.len());
    let mut next = steps.iter().peekable();
    let mut s = 0;
    let mut row = vec![0.0; ns];
    let n = *steps.last().unwrap_or(&0);
    for t in 1..=n {
        let a = epsilon_greedy(table.row(s), TRACE_EPSILON, &mut explore)?;
        let (er, ep) = sched.at(t);
        let i = s * na + a;
        let (d, dist) = &dirs[i];
        // Keep the moved row inside the simplex.
        let ep = ep.min(*dist);
        for ((o, p), dd) in row.iter_mut().zip(mdp.row(s, a)).zip(d) {
            *o = (p + ep * dd).max(0.0);
        }
        let s_next = inverse_cdf(&row, env.gen());
        table.update(s, a, mdp.r[i] + er * signs[i], Some(s_next), mdp.gamma)?;
        s = s_next;
        if next.peek() == Some(&&t) {
            next.next();
            errors.push(sup_distance(&table.values, q_star));
        }
    }
    Ok(errors)
}

/// Tabular Q-learning with `alpha = 1/n(s,a)` and an epsilon-greedy
/// behavior policy on `mdp` whose sampled reward and transition row at step
/// `t` are pushed by `eps_t` along fixed directions. Errors are measured
/// against the unperturbed optimum and averaged over `seeds`.
pub fn convergence_trace(
    mdp: &SmallMdp,
    sched: ErrorSchedule,
    n_steps: u64,
    seeds: &[u64],
) -> Result<ConvergenceTrace> {
    if sched.beta < 0.0 || sched.c_r < 0.0 || sched.c_p < 0.0 {
        return Err(Error::Invalid("schedule constants must be nonnegative".into()));
    }
    if seeds.is_empty() || n_steps == 0 {
        return Err(Error::Invalid("need at least one seed and one step".into()));
    }
    let q_star = value_iteration(mdp, 1e-10)?;
    let steps = geometric_grid(n_steps);
    let runs: Result<Vec<Vec<f64>>> = seeds.par_iter().map(|&s| run(mdp, &q_star, sched, &steps, s)).collect();
    let runs = runs?;
    let errors: Vec<f64> =
        (0..steps.len()).map(|k| runs.iter().map(|r| r[k]).sum::<f64>() / runs.len() as f64).collect();
    let from = last_decade(&steps);
    let tail = &errors[from..];
    Ok(ConvergenceTrace {
        schedule: sched,
        slope: loglog_slope(&steps, &errors),
        floor: tail.iter().sum::<f64>() / tail.len() as f64,
        floor_bound: simulation_bound(mdp.gamma, mdp.r_max, sched.c_r, sched.c_p),
        steps,
        errors,
    })
}

/// The fixed 3-state, 2-action instance used for rate checks.
pub fn rate_mdp() -> SmallMdp {
    let p = vec![
        0.6, 0.3, 0.1, //
        0.1, 0.6, 0.3, //
        0.3, 0.5, 0.2, //
        0.2, 0.2, 0.6, //
        0.4, 0.1, 0.5, //
        0.5, 0.4, 0.1,
    ];
    let r = vec![0.2, 0.6, 0.9, 0.1, 0.4, 0.7];
    SmallMdp::new(3, 2, p, r, 0.5, 1.0).expect("valid instance")
}
