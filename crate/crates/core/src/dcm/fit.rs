use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::identifiability::{design_rank, ID3, ID4};
use super::likelihood::{derivatives, log_likelihood, ChoiceData};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub init: Option<Vec<f64>>,
    pub tol: f64,
    pub max_iter: usize,
    /// Box half-width for every coordinate.
    pub bound: f64,
    /// Proceed past failed rank/count prechecks.
    pub allow_unidentified: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { init: None, tol: 1e-8, max_iter: 200, bound: 10.0, allow_unidentified: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub log_likelihood: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Ratio of extreme eigenvalues of the negative Hessian at exit.
    pub condition_estimate: f64,
    pub converged: bool,
    pub hit_bound: bool,
    pub newton_fallbacks: usize,
    pub prechecks_overridden: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton ascent with Armijo backtracking inside the box.
pub fn fit_mle(data: &ChoiceData, opts: &FitOptions) -> Result<(Vec<f64>, FitReport)> {
    let p = data.n_params();
    let mut overridden = false;
    if let Some(j) = data.counts().iter().position(|c| *c == 0) {
        if !opts.allow_unidentified {
            return Err(Error::Identifiability {
                condition: ID4.into(),
                detail: format!("alternative {j} is never chosen"),
            });
        }
        overridden = true;
    }
    let (rank, needed) = design_rank(data);
    if rank < needed {
        if !opts.allow_unidentified {
            return Err(Error::Identifiability {
                condition: ID3.into(),
                detail: format!("design rank {rank} < {needed}"),
            });
        }
        overridden = true;
    }

    let mut theta = match &opts.init {
        Some(t) => {
            data.check_theta(t)?;
            t.iter().map(|v| v.clamp(-opts.bound, opts.bound)).collect()
        }
        None => vec![0.0; p],
    };
    let (mut ll, mut g, mut h) = derivatives(&theta, data, true)?;
    let mut iterations = 0;
    let mut fallbacks = 0;
    let mut hit_bound = false;

    while inf_norm(&g) > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let neg_h = -h.take().expect("hessian");
        let gv = DVector::from_column_slice(&g);
        let dir = match neg_h.clone().cholesky() {
            Some(ch) => ch.solve(&gv),
            None => {
                fallbacks += 1;
                let scale = neg_h.diagonal().amax().max(1.0);
                &gv / scale
            }
        };
        let slope = gv.dot(&dir);
        let mut step = 1.0;
        let mut accepted = None;
        if slope <= 1e-10 * ll.abs().max(1.0) {
            // Objective changes are below rounding here; judge the full
            // Newton step by the gradient instead.
            let cand: Vec<f64> =
                theta.iter().zip(dir.iter()).map(|(t, d)| (t + d).clamp(-opts.bound, opts.bound)).collect();
            let cg = super::likelihood::score(&cand, data)?;
            if inf_norm(&cg) < inf_norm(&g) {
                accepted = Some(cand);
            }
        }
        for _ in 0..60 {
            if accepted.is_some() {
                break;
            }
            let cand: Vec<f64> =
                theta.iter().zip(dir.iter()).map(|(t, d)| (t + step * d).clamp(-opts.bound, opts.bound)).collect();
            let cll = log_likelihood(&cand, data)?;
            if cll >= ll + 1e-4 * step * slope.max(0.0) {
                accepted = Some(cand);
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some(next) => {
                hit_bound |= next.iter().any(|v| v.abs() >= opts.bound);
                theta = next;
                let d = derivatives(&theta, data, true)?;
                ll = d.0;
                g = d.1;
                h = d.2;
            }
            None => {
                h = Some(-neg_h);
                break;
            }
        }
    }
    let grad_norm = inf_norm(&g);
    let neg_h: DMatrix<f64> = -h.expect("hessian");
    let eig = neg_h.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let condition_estimate = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    Ok((
        theta,
        FitReport {
            log_likelihood: ll,
            iterations,
            grad_norm,
            condition_estimate,
            converged: grad_norm <= opts.tol,
            hit_bound,
            newton_fallbacks: fallbacks,
            prechecks_overridden: overridden,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcm::likelihood::{score, ChoiceObs};
    use crate::rng::stream;
    use rand::Rng as _;

    /// Draws choices from a known MNL.
    fn simulate(theta: &[f64], n: usize, n_alt: usize, dim: usize, seed: u64) -> ChoiceData {
        let mut rng = stream(seed, 0);
        let mut d = ChoiceData::new(n_alt, dim);
        for _ in 0..n {
            let features: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut prices = vec![0.0];
            prices.extend((1..n_alt).map(|_| rng.gen_range(525.0..725.0)));
            let probs = crate::dcm::probabilities(theta, &features, &prices);
            let chosen = crate::behavior::inverse_cdf(&probs, rng.gen());
            d.push(ChoiceObs { features, prices, chosen }).unwrap();
        }
        d
    }

    #[test]
    fn null_model_recovered() {
        // Binary choice with one covariate: every coefficient has standard
        // error near 0.035 at this size, so 0.1 is about three of them.
        let d = simulate(&[0.0; 3], 10_000, 2, 1, 1);
        let (th, rep) = fit_mle(&d, &FitOptions::default()).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!(inf_norm(&th) <= 0.1, "{th:?}");
        let g = score(&th, &d).unwrap();
        assert!(inf_norm(&g) <= 1e-8);
    }

    #[test]
    fn initialization_independent() {
        let truth = [0.5, -0.3, 0.2, 1.0, -0.1, -0.4, -0.2, 0.1, 0.8];
        let d = simulate(&truth, 4000, 4, 1, 2);
        let mut rng = stream(3, 0);
        let mut lls = vec![];
        for _ in 0..2 {
            let init: Vec<f64> = (0..9).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (_, rep) = fit_mle(&d, &FitOptions { init: Some(init), ..Default::default() }).unwrap();
            assert!(rep.converged, "{rep:?}");
            lls.push(rep.log_likelihood);
        }
        assert!((lls[0] - lls[1]).abs() <= 1e-6);
    }

    #[test]
    fn never_chosen_alternative_cites_id4() {
        let mut d = simulate(&[0.0; 12], 500, 4, 2, 4);
        d.obs.retain(|o| o.chosen != 3);
        match fit_mle(&d, &FitOptions::default()) {
            Err(Error::Identifiability { condition, detail }) => {
                assert_eq!(condition, "ID4");
                assert!(detail.contains('3'));
            }
            other => panic!("{other:?}"),
        }
        let (_, rep) =
            fit_mle(&d, &FitOptions { allow_unidentified: true, max_iter: 50, ..Default::default() }).unwrap();
        assert!(rep.prechecks_overridden);
        assert!(rep.hit_bound || !rep.converged);
    }

    #[test]
    fn log_likelihood_never_decreases() {
        let truth = [1.0, -0.5, 0.3, 0.2, 0.1, -0.6];
        let d = simulate(&truth, 2000, 3, 1, 5);
        let mut prev = f64::NEG_INFINITY;
        for it in 0..8 {
            let (_, rep) = fit_mle(&d, &FitOptions { max_iter: it, ..Default::default() }).unwrap();
            // Final polishing steps may move the objective by rounding error.
            assert!(rep.log_likelihood >= prev - 1e-9 * prev.abs().min(1e12));
            prev = rep.log_likelihood;
        }
    }
}
