use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::fisher::fisher_information;
use super::fit::{fit_mle, FitOptions};
use super::likelihood::{feature_map, probabilities, ChoiceData};
use crate::error::Result;

pub const ID1: &str = "ID1";
pub const ID2: &str = "ID2";
pub const ID3: &str = "ID3";
pub const ID4: &str = "ID4";
pub const ID5: &str = "ID5";
pub const ID6: &str = "ID6";
pub const ID7: &str = "ID7";

/// Probability floor reported for ID5.
pub const EPS0: f64 = 0.001;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub id: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub conditions: Vec<Condition>,
    pub design_rank: usize,
    pub required_rank: usize,
    pub counts: Vec<usize>,
    pub min_count: usize,
    pub prob_min: f64,
    pub prob_max: f64,
    pub fisher_min_eigenvalue: f64,
}

impl IdentifiabilityReport {
    pub fn get(&self, id: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.id == id)
    }

    /// ID5 is informational and does not gate the overall verdict.
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().filter(|c| c.id != ID5).all(|c| c.passed)
    }
}

fn gram_rank(g: &DMatrix<f64>) -> usize {
    let eig = g.clone().symmetric_eigenvalues();
    let top = eig.amax();
    if top <= 0.0 {
        return 0;
    }
    eig.iter().filter(|e| **e > top * 1e-10).count()
}

/// Smallest rank over alternatives of the stacked `phi_j` design, and the rank
/// needed for a unique maximiser.
pub fn design_rank(data: &ChoiceData) -> (usize, usize) {
    let k = data.dim + 2;
    if data.n_alt < 2 {
        return (k, k);
    }
    let mut phi = vec![0.0; k];
    let mut min_rank = k;
    for j in 1..data.n_alt {
        let mut g = DMatrix::<f64>::zeros(k, k);
        for o in &data.obs {
            feature_map(&o.features, o.prices[j], &mut phi);
            for a in 0..k {
                for b in 0..k {
                    g[(a, b)] += phi[a] * phi[b];
                }
            }
        }
        min_rank = min_rank.min(gram_rank(&g));
    }
    (min_rank, k)
}

fn price_varies(data: &ChoiceData, j: usize) -> bool {
    let mut it = data.obs.iter().map(|o| o.prices[j]);
    match it.next() {
        Some(first) => it.any(|p| (p - first).abs() > 1e-9),
        None => false,
    }
}

fn cond(id: &str, name: &str, passed: bool, detail: String) -> Condition {
    Condition { id: id.into(), name: name.into(), passed, detail }
}

pub fn check_identifiability(data: &ChoiceData, theta_hat: &[f64], bound: f64) -> Result<IdentifiabilityReport> {
    data.check_theta(theta_hat)?;
    let mut conditions = Vec::with_capacity(7);
    conditions.push(cond(ID1, "normalization", true, "alternative 0 carries no parameters".into()));

    let fixed: Vec<usize> = (1..data.n_alt).filter(|&j| !price_varies(data, j)).collect();
    conditions.push(cond(
        ID2,
        "alternative-specific prices",
        fixed.is_empty(),
        if fixed.is_empty() {
            "every alternative has its own price coefficient and observed price variation".into()
        } else {
            format!("no price variation for alternatives {fixed:?}")
        },
    ));

    let (rank, needed) = design_rank(data);
    conditions.push(cond(ID3, "covariate variation", rank == needed, format!("design rank {rank} of {needed}")));

    let counts = data.counts();
    let min_count = counts.iter().copied().min().unwrap_or(0);
    let never: Vec<usize> = counts.iter().enumerate().filter(|(_, c)| **c == 0).map(|(j, _)| j).collect();
    conditions.push(cond(
        ID4,
        "outcome variation",
        never.is_empty(),
        if never.is_empty() { format!("min count {min_count}") } else { format!("never chosen: {never:?}") },
    ));

    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for o in &data.obs {
        for p in probabilities(theta_hat, &o.features, &o.prices) {
            lo = lo.min(p);
            hi = hi.max(p);
        }
    }
    if data.is_empty() {
        lo = f64::NAN;
        hi = f64::NAN;
    }
    conditions.push(cond(
        ID5,
        "bounded probabilities",
        lo >= EPS0 && hi <= 1.0 - EPS0,
        format!("{lo:.4} <= P_hat <= {hi:.4} (floor {EPS0})"),
    ));

    let max_abs = theta_hat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    conditions.push(cond(
        ID6,
        "compactness",
        max_abs < bound,
        format!("max |theta| = {max_abs:.4} inside [-{bound}, {bound}]"),
    ));

    let fisher = fisher_information(theta_hat, data)?;
    conditions.push(cond(
        ID7,
        "full-rank Fisher information",
        fisher.positive_definite,
        format!("min eigenvalue {:.3e}", fisher.min_eigenvalue),
    ));

    Ok(IdentifiabilityReport {
        conditions,
        design_rank: rank,
        required_rank: needed,
        counts,
        min_count,
        prob_min: lo,
        prob_max: hi,
        fisher_min_eigenvalue: fisher.min_eigenvalue,
    })
}

/// Fits (overriding prechecks) and audits the result.
pub fn audit(data: &ChoiceData) -> Result<IdentifiabilityReport> {
    let opts = FitOptions { allow_unidentified: true, ..Default::default() };
    let (theta, _) = fit_mle(data, &opts)?;
    check_identifiability(data, &theta, opts.bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcm::likelihood::ChoiceObs;
    use crate::rng::stream;
    use rand::Rng as _;

    fn data(collinear: bool) -> ChoiceData {
        let mut rng = stream(12, 0);
        let mut d = ChoiceData::new(3, 2);
        for _ in 0..600 {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let b = if collinear { 2.0 * a } else { rng.gen_range(-1.0..1.0) };
            let prices = vec![0.0, rng.gen_range(500.0..700.0), rng.gen_range(500.0..700.0)];
            d.push(ChoiceObs { features: vec![a, b], prices, chosen: rng.gen_range(0..3) }).unwrap();
        }
        d
    }

    #[test]
    fn rank_deficiency_flags_id3_and_id7() {
        let d = data(true);
        assert_eq!(design_rank(&d), (3, 4));
        let r = check_identifiability(&d, &vec![0.0; d.n_params()], 10.0).unwrap();
        assert!(!r.get(ID3).unwrap().passed);
        assert!(!r.get(ID7).unwrap().passed);
        assert!(r.fisher_min_eigenvalue <= 1e-8);
        assert_eq!(r.conditions.len(), 7);
    }

    #[test]
    fn well_posed_data_passes() {
        let d = data(false);
        let r = audit(&d).unwrap();
        assert!(r.all_pass(), "{r:?}");
        assert!(r.get(ID1).unwrap().passed);
    }

    #[test]
    fn constant_price_flags_id2() {
        let mut d = data(false);
        for o in &mut d.obs {
            o.prices[2] = 600.0;
        }
        let r = check_identifiability(&d, &vec![0.0; d.n_params()], 10.0).unwrap();
        assert!(!r.get(ID2).unwrap().passed);
    }
}
