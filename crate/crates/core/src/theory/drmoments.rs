use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::BoundReport;
use crate::error::{Error, Result};
use crate::rng;

/// Mean of the immediate part; any constant works.
const MU_IMM: f64 = 1.0;

/// One Monte-Carlo setting. `m` is the true mean of the delayed part and the
/// model imputes `m + eps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrCell {
    pub p_mat: f64,
    pub sigma_imm: f64,
    pub sigma_delay: f64,
    pub m: f64,
    pub eps: f64,
}

impl DrCell {
    pub fn bias_bound(&self) -> f64 {
        (1.0 - self.p_mat) * self.eps.abs()
    }

    /// Closed form with the `p (1 - p) m^2` term.
    pub fn stated_variance(&self) -> f64 {
        let p = self.p_mat;
        self.sigma_imm.powi(2) + p * self.sigma_delay.powi(2) + p * (1.0 - p) * self.m * self.m
    }

    /// Direct computation: only the model error, not the level `m`, enters
    /// through the maturation indicator.
    pub fn exact_variance(&self) -> f64 {
        let p = self.p_mat;
        self.sigma_imm.powi(2) + p * self.sigma_delay.powi(2) + p * (1.0 - p) * self.eps * self.eps
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DrMomentReport {
    pub cell: DrCell,
    pub n_samples: usize,
    pub bias: f64,
    pub bias_se: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub bias_pass: bool,
    pub variance_pass: bool,
    pub reports: Vec<BoundReport>,
}

impl DrMomentReport {
    pub fn pass(&self) -> bool {
        self.bias_pass && self.variance_pass
    }

    /// Same sample against another variance formula.
    pub fn variance_matches(&self, closed_form: f64) -> bool {
        (self.variance - closed_form).abs() <= 3.0 * self.variance_se
    }
}

/// Draws DR targets `r_imm + m_hat + 1{matured} (r_del - m_hat)` with the
/// three sources independent and compares bias and variance with their
/// closed forms at three standard errors.
pub fn dr_moment_check(cell: DrCell, n_samples: usize, seed: u64) -> Result<DrMomentReport> {
    if !(0.0..=1.0).contains(&cell.p_mat) || cell.sigma_imm < 0.0 || cell.sigma_delay < 0.0 || n_samples < 2 {
        return Err(Error::Invalid("need p_mat in [0, 1], nonnegative sds and two samples".into()));
    }
    let imm = Normal::new(MU_IMM, cell.sigma_imm).map_err(|e| Error::Invalid(e.to_string()))?;
    let del = Normal::new(cell.m, cell.sigma_delay).map_err(|e| Error::Invalid(e.to_string()))?;
    let m_hat = cell.m + cell.eps;
    let mut rng = rng::stream(seed, rng::STREAM_DATA);
    let y: Vec<f64> = (0..n_samples)
        .map(|_| {
            let a = imm.sample(&mut rng);
            let b = del.sample(&mut rng);
            let matured = rng.gen::<f64>() < cell.p_mat;
            a + m_hat + if matured { b - m_hat } else { 0.0 }
        })
        .collect();
    let n = n_samples as f64;
    let mean = y.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in &y {
        let d2 = (v - mean).powi(2);
        m2 += d2;
        m4 += d2 * d2;
    }
    let variance = m2 / (n - 1.0);
    let m4 = m4 / n;
    let bias = mean - (MU_IMM + cell.m);
    let bias_se = (variance / n).sqrt();
    let variance_se = ((m4 - variance * variance).max(0.0) / n).sqrt();
    let instance =
        format!("p={} s_imm={} s_del={} m={} eps={}", cell.p_mat, cell.sigma_imm, cell.sigma_delay, cell.m, cell.eps);
    let bias_report = BoundReport::new("dr_bias", instance.clone(), bias.abs(), cell.bias_bound() + 3.0 * bias_se);
    let var_report =
        BoundReport::new("dr_variance", instance, (variance - cell.stated_variance()).abs(), 3.0 * variance_se);
    Ok(DrMomentReport {
        cell,
        n_samples,
        bias,
        bias_se,
        variance,
        variance_se,
        bias_pass: bias_report.pass,
        variance_pass: var_report.pass,
        reports: vec![bias_report, var_report],
    })
}

pub const GRID_P_MAT: [f64; 3] = [0.5, 0.85, 1.0];
pub const GRID_SD_RATIO: [f64; 3] = [0.5, 1.0, 2.0];
pub const GRID_M: [f64; 3] = [0.0, 0.5, 1.0];
pub const GRID_EPS: f64 = 0.12;

/// 3x3x3 grid over maturation probability, delay/immediate sd ratio and
/// delayed mean, in units of `sigma_imm = 1`.
pub fn dr_grid() -> Vec<DrCell> {
    let mut cells = Vec::with_capacity(27);
    for &p_mat in &GRID_P_MAT {
        for &ratio in &GRID_SD_RATIO {
            for &m in &GRID_M {
                cells.push(DrCell { p_mat, sigma_imm: 1.0, sigma_delay: ratio, m, eps: GRID_EPS });
            }
        }
    }
    cells
}

pub fn dr_grid_check(n_samples: usize, seed: u64) -> Result<Vec<DrMomentReport>> {
    dr_grid()
        .into_par_iter()
        .enumerate()
        .map(|(i, c)| dr_moment_check(c, n_samples, rng::derive(seed, i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const N: usize = 200_000;

    fn cell(p_mat: f64, m: f64, eps: f64) -> DrCell {
        DrCell { p_mat, sigma_imm: 1.0, sigma_delay: 1.5, m, eps }
    }

    #[test]
    fn all_matured_limit() {
        let r = dr_moment_check(cell(1.0, 0.7, 0.5), N, 1).unwrap();
        assert!(r.bias.abs() <= 3.0 * r.bias_se);
        assert!(r.variance_matches(1.0 + 2.25));
        assert!(r.pass());
    }

    #[test]
    fn imputation_only_limit() {
        let r = dr_moment_check(cell(0.0, 0.7, 0.0), N, 2).unwrap();
        assert!(r.bias.abs() <= 3.0 * r.bias_se);
        assert!(r.variance_matches(1.0));
        assert!(r.pass());
    }

    #[test]
    fn reference_cell_bias() {
        let c = cell(0.85, 0.4, 0.12);
        assert!((c.bias_bound() - 0.018).abs() < 1e-12);
        let r = dr_moment_check(c, N, 3).unwrap();
        assert!(r.bias_pass, "{r:?}");
        assert!((r.bias - 0.018).abs() <= 3.0 * r.bias_se);
    }

    #[test]
    fn centered_delay_matches_stated_form() {
        // With a zero-mean delayed part and the model off by eps, the
        // stated form and the direct one coincide when eps = m.
        let c = DrCell { p_mat: 0.5, sigma_imm: 1.0, sigma_delay: 1.0, m: 0.0, eps: 0.8 };
        let r = dr_moment_check(c, N, 4).unwrap();
        assert!(r.variance_matches(c.exact_variance()));
        assert!(r.variance_matches(DrCell { m: 0.8, ..c }.stated_variance()));
    }

    #[test]
    fn direct_variance_holds_on_grid() {
        let reports = dr_grid_check(N, 5).unwrap();
        let ok = reports.iter().filter(|r| r.variance_matches(r.cell.exact_variance())).count();
        assert!(ok >= 26, "{ok}/27");
        assert!(reports.iter().filter(|r| r.bias_pass).count() >= 26);
    }

    #[test]
    fn stated_variance_misses_when_mean_is_large() {
        let r =
            dr_moment_check(DrCell { p_mat: 0.5, sigma_imm: 1.0, sigma_delay: 1.0, m: 1.0, eps: 0.0 }, N, 6).unwrap();
        assert!(r.variance_matches(r.cell.exact_variance()));
        assert!(!r.variance_pass);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(dr_moment_check(cell(1.2, 0.0, 0.0), 10, 0).is_err());
        assert!(dr_moment_check(DrCell { sigma_imm: -1.0, ..cell(0.5, 0.0, 0.0) }, 10, 0).is_err());
    }
}
