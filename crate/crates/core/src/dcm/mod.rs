//! Agent-side multinomial logit.
//!
//! Booking and shock blocks are independent MNL problems fitted by damped
//! Newton. [`DcmParams`] bundles both and supplies the imputation function
//! `m_theta` used by the learners.

mod data;
mod fisher;
mod fit;
mod identifiability;
mod likelihood;
mod params;

pub use data::{generate_dataset, read_dataset_csv, write_dataset_csv, DcmDataset};
pub use fisher::{fisher_information, FisherInfo, PD_THRESHOLD};
pub use fit::{fit_mle, FitOptions, FitReport};
pub use identifiability::{
    audit, check_identifiability, design_rank, Condition, IdentifiabilityReport, EPS0, ID1, ID2, ID3, ID4, ID5, ID6,
    ID7,
};
pub use likelihood::{
    derivatives, hessian, log_likelihood, n_params, probabilities, score, utilities, ChoiceData, ChoiceObs, PRICE_REF,
};
pub use params::{DcmParams, SCHEMA_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub booking: FitReport,
    pub shock: FitReport,
}

/// Fits both blocks and assembles the parameter file.
pub fn calibrate(data: &DcmDataset, n_rooms: usize, opts: &FitOptions) -> Result<(DcmParams, CalibrationReport)> {
    let (booking, rb) = fit_mle(&data.booking, opts)?;
    let (shock, rs) = fit_mle(&data.shock, opts)?;
    let mut p = DcmParams::zeros(n_rooms, data.booking.dim);
    p.booking = booking;
    p.shock = shock;
    p.validate()?;
    Ok((p, CalibrationReport { booking: rb, shock: rs }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::ReferenceWorld;
    use crate::environment::EnvConfig;

    #[test]
    fn reference_world_audit_passes() {
        let w = ReferenceWorld::load();
        let data = generate_dataset(&w.mnl(), &EnvConfig::default(), 10_000, 1).unwrap();
        for block in [&data.booking, &data.shock] {
            let r = audit(block).unwrap();
            assert!(r.conditions.iter().all(|c| c.passed), "{r:#?}");
        }
    }

    #[test]
    fn calibration_recovers_reference_world() {
        let w = ReferenceWorld::load();
        let data = generate_dataset(&w.mnl(), &EnvConfig::default(), 50_000, 2).unwrap();
        let (p, rep) = calibrate(&data, 6, &FitOptions::default()).unwrap();
        assert!(rep.booking.converged && rep.shock.converged, "{rep:?}");
        let truth = DcmParams::from_segment(&w.segment(), 1.0, 1.0);
        let err: f64 = p.booking.iter().zip(&truth.booking).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = truth.booking.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err < 0.25 * norm, "err {err} norm {norm}");
        let g = score(&p.booking, &data.booking).unwrap();
        assert!(g.iter().all(|v| v.abs() <= 1e-8));
    }
}
