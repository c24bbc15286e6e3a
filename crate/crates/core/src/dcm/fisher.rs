use nalgebra::DMatrix;

use super::likelihood::{hessian, ChoiceData};
use crate::error::Result;

/// Eigenvalue threshold for the positive-definite flag.
pub const PD_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct FisherInfo {
    pub matrix: DMatrix<f64>,
    pub min_eigenvalue: f64,
    pub positive_definite: bool,
}

/// Sample Fisher information `-H / N`.
pub fn fisher_information(theta: &[f64], data: &ChoiceData) -> Result<FisherInfo> {
    let h = hessian(theta, data)?;
    let n = data.len().max(1) as f64;
    let matrix = -h / n;
    let min_eigenvalue = if matrix.nrows() == 0 { 0.0 } else { matrix.clone().symmetric_eigenvalues().min() };
    Ok(FisherInfo { matrix, min_eigenvalue, positive_definite: min_eigenvalue > PD_THRESHOLD })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcm::likelihood::ChoiceObs;
    use crate::rng::stream;
    use rand::Rng as _;

    #[test]
    fn equals_scaled_negative_hessian() {
        let mut rng = stream(21, 0);
        let mut d = ChoiceData::new(3, 2);
        for _ in 0..50 {
            let prices = vec![0.0, rng.gen_range(500.0..700.0), rng.gen_range(500.0..700.0)];
            let features = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            d.push(ChoiceObs { features, prices, chosen: rng.gen_range(0..3) }).unwrap();
        }
        let th: Vec<f64> = (0..8).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let f = fisher_information(&th, &d).unwrap();
        let h = hessian(&th, &d).unwrap();
        assert_eq!(f.matrix, -h / 50.0);
        assert!(f.positive_definite);
    }

    #[test]
    fn duplicated_column_is_singular() {
        let mut rng = stream(22, 0);
        let mut d = ChoiceData::new(3, 2);
        for _ in 0..80 {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let prices = vec![0.0, rng.gen_range(500.0..700.0), rng.gen_range(500.0..700.0)];
            d.push(ChoiceObs { features: vec![a, a], prices, chosen: rng.gen_range(0..3) }).unwrap();
        }
        let f = fisher_information(&vec![0.1; 8], &d).unwrap();
        assert!(f.min_eigenvalue <= PD_THRESHOLD);
        assert!(!f.positive_definite);
    }
}
