//! MNL log-likelihood with analytic score and Hessian.
//!
//! Alternative `j >= 1` has feature map `phi_j = (1, (p_j - PRICE_REF) / PRICE_UNIT, x)` and
//! its own coefficient block of length `d + 2`; alternative 0 is pinned at zero
//! utility. Blocks are laid out consecutively for `j = 1..J`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::behavior::{log_sum_exp, softmax, PRICE_UNIT};
use crate::error::{Error, Result};

/// Centre of the price feature; keeps intercepts and price slopes from being
/// nearly collinear.
pub const PRICE_REF: f64 = 625.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceObs {
    pub features: Vec<f64>,
    /// One price per alternative; entry 0 (the reference) is ignored.
    pub prices: Vec<f64>,
    pub chosen: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceData {
    pub n_alt: usize,
    pub dim: usize,
    pub obs: Vec<ChoiceObs>,
}

pub fn n_params(n_alt: usize, dim: usize) -> usize {
    (n_alt - 1) * (dim + 2)
}

impl ChoiceData {
    pub fn new(n_alt: usize, dim: usize) -> Self {
        ChoiceData { n_alt, dim, obs: Vec::new() }
    }

    pub fn push(&mut self, obs: ChoiceObs) -> Result<()> {
        if obs.features.len() != self.dim || obs.prices.len() != self.n_alt {
            return Err(Error::Dimension(format!(
                "observation has {} features and {} prices, expected {} and {}",
                obs.features.len(),
                obs.prices.len(),
                self.dim,
                self.n_alt
            )));
        }
        if obs.chosen >= self.n_alt {
            return Err(Error::Index(format!("chosen index {} >= {}", obs.chosen, self.n_alt)));
        }
        self.obs.push(obs);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn n_params(&self) -> usize {
        n_params(self.n_alt, self.dim)
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_alt];
        for o in &self.obs {
            c[o.chosen] += 1;
        }
        c
    }

    pub(crate) fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::Dimension(format!("theta has {} entries, expected {}", theta.len(), self.n_params())));
        }
        Ok(())
    }
}

/// Writes `phi_j` for alternative `j >= 1` into `out`.
#[inline]
pub(crate) fn feature_map(x: &[f64], price: f64, out: &mut [f64]) {
    out[0] = 1.0;
    out[1] = (price - PRICE_REF) / PRICE_UNIT;
    out[2..].copy_from_slice(x);
}

pub fn utilities(theta: &[f64], x: &[f64], prices: &[f64]) -> Vec<f64> {
    let k = x.len() + 2;
    let mut v = Vec::with_capacity(prices.len());
    v.push(0.0);
    for j in 1..prices.len() {
        let b = &theta[(j - 1) * k..j * k];
        let mut u = b[0] + b[1] * (prices[j] - PRICE_REF) / PRICE_UNIT;
        for (w, xi) in b[2..].iter().zip(x) {
            u += w * xi;
        }
        v.push(u);
    }
    v
}

pub fn probabilities(theta: &[f64], x: &[f64], prices: &[f64]) -> Vec<f64> {
    softmax(&utilities(theta, x, prices))
}

const CHUNK: usize = 1024;

/// Sums per-chunk partial results in a fixed order so parallel evaluation is
/// reproducible bit for bit.
fn chunked<T: Send, F>(data: &ChoiceData, f: F) -> Vec<T>
where
    F: Fn(&[ChoiceObs]) -> T + Sync + Send,
{
    data.obs.par_chunks(CHUNK).map(f).collect()
}

pub fn log_likelihood(theta: &[f64], data: &ChoiceData) -> Result<f64> {
    data.check_theta(theta)?;
    let parts = chunked(data, |rows| {
        rows.iter()
            .map(|o| {
                let v = utilities(theta, &o.features, &o.prices);
                v[o.chosen] - log_sum_exp(&v)
            })
            .sum::<f64>()
    });
    Ok(parts.into_iter().sum())
}

pub fn score(theta: &[f64], data: &ChoiceData) -> Result<Vec<f64>> {
    data.check_theta(theta)?;
    let p = data.n_params();
    let k = data.dim + 2;
    let parts = chunked(data, |rows| {
        let mut g = vec![0.0; p];
        let mut phi = vec![0.0; k];
        for o in rows {
            let probs = probabilities(theta, &o.features, &o.prices);
            for j in 1..data.n_alt {
                feature_map(&o.features, o.prices[j], &mut phi);
                let w = f64::from(u8::from(o.chosen == j)) - probs[j];
                for (gi, f) in g[(j - 1) * k..j * k].iter_mut().zip(&phi) {
                    *gi += w * f;
                }
            }
        }
        g
    });
    let mut g = vec![0.0; p];
    for part in parts {
        for (a, b) in g.iter_mut().zip(part) {
            *a += b;
        }
    }
    Ok(g)
}

/// Log-likelihood, score and (optionally) Hessian in one pass.
pub fn derivatives(
    theta: &[f64],
    data: &ChoiceData,
    with_hessian: bool,
) -> Result<(f64, Vec<f64>, Option<DMatrix<f64>>)> {
    data.check_theta(theta)?;
    let p = data.n_params();
    let k = data.dim + 2;
    let parts = chunked(data, |rows| {
        let mut ll = 0.0;
        let mut g = vec![0.0; p];
        let mut h = if with_hessian { vec![0.0; p * p] } else { Vec::new() };
        let mut u = vec![0.0; p];
        let mut phi = vec![0.0; k];
        for o in rows {
            let v = utilities(theta, &o.features, &o.prices);
            let lse = log_sum_exp(&v);
            ll += v[o.chosen] - lse;
            for j in 1..data.n_alt {
                let pj = (v[j] - lse).exp();
                feature_map(&o.features, o.prices[j], &mut phi);
                let w = f64::from(u8::from(o.chosen == j)) - pj;
                let base = (j - 1) * k;
                for a in 0..k {
                    g[base + a] += w * phi[a];
                    u[base + a] = pj * phi[a];
                }
                if with_hessian {
                    for a in 0..k {
                        let row = (base + a) * p + base;
                        for b in 0..k {
                            h[row + b] -= pj * phi[a] * phi[b];
                        }
                    }
                }
            }
            if with_hessian {
                for r in 0..p {
                    let ur = u[r];
                    if ur == 0.0 {
                        continue;
                    }
                    let row = &mut h[r * p..(r + 1) * p];
                    for (c, uc) in row.iter_mut().zip(&u) {
                        *c += ur * uc;
                    }
                }
            }
        }
        (ll, g, h)
    });
    let mut ll = 0.0;
    let mut g = vec![0.0; p];
    let mut h = if with_hessian { vec![0.0; p * p] } else { Vec::new() };
    for (l, gp, hp) in parts {
        ll += l;
        for (a, b) in g.iter_mut().zip(gp) {
            *a += b;
        }
        for (a, b) in h.iter_mut().zip(hp) {
            *a += b;
        }
    }
    let hm = with_hessian.then(|| DMatrix::from_row_slice(p, p, &h));
    Ok((ll, g, hm))
}

pub fn hessian(theta: &[f64], data: &ChoiceData) -> Result<DMatrix<f64>> {
    Ok(derivatives(theta, data, true)?.2.expect("hessian requested"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng as _;

    pub(crate) fn random_data(seed: u64, n: usize, n_alt: usize, dim: usize) -> ChoiceData {
        let mut rng = stream(seed, 0);
        let mut d = ChoiceData::new(n_alt, dim);
        for _ in 0..n {
            let features: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut prices = vec![0.0];
            prices.extend((1..n_alt).map(|_| rng.gen_range(300.0..900.0)));
            let chosen = rng.gen_range(0..n_alt);
            d.push(ChoiceObs { features, prices, chosen }).unwrap();
        }
        d
    }

    fn random_theta(seed: u64, p: usize, scale: f64) -> Vec<f64> {
        let mut rng = stream(seed, 1);
        (0..p).map(|_| rng.gen_range(-scale..scale)).collect()
    }

    #[test]
    fn uniform_model_and_empty_data() {
        let d = random_data(1, 37, 5, 3);
        let ll = log_likelihood(&vec![0.0; d.n_params()], &d).unwrap();
        assert!((ll + 37.0 * 5f64.ln()).abs() < 1e-10);
        let e = ChoiceData::new(5, 3);
        let th = random_theta(2, e.n_params(), 1.0);
        assert_eq!(log_likelihood(&th, &e).unwrap(), 0.0);
        assert!(hessian(&th, &e).unwrap().iter().all(|v| *v == 0.0));
        assert!(log_likelihood(&th[1..], &e).is_err());
    }

    #[test]
    fn hand_dataset_row_by_row() {
        // Three alternatives, one covariate; oracle written out term by term.
        let rows = [
            (0.5, [0.0, 400.0, 600.0], 1usize),
            (-1.0, [0.0, 500.0, 550.0], 2),
            (0.0, [0.0, 450.0, 800.0], 0),
            (2.0, [0.0, 700.0, 300.0], 2),
            (1.5, [0.0, 350.0, 650.0], 1),
        ];
        let theta = [0.3, -0.2, 0.7, -0.1, 0.05, -0.4];
        let mut d = ChoiceData::new(3, 1);
        let mut oracle = 0.0;
        for (x, p, c) in rows {
            d.push(ChoiceObs { features: vec![x], prices: p.to_vec(), chosen: c }).unwrap();
            let v1 = 0.3 - 0.2 * (p[1] - 625.0) / 100.0 + 0.7 * x;
            let v2 = -0.1 + 0.05 * (p[2] - 625.0) / 100.0 - 0.4 * x;
            let v = [0.0, v1, v2];
            let denom = 1.0 + v1.exp() + v2.exp();
            oracle += (v[c].exp() / denom).ln();
        }
        assert!((log_likelihood(&theta, &d).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn single_reference_choice_score() {
        let mut d = ChoiceData::new(4, 2);
        let x = vec![0.4, -0.3];
        let prices = vec![0.0, 500.0, 600.0, 700.0];
        d.push(ChoiceObs { features: x.clone(), prices: prices.clone(), chosen: 0 }).unwrap();
        let g = score(&vec![0.0; d.n_params()], &d).unwrap();
        for j in 1..4 {
            let phi = [1.0, (prices[j] - 625.0) / 100.0, x[0], x[1]];
            for a in 0..4 {
                assert!((g[(j - 1) * 4 + a] + phi[a] / 4.0).abs() < 1e-15);
            }
        }
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn score_matches_central_differences() {
        for case in 0..20u64 {
            let d = random_data(100 + case, 40, 4, 3);
            let th = random_theta(200 + case, d.n_params(), 0.8);
            let g = score(&th, &d).unwrap();
            let h = 1e-6;
            for i in 0..th.len() {
                let mut a = th.clone();
                let mut b = th.clone();
                a[i] += h;
                b[i] -= h;
                let fd = (log_likelihood(&a, &d).unwrap() - log_likelihood(&b, &d).unwrap()) / (2.0 * h);
                assert!(rel_close(g[i], fd, 1e-5), "case {case} i {i}: {} vs {fd}", g[i]);
            }
        }
    }

    #[test]
    fn hessian_matches_score_differences() {
        for case in 0..10u64 {
            let d = random_data(300 + case, 30, 3, 2);
            let th = random_theta(400 + case, d.n_params(), 0.8);
            let hm = hessian(&th, &d).unwrap();
            let h = 1e-6;
            for i in 0..th.len() {
                let mut a = th.clone();
                let mut b = th.clone();
                a[i] += h;
                b[i] -= h;
                let ga = score(&a, &d).unwrap();
                let gb = score(&b, &d).unwrap();
                for r in 0..th.len() {
                    let fd = (ga[r] - gb[r]) / (2.0 * h);
                    assert!(rel_close(hm[(r, i)], fd, 1e-4), "{} vs {fd}", hm[(r, i)]);
                }
            }
        }
    }

    #[test]
    fn derivatives_agree_with_separate_calls() {
        let d = random_data(9, 3000, 5, 4);
        let th = random_theta(10, d.n_params(), 0.5);
        let (ll, g, _) = derivatives(&th, &d, false).unwrap();
        assert_eq!(ll, log_likelihood(&th, &d).unwrap());
        let g2 = score(&th, &d).unwrap();
        for (a, b) in g.iter().zip(g2) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn hessian_negative_semidefinite(seed in any::<u64>()) {
            let d = random_data(seed, 25, 4, 2);
            let th = random_theta(seed ^ 1, d.n_params(), 2.0);
            let eig = hessian(&th, &d).unwrap().symmetric_eigenvalues();
            prop_assert!(eig.max() <= 1e-10);
        }

        #[test]
        fn log_likelihood_concave(seed in any::<u64>(), t in 0.0f64..1.0) {
            let d = random_data(seed, 30, 3, 2);
            let a = random_theta(seed ^ 2, d.n_params(), 3.0);
            let b = random_theta(seed ^ 3, d.n_params(), 3.0);
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
            let lhs = log_likelihood(&mid, &d).unwrap();
            let rhs = t * log_likelihood(&a, &d).unwrap() + (1.0 - t) * log_likelihood(&b, &d).unwrap();
            prop_assert!(lhs >= rhs - 1e-9);
        }
    }
}
