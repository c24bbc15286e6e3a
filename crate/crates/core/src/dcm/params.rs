use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::likelihood::{n_params, probabilities, PRICE_REF};
use crate::behavior::{inverse_cdf, Segment, N_SHOCKS, PRICE_UNIT};
use crate::environment::{shock_revenues, Order, Shock};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const SCHEMA_VERSION: u32 = 1;

/// Agent-side MNL: a booking block over the outside option and room types and
/// a shock block over keep / modify / cancel / no-show.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcmParams {
    pub schema_version: u32,
    pub n_rooms: usize,
    pub feature_dim: usize,
    pub price_ref: f64,
    pub price_unit: f64,
    pub booking: Vec<f64>,
    pub shock: Vec<f64>,
}

impl DcmParams {
    pub fn zeros(n_rooms: usize, feature_dim: usize) -> Self {
        DcmParams {
            schema_version: SCHEMA_VERSION,
            n_rooms,
            feature_dim,
            price_ref: PRICE_REF,
            price_unit: PRICE_UNIT,
            booking: vec![0.0; n_params(n_rooms + 1, feature_dim)],
            shock: vec![0.0; n_params(N_SHOCKS, feature_dim)],
        }
    }

    /// Exact agent parameters implied by an MNL ground-truth segment.
    pub fn from_segment(seg: &Segment, demand_scale: f64, competition_scale: f64) -> Self {
        let d = seg.feature_dim();
        let n = seg.n_rooms();
        let mut p = DcmParams::zeros(n, d);
        let b = &seg.booking;
        let k = d + 2;
        for j in 0..n {
            let slope = b.beta[j] + competition_scale * b.competitor_sensitivity / b.competitor_prices[j];
            let block = &mut p.booking[j * k..(j + 1) * k];
            block[0] = demand_scale * b.alpha[j] + competition_scale * b.competitor_sensitivity - slope * PRICE_REF;
            block[1] = -slope * PRICE_UNIT;
            block[2..].copy_from_slice(&b.gamma[j]);
        }
        let s = &seg.shock;
        for z in 0..N_SHOCKS - 1 {
            let block = &mut p.shock[z * k..(z + 1) * k];
            block[0] = s.asc[z] + s.price[z] * PRICE_REF / PRICE_UNIT;
            block[1] = s.price[z];
            block[2..].copy_from_slice(&s.gamma[z]);
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported schema version {}", self.schema_version)));
        }
        if self.price_ref != PRICE_REF || self.price_unit != PRICE_UNIT {
            return Err(Error::Parse("price normalisation differs from this build".into()));
        }
        if self.booking.len() != n_params(self.n_rooms + 1, self.feature_dim)
            || self.shock.len() != n_params(N_SHOCKS, self.feature_dim)
        {
            return Err(Error::Dimension("parameter blocks do not match n_rooms / feature_dim".into()));
        }
        if self.booking.iter().chain(&self.shock).any(|v| !v.is_finite()) {
            return Err(Error::Parse("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Booking probabilities, outside option first.
    pub fn booking_probabilities(&self, x: &[f64], room_prices: &[f64]) -> Vec<f64> {
        let mut prices = Vec::with_capacity(room_prices.len() + 1);
        prices.push(0.0);
        prices.extend_from_slice(room_prices);
        probabilities(&self.booking, x, &prices)
    }

    pub fn shock_probabilities(&self, x: &[f64], booked_price: f64) -> Vec<f64> {
        probabilities(&self.shock, x, &[booked_price; N_SHOCKS])
    }

    /// `m_theta(order)`: model-expected shock revenue of one order.
    pub fn expected_delayed_reward(&self, order: &Order) -> f64 {
        let probs = self.shock_probabilities(&order.features, order.booked_price);
        probs.iter().zip(shock_revenues(order)).map(|(p, r)| p * r).sum()
    }

    pub fn sample_shock(&self, order: &Order, rng: &mut Rng) -> Shock {
        let probs = self.shock_probabilities(&order.features, order.booked_price);
        Shock::ALL[inverse_cdf(&probs, rng.gen())]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: DcmParams = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::{ChoiceContext, ReferenceWorld};
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn exact_params_reproduce_truth() {
        let w = ReferenceWorld::load();
        let spec = w.mnl();
        for (ds, cs) in [(1.0, 1.0), (0.5, 1.3), (1.5, 0.7)] {
            let p = DcmParams::from_segment(&spec.theta, ds, cs);
            let mut rng = stream(1, 0);
            for _ in 0..200 {
                let x = crate::environment::draw_features(12, &mut rng);
                let prices: Vec<f64> = (0..6).map(|_| rng.gen_range(400.0..950.0)).collect();
                let ctx = ChoiceContext { demand_scale: ds, competition_scale: cs, epoch: 0 };
                let a = spec.choice_probabilities(&x, &prices, &ctx).unwrap();
                let b = p.booking_probabilities(&x, &prices);
                for (u, v) in a.iter().zip(&b) {
                    assert!((u - v).abs() < 1e-12);
                }
                let a = spec.shock_probabilities(&x, prices[0], 0).unwrap();
                let b = p.shock_probabilities(&x, prices[0]);
                for (u, v) in a.iter().zip(&b) {
                    assert!((u - v).abs() < 1e-12);
                }
            }
        }
    }

    fn order(price: f64, delta: f64) -> Order {
        Order::new(0, vec![0.5; 12], 1, price, delta, 0, 3)
    }

    #[test]
    fn expected_reward_cases() {
        let mut p = DcmParams::zeros(6, 12);
        assert!((p.expected_delayed_reward(&order(450.0, 10.0)) - (10.0 - 450.0) / 4.0).abs() < 1e-12);
        // Keep dominates.
        for z in 0..3 {
            p.shock[z * 14] = -60.0;
        }
        assert!(p.expected_delayed_reward(&order(450.0, 10.0)).abs() < 1e-20);
    }

    #[test]
    fn expected_reward_matches_monte_carlo() {
        let w = ReferenceWorld::load();
        let p = DcmParams::from_segment(&w.segment(), 1.0, 1.0);
        let mut rng = stream(2, 0);
        let o = Order::new(0, crate::environment::draw_features(12, &mut rng), 2, 720.0, -48.0, 0, 5);
        let m = p.expected_delayed_reward(&o);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| shock_revenues(&o)[p.sample_shock(&o, &mut rng).index()]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - m).abs() <= 3.0 * (var / n as f64).sqrt(), "{mean} vs {m}");
    }

    #[test]
    fn json_round_trip_and_schema_check() {
        let p = DcmParams::from_segment(&ReferenceWorld::load().segment(), 1.0, 1.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("theta.json");
        p.save(&path).unwrap();
        assert_eq!(DcmParams::load(&path).unwrap(), p);
        let mut bad = p.clone();
        bad.schema_version = 99;
        bad.save(&path).unwrap();
        assert!(DcmParams::load(&path).is_err());
    }

    proptest! {
        #[test]
        fn expectation_within_revenue_range(price in 400.0f64..950.0, frac in -0.15f64..0.15, s in any::<u64>()) {
            let p = DcmParams::from_segment(&ReferenceWorld::load().segment(), 1.0, 1.0);
            let mut rng = stream(s, 0);
            let o = Order::new(0, crate::environment::draw_features(12, &mut rng), 1, price, frac * price, 0, 1);
            let m = p.expected_delayed_reward(&o);
            prop_assert!(m >= -price - 1e-9 && m <= 0.15 * price + 1e-9);
        }
    }
}
