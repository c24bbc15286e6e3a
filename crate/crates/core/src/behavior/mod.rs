//! Ground-truth customer behavior.
//!
//! A [`BehaviorSpec`] pairs a parameter segment with a family. Booking choices
//! are over the outside option (index 0) and the room types `1..=n_rooms`;
//! shock outcomes are over keep / modify / cancel / no-show with keep as the
//! zero-utility reference.

mod choice;
mod reference;

pub use choice::{inverse_cdf, log_sum_exp, nested_logit, sample_outcome, softmax, validate_simplex};
pub use reference::{ReferenceWorld, SegmentShift};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_SHOCKS: usize = 4;

/// Dollars per unit of the price feature seen by choice models.
pub const PRICE_UNIT: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BookingParams {
    pub alpha: Vec<f64>,
    /// Price sensitivity per dollar; enters utility with a negative sign.
    pub beta: Vec<f64>,
    pub competitor_prices: Vec<f64>,
    pub competitor_sensitivity: f64,
    pub gamma: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShockParams {
    /// Intercepts for modify, cancel, no-show.
    pub asc: Vec<f64>,
    /// Coefficients on booked price in units of [`PRICE_UNIT`].
    pub price: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub booking: BookingParams,
    pub shock: ShockParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    Mnl,
    NestedLogit { nests: Vec<Vec<usize>>, lambdas: Vec<f64> },
    BimodalMixture { weights: [f64; 2], second: Segment },
    DynamicMixture { period: f64, second: Segment },
    QuadraticMnl { beta2: f64, reference_price: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorSpec {
    /// Parameters of the (first) segment.
    pub theta: Segment,
    pub family: Family,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChoiceContext {
    pub demand_scale: f64,
    pub competition_scale: f64,
    pub epoch: usize,
}

impl Default for ChoiceContext {
    fn default() -> Self {
        Self { demand_scale: 1.0, competition_scale: 1.0, epoch: 0 }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Segment {
    pub fn n_rooms(&self) -> usize {
        self.booking.alpha.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.booking.gamma.first().map_or(0, Vec::len)
    }

    pub fn zeros(n_rooms: usize, dim: usize) -> Self {
        Segment {
            booking: BookingParams {
                alpha: vec![0.0; n_rooms],
                beta: vec![0.0; n_rooms],
                competitor_prices: vec![1.0; n_rooms],
                competitor_sensitivity: 0.0,
                gamma: vec![vec![0.0; dim]; n_rooms],
            },
            shock: ShockParams {
                asc: vec![0.0; N_SHOCKS - 1],
                price: vec![0.0; N_SHOCKS - 1],
                gamma: vec![vec![0.0; dim]; N_SHOCKS - 1],
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let b = &self.booking;
        let n = b.alpha.len();
        let d = self.feature_dim();
        if n == 0 {
            return Err(Error::Dimension("booking block has no room types".into()));
        }
        if b.beta.len() != n || b.competitor_prices.len() != n || b.gamma.len() != n {
            return Err(Error::Dimension("booking vectors must share one length".into()));
        }
        if b.competitor_prices.iter().any(|c| *c <= 0.0) {
            return Err(Error::Invalid("competitor prices must be positive".into()));
        }
        let s = &self.shock;
        if s.asc.len() != N_SHOCKS - 1 || s.price.len() != N_SHOCKS - 1 || s.gamma.len() != N_SHOCKS - 1 {
            return Err(Error::Dimension("shock block needs three non-reference outcomes".into()));
        }
        if b.gamma.iter().chain(&s.gamma).any(|g| g.len() != d) {
            return Err(Error::Dimension("covariate rows must share one length".into()));
        }
        Ok(())
    }

    /// MNL booking utilities, outside option first.
    pub fn booking_utilities(&self, x: &[f64], prices: &[f64], demand_scale: f64, competition_scale: f64) -> Vec<f64> {
        let b = &self.booking;
        let mut v = Vec::with_capacity(prices.len() + 1);
        v.push(0.0);
        for j in 0..prices.len() {
            let c = b.competitor_prices[j];
            let rel = (prices[j] - c) / c;
            v.push(
                demand_scale * b.alpha[j] - b.beta[j] * prices[j] - competition_scale * b.competitor_sensitivity * rel
                    + dot(&b.gamma[j], x),
            );
        }
        v
    }

    /// Shock utilities with keep first.
    pub fn shock_utilities(&self, x: &[f64], booked_price: f64) -> Vec<f64> {
        let s = &self.shock;
        let mut v = Vec::with_capacity(N_SHOCKS);
        v.push(0.0);
        for z in 0..N_SHOCKS - 1 {
            v.push(s.asc[z] + s.price[z] * booked_price / PRICE_UNIT + dot(&s.gamma[z], x));
        }
        v
    }
}

impl BehaviorSpec {
    pub fn mnl(theta: Segment) -> Self {
        BehaviorSpec { theta, family: Family::Mnl }
    }

    pub fn n_rooms(&self) -> usize {
        self.theta.n_rooms()
    }

    pub fn feature_dim(&self) -> usize {
        self.theta.feature_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.theta.validate()?;
        let n = self.n_rooms();
        match &self.family {
            Family::Mnl => {}
            Family::NestedLogit { nests, lambdas } => {
                if nests.len() != lambdas.len() {
                    return Err(Error::Invalid("one lambda per nest required".into()));
                }
                if lambdas.iter().any(|l| !(*l > 0.0 && *l <= 1.0)) {
                    return Err(Error::Invalid("nest lambda must lie in (0, 1]".into()));
                }
                let mut seen = vec![false; n + 1];
                for &j in nests.iter().flatten() {
                    if j == 0 || j > n || seen[j] {
                        return Err(Error::Invalid(format!("nests must partition 1..={n}")));
                    }
                    seen[j] = true;
                }
                if seen[1..].iter().any(|s| !s) {
                    return Err(Error::Invalid(format!("nests must partition 1..={n}")));
                }
            }
            Family::BimodalMixture { weights, second } => {
                if weights.iter().any(|w| !(0.0..=1.0).contains(w)) || (weights[0] + weights[1] - 1.0).abs() > 1e-12 {
                    return Err(Error::Invalid("segment weights must be nonnegative and sum to 1".into()));
                }
                check_same_shape(&self.theta, second)?;
            }
            Family::DynamicMixture { period, second } => {
                if !(*period > 0.0) {
                    return Err(Error::Invalid("period must be positive".into()));
                }
                check_same_shape(&self.theta, second)?;
            }
            Family::QuadraticMnl { beta2, .. } => {
                if *beta2 > 0.0 {
                    return Err(Error::Invalid("beta2 must be <= 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Weight of the first segment at `epoch`, 1 for single-segment families.
    pub fn segment_weight(&self, epoch: usize) -> f64 {
        match &self.family {
            Family::BimodalMixture { weights, .. } => weights[0],
            Family::DynamicMixture { period, .. } => dynamic_weight(epoch, *period),
            _ => 1.0,
        }
    }

    fn second_segment(&self) -> Option<&Segment> {
        match &self.family {
            Family::BimodalMixture { second, .. } | Family::DynamicMixture { second, .. } => Some(second),
            _ => None,
        }
    }

    fn check_dims(&self, x: &[f64], prices: &[f64]) -> Result<()> {
        if x.len() != self.feature_dim() {
            return Err(Error::Dimension(format!("features: got {}, expected {}", x.len(), self.feature_dim())));
        }
        if prices.len() != self.n_rooms() {
            return Err(Error::Dimension(format!("prices: got {}, expected {}", prices.len(), self.n_rooms())));
        }
        Ok(())
    }

    /// Systematic utilities of the first segment, outside option at index 0.
    pub fn systematic_utilities(
        &self,
        x: &[f64],
        prices: &[f64],
        demand_scale: f64,
        competition_scale: f64,
    ) -> Result<Vec<f64>> {
        self.check_dims(x, prices)?;
        let mut v = self.theta.booking_utilities(x, prices, demand_scale, competition_scale);
        if let Family::QuadraticMnl { beta2, reference_price } = self.family {
            for (j, p) in prices.iter().enumerate() {
                v[j + 1] += beta2 * (p - reference_price).powi(2);
            }
        }
        Ok(v)
    }

    pub fn choice_probabilities(&self, x: &[f64], prices: &[f64], ctx: &ChoiceContext) -> Result<Vec<f64>> {
        let v = self.systematic_utilities(x, prices, ctx.demand_scale, ctx.competition_scale)?;
        Ok(match &self.family {
            Family::Mnl | Family::QuadraticMnl { .. } => softmax(&v),
            Family::NestedLogit { nests, lambdas } => nested_logit(&v, nests, lambdas),
            Family::BimodalMixture { second, .. } | Family::DynamicMixture { second, .. } => {
                let w = self.segment_weight(ctx.epoch);
                let p1 = softmax(&v);
                let p2 = softmax(&second.booking_utilities(x, prices, ctx.demand_scale, ctx.competition_scale));
                p1.iter().zip(p2).map(|(a, b)| w * a + (1.0 - w) * b).collect()
            }
        })
    }

    pub fn shock_probabilities(&self, x: &[f64], booked_price: f64, epoch: usize) -> Result<Vec<f64>> {
        if x.len() != self.feature_dim() {
            return Err(Error::Dimension(format!("features: got {}, expected {}", x.len(), self.feature_dim())));
        }
        let p1 = softmax(&self.theta.shock_utilities(x, booked_price));
        Ok(match self.second_segment() {
            None => p1,
            Some(second) => {
                let w = self.segment_weight(epoch);
                let p2 = softmax(&second.shock_utilities(x, booked_price));
                p1.iter().zip(p2).map(|(a, b)| w * a + (1.0 - w) * b).collect()
            }
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: BehaviorSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

fn check_same_shape(a: &Segment, b: &Segment) -> Result<()> {
    b.validate()?;
    if a.n_rooms() != b.n_rooms() || a.feature_dim() != b.feature_dim() {
        return Err(Error::Dimension("mixture segments differ in shape".into()));
    }
    Ok(())
}

/// First-segment weight of the dynamic mixture: 0.5 + 0.3 sin(2 pi t / T).
pub fn dynamic_weight(epoch: usize, period: f64) -> f64 {
    0.5 + 0.3 * (2.0 * std::f64::consts::PI * epoch as f64 / period).sin()
}
