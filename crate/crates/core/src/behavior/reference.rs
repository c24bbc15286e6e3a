use serde::{Deserialize, Serialize};

use super::{BehaviorSpec, BookingParams, Family, Segment, ShockParams};

const REFERENCE_WORLD: &str = include_str!("../../data/reference_world.toml");

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SegmentShift {
    pub price_factor: f64,
    pub cancel_shift: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Segments {
    business: SegmentShift,
    leisure: SegmentShift,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Nested {
    nests: Vec<Vec<usize>>,
    lambda: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Quadratic {
    reference_price: f64,
}

/// The shipped ground-truth world and its family variants.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReferenceWorld {
    pub version: u32,
    booking: BookingParams,
    shock: ShockParams,
    segments: Segments,
    nested: Nested,
    quadratic: Quadratic,
}

impl ReferenceWorld {
    pub fn load() -> Self {
        toml::from_str(REFERENCE_WORLD).expect("bundled reference world parses")
    }

    pub fn segment(&self) -> Segment {
        Segment { booking: self.booking.clone(), shock: self.shock.clone() }
    }

    /// Segment whose price sensitivity is scaled by `price_factor`; intercepts
    /// move so the utility is unchanged at the competitor price.
    pub fn shifted_segment(&self, shift: &SegmentShift) -> Segment {
        let mut seg = self.segment();
        let b = &mut seg.booking;
        for j in 0..b.alpha.len() {
            b.alpha[j] += (shift.price_factor - 1.0) * b.beta[j] * b.competitor_prices[j];
            b.beta[j] *= shift.price_factor;
        }
        seg.shock.asc[1] += shift.cancel_shift;
        seg
    }

    pub fn mnl(&self) -> BehaviorSpec {
        BehaviorSpec::mnl(self.segment())
    }

    pub fn default_nest_lambda(&self) -> f64 {
        self.nested.lambda
    }

    pub fn nested(&self, lambda: f64) -> BehaviorSpec {
        BehaviorSpec {
            theta: self.segment(),
            family: Family::NestedLogit {
                nests: self.nested.nests.clone(),
                lambdas: vec![lambda; self.nested.nests.len()],
            },
        }
    }

    pub fn bimodal(&self) -> BehaviorSpec {
        BehaviorSpec {
            theta: self.shifted_segment(&self.segments.business),
            family: Family::BimodalMixture {
                weights: [0.6, 0.4],
                second: self.shifted_segment(&self.segments.leisure),
            },
        }
    }

    pub fn dynamic(&self, period: f64) -> BehaviorSpec {
        BehaviorSpec {
            theta: self.shifted_segment(&self.segments.business),
            family: Family::DynamicMixture { period, second: self.shifted_segment(&self.segments.leisure) },
        }
    }

    pub fn quadratic(&self, beta2: f64) -> BehaviorSpec {
        BehaviorSpec {
            theta: self.segment(),
            family: Family::QuadraticMnl { beta2, reference_price: self.quadratic.reference_price },
        }
    }
}
