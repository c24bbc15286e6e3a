//! Delayed-feedback booking simulator.
//!
//! Each [`Simulator::step`] serves at most one customer at the chosen price
//! level, creates an [`Order`] on a booking and resolves every pending order
//! maturing at the next clock tick. Each step consumes a fixed number of draws
//! from the episode stream, whatever happens, so two policies facing the same
//! seed see the same customers.

mod features;
mod log;

pub use features::draw_features;
pub use log::{episode_log, write_episode_log, EpisodeLogRow};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::behavior::{inverse_cdf, BehaviorSpec, ChoiceContext, N_SHOCKS};
use crate::error::{invalid_config, Error, Result};
use crate::rng::{self, Rng};

pub const MODIFY_BAND: f64 = 0.15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub capacity: usize,
    pub price_levels: Vec<f64>,
    pub n_room_types: usize,
    /// Room type j is offered at `price_level * room_price_multipliers[j]`.
    pub room_price_multipliers: Vec<f64>,
    pub delay_support: Vec<usize>,
    pub episode_length: usize,
    pub demand_scale: f64,
    pub competition_scale: f64,
    pub feature_dim: usize,
    pub arrival_rate: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            capacity: 26,
            price_levels: (0..13).map(|i| 450.0 + 350.0 * i as f64 / 12.0).collect(),
            n_room_types: 6,
            room_price_multipliers: vec![0.90, 0.95, 1.00, 1.05, 1.10, 1.15],
            delay_support: (1..=14).collect(),
            episode_length: 82,
            demand_scale: 1.0,
            competition_scale: 1.0,
            feature_dim: 12,
            arrival_rate: 1.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity < 1 {
            return Err(invalid_config("capacity", "capacity ≥ 1"));
        }
        if self.price_levels.is_empty() {
            return Err(invalid_config("price_levels", "at least one price level"));
        }
        if self.price_levels.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(invalid_config("price_levels", "prices must be positive"));
        }
        if self.price_levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid_config("price_levels", "price levels strictly increasing"));
        }
        if self.n_room_types < 1 {
            return Err(invalid_config("n_room_types", "n_room_types ≥ 1"));
        }
        if self.room_price_multipliers.len() != self.n_room_types
            || self.room_price_multipliers.iter().any(|m| !(*m > 0.0))
        {
            return Err(invalid_config("room_price_multipliers", "one positive multiplier per room type"));
        }
        if self.delay_support.is_empty() || self.delay_support.iter().any(|d| *d < 1) {
            return Err(invalid_config("delay_support", "non-empty set of delays ≥ 1"));
        }
        let mut sorted = self.delay_support.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.delay_support.len() {
            return Err(invalid_config("delay_support", "delays must be distinct"));
        }
        if self.episode_length < 1 {
            return Err(invalid_config("episode_length", "episode_length ≥ 1"));
        }
        if !(self.demand_scale > 0.0 && self.demand_scale.is_finite()) {
            return Err(invalid_config("demand_scale", "demand_scale > 0"));
        }
        if !(self.competition_scale > 0.0 && self.competition_scale.is_finite()) {
            return Err(invalid_config("competition_scale", "competition_scale > 0"));
        }
        if self.feature_dim < features::FIXED_FEATURES {
            return Err(invalid_config("feature_dim", format!("feature_dim ≥ {}", features::FIXED_FEATURES)));
        }
        if !(self.arrival_rate > 0.0 && self.arrival_rate <= 1.0) {
            return Err(invalid_config("arrival_rate", "arrival_rate in (0, 1]"));
        }
        Ok(())
    }

    pub fn n_actions(&self) -> usize {
        self.price_levels.len()
    }

    pub fn n_states(&self) -> usize {
        self.capacity + 1
    }

    pub fn max_delay(&self) -> usize {
        self.delay_support.iter().copied().max().unwrap_or(0)
    }

    pub fn room_prices(&self, action: usize) -> Vec<f64> {
        let p = self.price_levels[action];
        self.room_price_multipliers.iter().map(|m| p * m).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shock {
    Keep,
    Modify,
    Cancel,
    NoShow,
}

impl Shock {
    pub const ALL: [Shock; N_SHOCKS] = [Shock::Keep, Shock::Modify, Shock::Cancel, Shock::NoShow];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Shock> {
        Shock::ALL.get(i).copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Order {
    pub id: u64,
    pub features: Vec<f64>,
    pub room_type: usize,
    pub booked_price: f64,
    /// Price change applied if the order is modified.
    pub modify_delta: f64,
    pub created_at: usize,
    pub matures_at: usize,
    pub outcome: Option<Shock>,
    hidden: Shock,
}

impl Order {
    /// Test and tooling constructor; the outcome stays unrevealed.
    pub fn new(
        id: u64,
        features: Vec<f64>,
        room_type: usize,
        booked_price: f64,
        modify_delta: f64,
        created_at: usize,
        matures_at: usize,
    ) -> Self {
        Order {
            id,
            features,
            room_type,
            booked_price,
            modify_delta,
            created_at,
            matures_at,
            outcome: None,
            hidden: Shock::Keep,
        }
    }

    pub fn delay(&self) -> usize {
        self.matures_at - self.created_at
    }
}

/// Revenue consequence of a shock, per outcome index.
pub fn shock_revenues(order: &Order) -> [f64; N_SHOCKS] {
    [0.0, order.modify_delta, -order.booked_price, 0.0]
}

pub fn shock_revenue(order: &Order, shock: Shock) -> f64 {
    shock_revenues(order)[shock.index()]
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaturedShock {
    pub order: Order,
    pub shock: Shock,
    pub revenue: f64,
    /// Resolved early at episode end rather than at its maturity epoch.
    pub forced: bool,
}

#[derive(Clone, Debug)]
pub struct SimState {
    pub inventory: usize,
    pub clock: usize,
    pub pending: Vec<Order>,
    rng: Rng,
    next_id: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub epoch: usize,
    pub action: usize,
    pub inventory: usize,
    pub arrived: bool,
    pub chosen: usize,
    pub immediate_revenue: f64,
    pub new_orders: Vec<Order>,
    pub matured_shocks: Vec<MaturedShock>,
    pub next_inventory: usize,
    pub customer_features: Vec<f64>,
    pub done: bool,
}

pub fn realized_cashflow(outcome: &StepOutcome) -> f64 {
    outcome.immediate_revenue + outcome.matured_shocks.iter().map(|m| m.revenue).sum::<f64>()
}

/// Splits the learning label of `outcome` given the resolutions of exactly its
/// new orders.
pub fn decompose_label(outcome: &StepOutcome, later_maturations: &[MaturedShock]) -> Result<(f64, f64)> {
    let mut want: Vec<u64> = outcome.new_orders.iter().map(|o| o.id).collect();
    let mut got: Vec<u64> = later_maturations.iter().map(|m| m.order.id).collect();
    want.sort_unstable();
    got.sort_unstable();
    if want != got {
        return Err(Error::OrderMismatch(format!("expected {want:?}, got {got:?}")));
    }
    Ok((outcome.immediate_revenue, later_maturations.iter().map(|m| m.revenue).sum()))
}

#[derive(Clone, Debug)]
pub struct Simulator {
    config: EnvConfig,
    behavior: BehaviorSpec,
}

impl Simulator {
    pub fn new(config: EnvConfig, behavior: BehaviorSpec) -> Result<Self> {
        config.validate()?;
        behavior.validate()?;
        if behavior.n_rooms() != config.n_room_types {
            return Err(invalid_config("n_room_types", format!("behavior has {} room types", behavior.n_rooms())));
        }
        if behavior.feature_dim() != config.feature_dim {
            return Err(invalid_config("feature_dim", format!("behavior expects {} features", behavior.feature_dim())));
        }
        Ok(Simulator { config, behavior })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn behavior(&self) -> &BehaviorSpec {
        &self.behavior
    }

    pub fn reset(&self, seed: u64) -> SimState {
        SimState {
            inventory: self.config.capacity,
            clock: 0,
            pending: Vec::new(),
            rng: rng::stream(seed, rng::STREAM_ENV),
            next_id: 0,
        }
    }

    pub fn step(&self, state: &mut SimState, action: usize) -> Result<StepOutcome> {
        let cfg = &self.config;
        if action >= cfg.n_actions() {
            return Err(Error::InvalidAction { action, n: cfg.n_actions() });
        }
        if state.clock >= cfg.episode_length {
            return Err(Error::Invalid("episode already finished".into()));
        }
        let epoch = state.clock;
        let inventory = state.inventory;
        let prices = cfg.room_prices(action);

        let rng = &mut state.rng;
        let u_arrival: f64 = rng.gen();
        let x = draw_features(cfg.feature_dim, rng);
        let u_choice: f64 = rng.gen();
        let delay = cfg.delay_support[rng.gen_range(0..cfg.delay_support.len())];
        let u_outcome: f64 = rng.gen();
        let u_delta: f64 = rng.gen_range(-MODIFY_BAND..=MODIFY_BAND);

        let arrived = cfg.arrival_rate >= 1.0 || u_arrival < cfg.arrival_rate;
        let mut chosen = 0;
        if arrived && state.inventory > 0 {
            let ctx = ChoiceContext { demand_scale: cfg.demand_scale, competition_scale: cfg.competition_scale, epoch };
            let probs = self.behavior.choice_probabilities(&x, &prices, &ctx)?;
            chosen = inverse_cdf(&probs, u_choice);
        }

        let mut immediate_revenue = 0.0;
        let mut new_orders = Vec::new();
        if chosen > 0 {
            let price = prices[chosen - 1];
            state.inventory -= 1;
            immediate_revenue = price;
            let shock_probs = self.behavior.shock_probabilities(&x, price, epoch)?;
            let hidden = Shock::ALL[inverse_cdf(&shock_probs, u_outcome)];
            let order = Order {
                id: state.next_id,
                features: x.clone(),
                room_type: chosen,
                booked_price: price,
                modify_delta: u_delta * price,
                created_at: epoch,
                matures_at: epoch + delay,
                outcome: None,
                hidden,
            };
            state.next_id += 1;
            new_orders.push(order.clone());
            state.pending.push(order);
        }

        state.clock += 1;
        let done = state.clock >= cfg.episode_length;
        let mut matured_shocks = Vec::new();
        let mut keep = Vec::with_capacity(state.pending.len());
        for order in state.pending.drain(..) {
            if order.matures_at == state.clock || done {
                let forced = order.matures_at != state.clock;
                matured_shocks.push(resolve(order, forced));
            } else {
                keep.push(order);
            }
        }
        state.pending = keep;
        for m in &matured_shocks {
            if m.shock == Shock::Cancel {
                state.inventory = (state.inventory + 1).min(cfg.capacity);
            }
        }

        Ok(StepOutcome {
            epoch,
            action,
            inventory,
            arrived,
            chosen,
            immediate_revenue,
            new_orders,
            matured_shocks,
            next_inventory: state.inventory,
            customer_features: x,
            done,
        })
    }

    /// Plays one full episode with `policy(inventory, epoch)`.
    pub fn run_episode(&self, seed: u64, mut policy: impl FnMut(usize, usize) -> usize) -> Result<Vec<StepOutcome>> {
        let mut state = self.reset(seed);
        let mut out = Vec::with_capacity(self.config.episode_length);
        loop {
            let a = policy(state.inventory, state.clock);
            let o = self.step(&mut state, a)?;
            let done = o.done;
            out.push(o);
            if done {
                return Ok(out);
            }
        }
    }
}

fn resolve(mut order: Order, forced: bool) -> MaturedShock {
    let shock = order.hidden;
    order.outcome = Some(shock);
    let revenue = shock_revenue(&order, shock);
    MaturedShock { order, shock, revenue, forced }
}
