use rand::Rng as _;

use crate::behavior::{inverse_cdf, BehaviorSpec};
use crate::dcm::DcmParams;
use crate::environment::{
    draw_features, realized_cashflow, shock_revenue, EnvConfig, Order, Shock, SimState, Simulator,
};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::theory::SmallMdp;

/// An order (or abstract pending item) created by a step.
#[derive(Clone, Debug, PartialEq)]
pub struct Pending<I> {
    pub id: u64,
    pub matures_at: usize,
    pub item: I,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matured {
    pub id: u64,
    pub revenue: f64,
    pub forced: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep<I> {
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
    pub epoch: usize,
    pub r_imm: f64,
    pub new_items: Vec<Pending<I>>,
    pub matured: Vec<Matured>,
    /// Money observed this epoch: immediate revenue plus earlier shocks.
    pub cashflow: f64,
    pub done: bool,
    /// Whether `done` also ends bootstrapping.
    pub terminal: bool,
    pub arrived: bool,
    pub features: Vec<f64>,
}

pub trait DelayedEnv {
    type Item: Clone;
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn reset(&mut self, seed: u64) -> usize;
    fn step(&mut self, action: usize) -> Result<EnvStep<Self::Item>>;
}

/// What a learner may know about the world: a label model for pending items,
/// an optional next-state sampler and a planning simulator.
pub trait WorldModel<I> {
    type PlanState: Clone;
    fn expected_label(&self, item: &I) -> f64;
    fn sample_label(&self, item: &I, rng: &mut Rng) -> f64;
    /// Model-sampled next state for the fully synthetic transition.
    fn synthetic_next(&self, step: &EnvStep<I>, rng: &mut Rng) -> usize;
    fn plan_start(&self, s: usize, epoch: usize) -> Self::PlanState;
    /// Expected one-step label and a sampled transition; `None` once the
    /// planning episode is over.
    fn plan_step(&self, st: &mut Self::PlanState, action: usize, rng: &mut Rng) -> Option<f64>;
}

// ---------------------------------------------------------------- booking

pub struct BookingEnv {
    sim: Simulator,
    state: Option<SimState>,
}

impl BookingEnv {
    pub fn new(config: EnvConfig, behavior: BehaviorSpec) -> Result<Self> {
        Ok(BookingEnv { sim: Simulator::new(config, behavior)?, state: None })
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }
}

impl DelayedEnv for BookingEnv {
    type Item = Order;

    fn n_states(&self) -> usize {
        self.sim.config().n_states()
    }

    fn n_actions(&self) -> usize {
        self.sim.config().n_actions()
    }

    fn reset(&mut self, seed: u64) -> usize {
        let st = self.sim.reset(seed);
        let s = st.inventory;
        self.state = Some(st);
        s
    }

    fn step(&mut self, action: usize) -> Result<EnvStep<Order>> {
        let st = self.state.as_mut().ok_or_else(|| Error::Invalid("step before reset".into()))?;
        let o = self.sim.step(st, action)?;
        Ok(EnvStep {
            s: o.inventory,
            a: action,
            s_next: o.next_inventory,
            epoch: o.epoch,
            r_imm: o.immediate_revenue,
            new_items: o
                .new_orders
                .iter()
                .map(|ord| Pending { id: ord.id, matures_at: ord.matures_at, item: ord.clone() })
                .collect(),
            matured: o
                .matured_shocks
                .iter()
                .map(|m| Matured { id: m.order.id, revenue: m.revenue, forced: m.forced })
                .collect(),
            cashflow: realized_cashflow(&o),
            done: o.done,
            terminal: o.done,
            arrived: o.arrived,
            features: o.customer_features,
        })
    }
}

/// Fitted DCM plus the operational configuration it is deployed in.
#[derive(Clone, Debug, PartialEq)]
pub struct BookingWorldModel {
    pub params: DcmParams,
    pub config: EnvConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BookingPlanState {
    pub inventory: usize,
    pub epoch: usize,
    /// Epochs at which model-sampled cancellations hand a room back.
    pub restores: Vec<usize>,
}

impl BookingWorldModel {
    pub fn new(params: DcmParams, config: EnvConfig) -> Result<Self> {
        params.validate()?;
        config.validate()?;
        if params.n_rooms != config.n_room_types || params.feature_dim != config.feature_dim {
            return Err(Error::Dimension("DCM parameters do not match the environment".into()));
        }
        Ok(BookingWorldModel { params, config })
    }
}

impl WorldModel<Order> for BookingWorldModel {
    type PlanState = BookingPlanState;

    fn expected_label(&self, order: &Order) -> f64 {
        self.params.expected_delayed_reward(order)
    }

    fn sample_label(&self, order: &Order, rng: &mut Rng) -> f64 {
        shock_revenue(order, self.params.sample_shock(order, rng))
    }

    fn synthetic_next(&self, step: &EnvStep<Order>, rng: &mut Rng) -> usize {
        let u: f64 = rng.gen();
        let n_new = step.new_items.len();
        // Rooms handed back this step are observed; only the booking is re-drawn.
        let restored = (step.s_next + n_new).saturating_sub(step.s);
        let mut booked = 0;
        if step.arrived && step.s > 0 {
            let probs = self.params.booking_probabilities(&step.features, &self.config.room_prices(step.a));
            booked = usize::from(inverse_cdf(&probs, u) > 0);
        }
        (step.s - booked + restored).min(self.config.capacity)
    }

    fn plan_start(&self, s: usize, epoch: usize) -> BookingPlanState {
        BookingPlanState { inventory: s, epoch, restores: Vec::new() }
    }

    fn plan_step(&self, st: &mut BookingPlanState, action: usize, rng: &mut Rng) -> Option<f64> {
        let cfg = &self.config;
        if st.epoch >= cfg.episode_length {
            return None;
        }
        let u_arrival: f64 = rng.gen();
        let x = draw_features(cfg.feature_dim, rng);
        let u_choice: f64 = rng.gen();
        let delay = cfg.delay_support[rng.gen_range(0..cfg.delay_support.len())];
        let u_outcome: f64 = rng.gen();

        let mut reward = 0.0;
        let arrived = cfg.arrival_rate >= 1.0 || u_arrival < cfg.arrival_rate;
        if arrived && st.inventory > 0 {
            let prices = cfg.room_prices(action);
            let probs = self.params.booking_probabilities(&x, &prices);
            let mut cancel = vec![0.0; prices.len()];
            for (j, p) in prices.iter().enumerate() {
                let sp = self.params.shock_probabilities(&x, *p);
                cancel[j] = sp[Shock::Cancel.index()];
                // Modification deltas are centred, so only refunds move the mean.
                reward += probs[j + 1] * p * (1.0 - cancel[j]);
            }
            let chosen = inverse_cdf(&probs, u_choice);
            if chosen > 0 {
                st.inventory -= 1;
                if u_outcome < cancel[chosen - 1] {
                    st.restores.push(st.epoch + delay);
                }
            }
        }
        st.epoch += 1;
        let back = st.restores.iter().filter(|e| **e == st.epoch).count();
        st.restores.retain(|e| *e != st.epoch);
        st.inventory = (st.inventory + back).min(cfg.capacity);
        Some(reward)
    }
}

// ----------------------------------------------------------------- oracle

/// Provenance of an oracle pending label.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleItem {
    pub s: usize,
    pub a: usize,
}

/// A [`SmallMdp`] whose reward is split into an immediate share and a
/// delayed Bernoulli part with the same mean, so the expected label is r(s,a).
pub struct OracleEnv {
    pub mdp: SmallMdp,
    pub share: f64,
    pub mature_prob: f64,
    pub delays: Vec<usize>,
    pub episode_length: usize,
    rng: Rng,
    s: usize,
    clock: usize,
    next_id: u64,
    pending: Vec<(u64, usize, f64)>,
}

impl OracleEnv {
    pub fn new(mdp: SmallMdp, share: f64, mature_prob: f64, delays: Vec<usize>, episode_length: usize) -> Result<Self> {
        mdp.validate()?;
        if !(0.0..=1.0).contains(&share) || !(mature_prob > 0.0 && mature_prob <= 1.0) {
            return Err(Error::Invalid("share must lie in [0, 1] and mature_prob in (0, 1]".into()));
        }
        if delays.is_empty() || delays.contains(&0) || episode_length == 0 {
            return Err(Error::Invalid("delays must be positive and the episode non-empty".into()));
        }
        Ok(OracleEnv {
            mdp,
            share,
            mature_prob,
            delays,
            episode_length,
            rng: rng::stream(0, rng::STREAM_ENV),
            s: 0,
            clock: 0,
            next_id: 0,
            pending: Vec::new(),
        })
    }

    /// Largest label the environment can emit.
    pub fn label_bound(&self) -> f64 {
        self.mdp.r_max * (self.share + (1.0 - self.share) / self.mature_prob)
    }

    pub fn exact_model(&self) -> OracleModel {
        OracleModel { mdp: self.mdp.clone(), share: self.share, mature_prob: self.mature_prob, bias: 0.0 }
    }
}

impl DelayedEnv for OracleEnv {
    type Item = OracleItem;

    fn n_states(&self) -> usize {
        self.mdp.n_states
    }

    fn n_actions(&self) -> usize {
        self.mdp.n_actions
    }

    fn reset(&mut self, seed: u64) -> usize {
        self.rng = rng::stream(seed, rng::STREAM_ENV);
        self.s = self.rng.gen_range(0..self.mdp.n_states);
        self.clock = 0;
        self.next_id = 0;
        self.pending.clear();
        self.s
    }

    fn step(&mut self, a: usize) -> Result<EnvStep<OracleItem>> {
        if a >= self.mdp.n_actions {
            return Err(Error::InvalidAction { action: a, n: self.mdp.n_actions });
        }
        if self.clock >= self.episode_length {
            return Err(Error::Invalid("episode already finished".into()));
        }
        let u_next: f64 = self.rng.gen();
        let delay = self.delays[self.rng.gen_range(0..self.delays.len())];
        let u_bern: f64 = self.rng.gen();

        let (s, epoch) = (self.s, self.clock);
        let r = self.mdp.reward(s, a);
        let r_imm = self.share * r;
        let r_del = if u_bern < self.mature_prob { (1.0 - self.share) * r / self.mature_prob } else { 0.0 };
        let id = self.next_id;
        self.next_id += 1;
        self.pending.push((id, epoch + delay, r_del));
        let s_next = self.mdp.sample_next(s, a, u_next);

        self.clock += 1;
        let done = self.clock >= self.episode_length;
        let mut matured = Vec::new();
        let clock = self.clock;
        self.pending.retain(|&(pid, at, rev)| {
            if at == clock || done {
                matured.push(Matured { id: pid, revenue: rev, forced: at != clock });
                false
            } else {
                true
            }
        });
        self.s = s_next;
        let cashflow = r_imm + matured.iter().map(|m| m.revenue).sum::<f64>();
        Ok(EnvStep {
            s,
            a,
            s_next,
            epoch,
            r_imm,
            new_items: vec![Pending { id, matures_at: epoch + delay, item: OracleItem { s, a } }],
            matured,
            cashflow,
            done,
            terminal: false,
            arrived: true,
            features: Vec::new(),
        })
    }
}

/// Label model for [`OracleEnv`]; `bias` shifts every delayed label.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleModel {
    pub mdp: SmallMdp,
    pub share: f64,
    pub mature_prob: f64,
    pub bias: f64,
}

impl WorldModel<OracleItem> for OracleModel {
    type PlanState = usize;

    fn expected_label(&self, it: &OracleItem) -> f64 {
        (1.0 - self.share) * self.mdp.reward(it.s, it.a) + self.bias
    }

    fn sample_label(&self, it: &OracleItem, rng: &mut Rng) -> f64 {
        let u: f64 = rng.gen();
        let r = self.mdp.reward(it.s, it.a);
        let base = if u < self.mature_prob { (1.0 - self.share) * r / self.mature_prob } else { 0.0 };
        base + self.bias
    }

    fn synthetic_next(&self, step: &EnvStep<OracleItem>, rng: &mut Rng) -> usize {
        self.mdp.sample_next(step.s, step.a, rng.gen())
    }

    fn plan_start(&self, s: usize, _epoch: usize) -> usize {
        s
    }

    fn plan_step(&self, s: &mut usize, a: usize, rng: &mut Rng) -> Option<f64> {
        let r = self.share * self.mdp.reward(*s, a) + self.expected_label(&OracleItem { s: *s, a });
        *s = self.mdp.sample_next(*s, a, rng.gen());
        Some(r)
    }
}
