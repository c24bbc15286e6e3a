use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::env::{DelayedEnv, EnvStep, WorldModel};
use super::mlp::{dqn_train_step, encode_state, Adam, Mlp};
use super::mpc::{mpc_select_action, MpcConfig};
use super::replay::{Handle, MaturityBuffer, Provenance, ReplayBuffer, TransitionRecord};
use super::tabular::QTable;
use super::targets::{clip_reward, impute_synthetic_transition};
use super::{argmax, epsilon_greedy, EpsilonSchedule, R_MAX};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

const EVAL_SALT: u64 = 0xE7A1_0000_0000_0001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MB")]
    Mb,
    #[serde(rename = "CA")]
    Ca,
    #[serde(rename = "CA-DR")]
    CaDr,
    #[serde(rename = "MPC")]
    Mpc,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mb, Method::Ca, Method::CaDr, Method::Mpc];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mb => "MB",
            Method::Ca => "CA",
            Method::CaDr => "CA-DR",
            Method::Mpc => "MPC",
        }
    }

    pub fn needs_model(self) -> bool {
        self != Method::Mb
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mb" => Ok(Method::Mb),
            "ca" => Ok(Method::Ca),
            "ca-dr" | "cadr" => Ok(Method::CaDr),
            "mpc" => Ok(Method::Mpc),
            _ => Err(Error::Parse(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Tabular,
    Dqn,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Tabular => "tabular",
            Variant::Dqn => "dqn",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tabular" => Ok(Variant::Tabular),
            "dqn" => Ok(Variant::Dqn),
            _ => Err(Error::Parse(format!("unknown variant {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch: usize,
    pub buffer: usize,
    pub min_fill: usize,
    pub target_sync: usize,
    /// Dollars to network units.
    pub reward_scale: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            hidden: vec![128, 128],
            lr: 0.001,
            batch: 32,
            buffer: 10_000,
            min_fill: 1_000,
            target_sync: 100,
            reward_scale: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub r_max: f64,
    /// Model-sampled next state for CA instead of the observed one.
    pub synthetic_next: bool,
    pub dqn: DqnConfig,
    pub mpc: MpcConfig,
    /// Greedy evaluation episodes after each training episode.
    pub curve_eval_episodes: usize,
    /// Keep every record handed to the learner.
    pub keep_log: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 82,
            gamma: 0.99,
            epsilon: EpsilonSchedule::default(),
            r_max: R_MAX,
            synthetic_next: false,
            dqn: DqnConfig::default(),
            mpc: MpcConfig::default(),
            curve_eval_episodes: 1,
            keep_log: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(crate::error::invalid_config("gamma", "must lie in [0, 1)"));
        }
        if self.r_max <= 0.0 {
            return Err(crate::error::invalid_config("r_max", "must be positive"));
        }
        let d = &self.dqn;
        if d.batch == 0 || d.buffer < d.batch || d.min_fill < d.batch || d.target_sync == 0 {
            return Err(crate::error::invalid_config(
                "dqn",
                "need 0 < batch <= min_fill, batch <= buffer, target_sync >= 1",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub epsilon: f64,
    pub train_cashflow: f64,
    pub eval_revenue: Option<f64>,
}

pub trait ActionPolicy<I> {
    fn act(&self, s: usize, epoch: usize, rng: &mut Rng) -> usize;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantPolicy(pub usize);

impl<I> ActionPolicy<I> for ConstantPolicy {
    fn act(&self, _s: usize, _epoch: usize, _rng: &mut Rng) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainedPolicy<M> {
    Tabular(QTable),
    Dqn { net: Mlp, n_states: usize },
    Mpc { model: M, cfg: MpcConfig, n_actions: usize },
}

impl<I, M: WorldModel<I>> ActionPolicy<I> for TrainedPolicy<M> {
    fn act(&self, s: usize, epoch: usize, rng: &mut Rng) -> usize {
        match self {
            TrainedPolicy::Tabular(q) => q.greedy(s),
            TrainedPolicy::Dqn { net, n_states } => argmax(&net.forward_unchecked(&encode_state(s, *n_states))),
            TrainedPolicy::Mpc { model, cfg, n_actions } => mpc_select_action(model, s, epoch, *n_actions, cfg, rng),
        }
    }
}

pub struct TrainOutcome<M> {
    pub policy: TrainedPolicy<M>,
    pub curve: Vec<CurvePoint>,
    /// Records in the order the learner consumed them (with `keep_log`).
    pub log: Vec<TransitionRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub mean: f64,
    pub sd: f64,
    pub episodes: Vec<f64>,
    /// No episodes were run; mean and sd are placeholders.
    pub empty: bool,
}

impl EvalStats {
    pub fn from_episodes(episodes: Vec<f64>) -> Self {
        let n = episodes.len();
        if n == 0 {
            return EvalStats { mean: 0.0, sd: 0.0, episodes, empty: true };
        }
        let mean = episodes.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (episodes.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        EvalStats { mean, sd, episodes, empty: false }
    }
}

/// Greedy roll-outs; each entry is the total realized cashflow of an episode.
pub fn evaluate_policy<E: DelayedEnv, P: ActionPolicy<E::Item>>(
    env: &mut E,
    policy: &P,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalStats> {
    let mut out = Vec::with_capacity(n_episodes);
    for ep in 0..n_episodes {
        let ep_seed = rng::derive(seed ^ EVAL_SALT, ep as u64);
        let mut prng = rng::stream(ep_seed, rng::STREAM_PLAN);
        let mut s = env.reset(ep_seed);
        let mut total = 0.0;
        let mut epoch = 0;
        loop {
            let st = env.step(policy.act(s, epoch, &mut prng))?;
            epoch += 1;
            total += st.cashflow;
            s = st.s_next;
            if st.done {
                break;
            }
        }
        out.push(total);
    }
    Ok(EvalStats::from_episodes(out))
}

enum Learner {
    Table(QTable),
    Net(Box<DqnState>),
}

struct DqnState {
    online: Mlp,
    target: Mlp,
    adam: Adam,
    replay: ReplayBuffer,
    rng: Rng,
    updates: usize,
    n_states: usize,
    cfg: DqnConfig,
}

impl Learner {
    fn values(&self, s: usize) -> Vec<f64> {
        match self {
            Learner::Table(q) => q.row(s).to_vec(),
            Learner::Net(d) => d.online.forward_unchecked(&encode_state(s, d.n_states)),
        }
    }

    fn insert(&mut self, rec: TransitionRecord, gamma: f64) -> Result<Handle> {
        match self {
            Learner::Table(q) => {
                let next = if rec.terminal { None } else { Some(rec.s_next) };
                q.update(rec.s, rec.a, rec.reward_target, next, gamma)?;
                Ok(Handle { slot: rec.s * q.n_actions + rec.a, generation: 0 })
            }
            Learner::Net(d) => Ok(d.replay.push(rec)),
        }
    }

    fn patch(&mut self, h: Handle, delta: f64) -> Result<()> {
        match self {
            Learner::Table(q) => q.patch(h.slot / q.n_actions, h.slot % q.n_actions, delta),
            Learner::Net(d) => {
                // Records already evicted from the ring are simply gone.
                if let Some(r) = d.replay.get_mut(h) {
                    r.reward_target += delta;
                }
                Ok(())
            }
        }
    }

    /// One gradient step per environment step once the buffer is warm.
    fn tick(&mut self, gamma: f64) -> Result<()> {
        if let Learner::Net(d) = self {
            if d.replay.len() >= d.cfg.min_fill {
                let batch = d.replay.sample(d.cfg.batch, &mut d.rng)?;
                dqn_train_step(&mut d.online, &d.target, &batch, gamma, &mut d.adam, d.n_states, d.cfg.reward_scale)?;
                d.updates += 1;
                if d.updates % d.cfg.target_sync == 0 {
                    d.target = d.online.clone();
                }
            }
        }
        Ok(())
    }

    fn greedy(&self) -> GreedyView<'_> {
        GreedyView(self)
    }
}

struct GreedyView<'a>(&'a Learner);

impl<I> ActionPolicy<I> for GreedyView<'_> {
    fn act(&self, s: usize, _epoch: usize, _rng: &mut Rng) -> usize {
        argmax(&self.0.values(s))
    }
}

/// Bookkeeping for targets inserted with the model mean and corrected later.
struct DrEntry {
    handle: Handle,
    raw: f64,
    applied: f64,
    outstanding: usize,
}

/// Trains one agent. `model` is the fitted world model; required for every
/// method except MB.
pub fn train_agent<E, M>(
    env: &mut E,
    model: Option<&M>,
    method: Method,
    variant: Variant,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome<M>>
where
    E: DelayedEnv,
    M: WorldModel<E::Item> + Clone,
{
    cfg.validate()?;
    if method.needs_model() && model.is_none() {
        return Err(Error::MissingModel(format!("method {method} needs a calibrated model")));
    }
    let (ns, na) = (env.n_states(), env.n_actions());
    if method == Method::Mpc {
        let policy = TrainedPolicy::Mpc { model: model.expect("checked").clone(), cfg: cfg.mpc, n_actions: na };
        return Ok(TrainOutcome { policy, curve: Vec::new(), log: Vec::new() });
    }

    let mut learner = match variant {
        Variant::Tabular => Learner::Table(QTable::new(ns, na)),
        Variant::Dqn => {
            let mut sizes = vec![ns + 1];
            sizes.extend(&cfg.dqn.hidden);
            sizes.push(na);
            let online = Mlp::init(&sizes, &mut rng::stream(seed, rng::STREAM_INIT));
            Learner::Net(Box::new(DqnState {
                target: online.clone(),
                adam: Adam::new(online.n_params(), cfg.dqn.lr),
                online,
                replay: ReplayBuffer::new(cfg.dqn.buffer),
                rng: rng::stream(seed, rng::STREAM_REPLAY),
                updates: 0,
                n_states: ns,
                cfg: cfg.dqn.clone(),
            }))
        }
    };
    let mut explore = rng::stream(seed, rng::STREAM_EXPLORE);
    let mut impute = rng::stream(seed, rng::STREAM_IMPUTE);
    let mut curve = Vec::with_capacity(cfg.episodes);
    let mut log = Vec::new();

    for ep in 0..cfg.episodes {
        let eps = cfg.epsilon.at(ep);
        let mut s = env.reset(rng::derive(seed, ep as u64));
        let mut mb = MaturityBuffer::new();
        let mut dr_orders: HashMap<u64, (u64, f64)> = HashMap::new();
        let mut dr_trans: HashMap<u64, DrEntry> = HashMap::new();
        let mut next_key = 0u64;
        let mut cash = 0.0;
        loop {
            let a = epsilon_greedy(&learner.values(s), eps, &mut explore)?;
            let st: EnvStep<E::Item> = env.step(a)?;
            cash += st.cashflow;
            let clock = st.epoch + 1;
            match method {
                Method::Mb => {
                    let orders: Vec<(u64, usize)> = st.new_items.iter().map(|p| (p.id, p.matures_at)).collect();
                    let mut ready = Vec::new();
                    ready.extend(mb.hold(st.s, st.a, st.s_next, st.r_imm, st.epoch, st.terminal, &orders));
                    ready.extend(mb.admit(clock, &st.matured)?);
                    for mut rec in ready {
                        rec.reward_target = clip_reward(rec.reward_target, cfg.r_max);
                        if cfg.keep_log {
                            log.push(rec.clone());
                        }
                        learner.insert(rec, cfg.gamma)?;
                    }
                }
                Method::Ca => {
                    let m = model.expect("checked");
                    let rec = impute_synthetic_transition(&st, m, &mut impute, cfg.synthetic_next, cfg.r_max);
                    if cfg.keep_log {
                        log.push(rec.clone());
                    }
                    learner.insert(rec, cfg.gamma)?;
                }
                Method::CaDr => {
                    let m = model.expect("checked");
                    let key = next_key;
                    next_key += 1;
                    let mut raw = st.r_imm;
                    for p in &st.new_items {
                        let mu = m.expected_label(&p.item);
                        raw += mu;
                        dr_orders.insert(p.id, (key, mu));
                    }
                    let applied = clip_reward(raw, cfg.r_max);
                    let rec = TransitionRecord {
                        s: st.s,
                        a: st.a,
                        reward_target: applied,
                        s_next: st.s_next,
                        provenance: Provenance::DoublyRobust,
                        epoch: st.epoch,
                        terminal: st.terminal,
                        forced: false,
                        available_at: st.epoch,
                    };
                    if cfg.keep_log {
                        log.push(rec.clone());
                    }
                    let handle = learner.insert(rec, cfg.gamma)?;
                    if !st.new_items.is_empty() {
                        dr_trans.insert(key, DrEntry { handle, raw, applied, outstanding: st.new_items.len() });
                    }
                    for mat in &st.matured {
                        let (key, mu) = dr_orders
                            .remove(&mat.id)
                            .ok_or_else(|| Error::OrderMismatch(format!("order {} has no pending target", mat.id)))?;
                        let e = dr_trans.get_mut(&key).expect("pending transition");
                        e.raw += mat.revenue - mu;
                        let now = clip_reward(e.raw, cfg.r_max);
                        learner.patch(e.handle, now - e.applied)?;
                        e.applied = now;
                        e.outstanding -= 1;
                        if e.outstanding == 0 {
                            dr_trans.remove(&key);
                        }
                    }
                }
                Method::Mpc => unreachable!(),
            }
            learner.tick(cfg.gamma)?;
            s = st.s_next;
            if st.done {
                break;
            }
        }
        let eval_revenue = if cfg.curve_eval_episodes > 0 {
            Some(
                evaluate_policy(
                    env,
                    &learner.greedy(),
                    cfg.curve_eval_episodes,
                    rng::derive(seed, 1 << 40 | ep as u64),
                )?
                .mean,
            )
        } else {
            None
        };
        curve.push(CurvePoint { episode: ep, epsilon: eps, train_cashflow: cash, eval_revenue });
    }

    let policy = match learner {
        Learner::Table(q) => TrainedPolicy::Tabular(q),
        Learner::Net(d) => TrainedPolicy::Dqn { net: d.online, n_states: ns },
    };
    Ok(TrainOutcome { policy, curve, log })
}

pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["episode", "epsilon", "train_cashflow", "eval_revenue"])?;
    for c in curve {
        w.write_record([
            c.episode.to_string(),
            c.epsilon.to_string(),
            c.train_cashflow.to_string(),
            c.eval_revenue.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_qtable_csv(path: &Path, q: &QTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["state", "action", "value", "visits"])?;
    for s in 0..q.n_states {
        for a in 0..q.n_actions {
            let i = s * q.n_actions + a;
            w.write_record([s.to_string(), a.to_string(), q.values[i].to_string(), q.visits[i].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_qtable_csv(path: &Path) -> Result<QTable> {
    let mut rows = Vec::new();
    for rec in csv::Reader::from_path(path)?.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).ok_or_else(|| Error::Parse("short row in policy file".into()));
        let s: usize = f(0)?.parse().map_err(|_| Error::Parse("bad state".into()))?;
        let a: usize = f(1)?.parse().map_err(|_| Error::Parse("bad action".into()))?;
        let v: f64 = f(2)?.parse().map_err(|_| Error::Parse("bad value".into()))?;
        let n: u64 = f(3)?.parse().map_err(|_| Error::Parse("bad visit count".into()))?;
        rows.push((s, a, v, n));
    }
    let ns = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let na = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if ns == 0 || rows.len() != ns * na {
        return Err(Error::Parse("policy file is not a full state-action table".into()));
    }
    let mut q = QTable::new(ns, na);
    for (s, a, v, n) in rows {
        q.values[s * na + a] = v;
        q.visits[s * na + a] = n;
    }
    Ok(q)
}
