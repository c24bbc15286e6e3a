use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::protocol::{Calibration, Protocol, Scenario, WorldSpec};
use super::stats::{cohens_d, holm_bonferroni, tost_summary, welch_t, TostResult};
use crate::behavior::ReferenceWorld;
use crate::dcm::{calibrate, generate_dataset, DcmParams, FitOptions};
use crate::error::{Error, Result};
use crate::learners::{evaluate_policy, train_agent, BookingEnv, BookingWorldModel, CurvePoint, Method};
use crate::rng;

const EVAL_SEED_SALT: u64 = 0x00E7_A15E_ED00_0001;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub method: Method,
    pub seed: u64,
    pub eval_mean: f64,
    pub eval_sd: f64,
    pub eval_episodes: usize,
    /// Realized cashflow of the last training episode.
    pub final_train_cashflow: f64,
    #[serde(skip)]
    pub curve: Vec<CurvePoint>,
    pub wall_ms: u64,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Choice-model parameters the agent sees when trained in `world`.
pub fn agent_params(world: &WorldSpec, protocol: &Protocol, reference: &ReferenceWorld) -> Result<DcmParams> {
    let cfg = world.env_config(&protocol.env);
    let spec = world.behavior(reference, cfg.episode_length);
    match &protocol.calibration {
        Calibration::Exact => Ok(DcmParams::from_segment(&spec.theta, cfg.demand_scale, cfg.competition_scale)),
        Calibration::Fitted { n_bookings, seed } => {
            let data = generate_dataset(&spec, &cfg, *n_bookings, *seed)?;
            Ok(calibrate(&data, cfg.n_room_types, &FitOptions::default())?.0)
        }
    }
}

fn run_cell(
    protocol: &Protocol,
    reference: &ReferenceWorld,
    scenario: &Scenario,
    model: Option<&BookingWorldModel>,
    method: Method,
    seed: u64,
) -> Result<(f64, f64, usize, f64, Vec<CurvePoint>)> {
    let train_cfg = scenario.train.env_config(&protocol.env);
    let mut env = BookingEnv::new(train_cfg.clone(), scenario.train.behavior(reference, train_cfg.episode_length))?;
    let out = train_agent(&mut env, model, method, protocol.variant, &protocol.train, seed)?;
    let ew = scenario.eval_world();
    let eval_cfg = ew.env_config(&protocol.env);
    let mut eval_env = BookingEnv::new(eval_cfg.clone(), ew.behavior(reference, eval_cfg.episode_length))?;
    let stats = evaluate_policy(&mut eval_env, &out.policy, protocol.eval_episodes, rng::derive(seed, EVAL_SEED_SALT))?;
    let last = out.curve.last().map_or(0.0, |c| c.train_cashflow);
    Ok((stats.mean, stats.sd, stats.episodes.len(), last, out.curve))
}

/// Runs every (scenario, method, seed) cell. Records come back in that
/// nesting order whatever the thread count; a failing cell is recorded
/// with its error and does not stop the others.
pub fn run_protocol(protocol: &Protocol, jobs: Option<usize>) -> Result<Vec<RunRecord>> {
    protocol.validate()?;
    let reference = ReferenceWorld::load();
    let needs_model = protocol.methods.iter().any(|m| m.needs_model());
    // One fitted model per distinct training world.
    let mut worlds: Vec<WorldSpec> = Vec::new();
    for s in &protocol.scenarios {
        if !worlds.contains(&s.train) {
            worlds.push(s.train.clone());
        }
    }
    let models: Vec<Option<BookingWorldModel>> = if needs_model {
        worlds
            .iter()
            .map(|w| {
                let params = agent_params(w, protocol, &reference)?;
                BookingWorldModel::new(params, w.env_config(&protocol.env)).map(Some)
            })
            .collect::<Result<_>>()?
    } else {
        vec![None; worlds.len()]
    };
    let mut cells = Vec::new();
    for s in &protocol.scenarios {
        let wi = worlds.iter().position(|w| *w == s.train).expect("listed above");
        for &m in &protocol.methods {
            for &seed in &protocol.seeds {
                cells.push((s, wi, m, seed));
            }
        }
    }
    let work = || {
        cells
            .par_iter()
            .map(|&(s, wi, method, seed)| {
                let t = Instant::now();
                let res = run_cell(protocol, &reference, s, models[wi].as_ref(), method, seed);
                let wall_ms = t.elapsed().as_millis() as u64;
                let base = RunRecord {
                    scenario: s.name.clone(),
                    method,
                    seed,
                    eval_mean: f64::NAN,
                    eval_sd: f64::NAN,
                    eval_episodes: 0,
                    final_train_cashflow: f64::NAN,
                    curve: Vec::new(),
                    wall_ms,
                    error: None,
                };
                match res {
                    Ok((mean, sd, n, last, curve)) => RunRecord {
                        eval_mean: mean,
                        eval_sd: sd,
                        eval_episodes: n,
                        final_train_cashflow: last,
                        curve,
                        ..base
                    },
                    Err(e) => RunRecord { error: Some(e.to_string()), ..base },
                }
            })
            .collect::<Vec<_>>()
    };
    let records = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Invalid(e.to_string()))?
            .install(work),
        None => work(),
    };
    Ok(records)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStat {
    pub scenario: String,
    pub control: Method,
    pub treatment: Method,
    pub n_control: usize,
    pub n_treatment: usize,
    pub mean_control: f64,
    pub mean_treatment: f64,
    /// `(treatment - control) / |control|`.
    pub rel_diff: f64,
    pub t: f64,
    pub df: f64,
    pub p_raw: f64,
    pub p_holm: f64,
    pub cohens_d: f64,
    pub significant: bool,
    pub tost: Option<TostResult>,
}

pub fn relative_difference(treatment: f64, control: f64) -> f64 {
    (treatment - control) / control.abs()
}

fn evals(records: &[RunRecord], scenario: &str, method: Method) -> Vec<f64> {
    records.iter().filter(|r| r.ok() && r.scenario == scenario && r.method == method).map(|r| r.eval_mean).collect()
}

/// Every non-control method against the control in every scenario, with Holm
/// correction across all comparisons in the protocol.
pub fn summarize(protocol: &Protocol, records: &[RunRecord]) -> Result<Vec<ScenarioStat>> {
    let mut rows = Vec::new();
    for s in &protocol.scenarios {
        let a = evals(records, &s.name, protocol.control);
        for &m in protocol.methods.iter().filter(|m| **m != protocol.control) {
            let b = evals(records, &s.name, m);
            let w = welch_t(&b, &a)?;
            let ma = a.iter().sum::<f64>() / a.len() as f64;
            let mb = b.iter().sum::<f64>() / b.len() as f64;
            let tost = match protocol.tost_margin {
                Some(f) if !w.degenerate => Some(tost_summary(w.mean_diff, w.se, w.df, f * ma.abs(), protocol.alpha)?),
                _ => None,
            };
            rows.push(ScenarioStat {
                scenario: s.name.clone(),
                control: protocol.control,
                treatment: m,
                n_control: a.len(),
                n_treatment: b.len(),
                mean_control: ma,
                mean_treatment: mb,
                rel_diff: relative_difference(mb, ma),
                t: w.t,
                df: w.df,
                p_raw: w.p,
                p_holm: f64::NAN,
                cohens_d: cohens_d(&b, &a).unwrap_or(0.0),
                significant: false,
                tost,
            });
        }
    }
    let p: Vec<f64> = rows.iter().map(|r| r.p_raw).collect();
    let holm = holm_bonferroni(&p, protocol.alpha)?;
    for (r, (adj, rej)) in rows.iter_mut().zip(holm.adjusted.iter().zip(&holm.reject)) {
        r.p_holm = *adj;
        r.significant = *rej;
    }
    Ok(rows)
}
