use super::env::{EnvStep, WorldModel};
use super::replay::{Provenance, TransitionRecord};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub fn clip_reward(r: f64, r_max: f64) -> f64 {
    r.clamp(-r_max, r_max)
}

/// Synthetic transition for a step: every new order's outcome is sampled from
/// the model at decision time. The next state is the real one unless
/// `synthetic_next` is set.
pub fn impute_synthetic_transition<I, M: WorldModel<I>>(
    step: &EnvStep<I>,
    model: &M,
    rng: &mut Rng,
    synthetic_next: bool,
    r_max: f64,
) -> TransitionRecord {
    let r_del: f64 = step.new_items.iter().map(|p| model.sample_label(&p.item, rng)).sum();
    let s_next = if synthetic_next { model.synthetic_next(step, rng) } else { step.s_next };
    TransitionRecord {
        s: step.s,
        a: step.a,
        reward_target: clip_reward(step.r_imm + r_del, r_max),
        s_next,
        provenance: Provenance::Imputed,
        epoch: step.epoch,
        terminal: step.terminal,
        forced: false,
        available_at: step.epoch,
    }
}

/// `r_imm + m + 1{matured} (r_del - m)`.
pub fn doubly_robust_target(r_imm: f64, m: f64, matured: bool, r_del: Option<f64>) -> Result<f64> {
    match (matured, r_del) {
        (true, Some(d)) => Ok(r_imm + m + (d - m)),
        (true, None) => Err(Error::Invalid("matured label without a delayed reward".into())),
        (false, _) => Ok(r_imm + m),
    }
}
