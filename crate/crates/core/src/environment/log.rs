use std::path::Path;

use serde::Serialize;

use super::{realized_cashflow, EnvConfig, StepOutcome};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeLogRow {
    pub epoch: usize,
    pub inventory: usize,
    pub action_index: usize,
    pub price: f64,
    pub immediate_revenue: f64,
    pub n_new_orders: usize,
    pub n_matured: usize,
    pub realized_cashflow: f64,
}

pub fn episode_log(config: &EnvConfig, steps: &[StepOutcome]) -> Vec<EpisodeLogRow> {
    steps
        .iter()
        .map(|o| EpisodeLogRow {
            epoch: o.epoch,
            inventory: o.inventory,
            action_index: o.action,
            price: config.price_levels[o.action],
            immediate_revenue: o.immediate_revenue,
            n_new_orders: o.new_orders.len(),
            n_matured: o.matured_shocks.len(),
            realized_cashflow: realized_cashflow(o),
        })
        .collect()
}

pub fn write_episode_log(path: &Path, rows: &[EpisodeLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
