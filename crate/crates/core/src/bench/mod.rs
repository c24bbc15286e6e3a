//! Experiment protocols, their execution, and the statistics used to read
//! them.

mod protocol;
mod report;
mod run;
mod stats;

pub use protocol::{
    preset, Calibration, FamilyKind, Preset, Protocol, Scenario, WorldSpec, COMPETITION_FACTORS, DEMAND_FACTORS,
    QUADRATIC_LEVELS,
};
pub use report::{emit_report, read_runs_csv, write_curves_csv, write_runs_csv, write_summary_csv, BenchManifest};
pub use run::{agent_params, relative_difference, run_protocol, summarize, RunRecord, ScenarioStat};
pub use stats::{
    beta_inc, cohens_d, holm_bonferroni, ln_gamma, t_cdf, t_quantile, t_sf, tost, tost_summary, welch_t, HolmResult,
    TostResult, WelchResult,
};
