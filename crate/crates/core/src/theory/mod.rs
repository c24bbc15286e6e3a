//! Oracle checks of the convergence and approximation results.

mod convergence;
mod drmoments;
mod extrapolation;
mod maturation;
mod mdp;
mod report;
mod simlemma;

pub use convergence::{
    convergence_trace, geometric_grid, loglog_slope, rate_mdp, ConvergenceTrace, ErrorSchedule, TRACE_EPSILON,
};
pub use drmoments::{dr_grid, dr_grid_check, dr_moment_check, DrCell, DrMomentReport, GRID_EPS};
pub use extrapolation::{
    extrapolation_bound_check, extrapolation_sweep, nearest_distance, softmax_lipschitz_suite, LinearChoiceReward,
    ReferenceInstance, SoftmaxLipschitzReport, SOFTMAX_TOL,
};
pub use maturation::{expected_unmatured, maturation_curve, MaturationReport};
pub use mdp::{greedy_actions, sup_distance, value_iteration, SmallMdp, MAX_ACTIONS, MAX_STATES};
pub use report::{summary_table, write_jsonl, BoundReport, BOUND_SLACK};
pub use simlemma::{perturb_mdp, perturb_row, simulation_bound, simulation_lemma_check, simulation_lemma_sweep};
