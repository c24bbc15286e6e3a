//! Delayed-feedback revenue management laboratory.
//!
//! Modules, bottom-up: [`behavior`] (ground-truth choice models),
//! [`environment`] (booking simulator), [`dcm`] (agent-side logit),
//! [`learners`] (maturity-buffer, imputation and doubly-robust agents, MPC),
//! [`theory`] (oracle checks) and [`bench`] (protocols and statistics).

pub mod behavior;
pub mod bench;
pub mod dcm;
pub mod environment;
pub mod error;
pub mod learners;
pub mod manifest;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
