//! Fitting and applying hyperparameter scaling laws for language-model
//! training: the AdamW timescale law for weight decay, optimal and critical
//! batch-size laws, and the training-time versus compute Pareto frontier.
//!
//! Every pipeline consumes [`run_store::RunRecord`]s and can be exercised end
//! to end against [`synth_world`], a closed-form world with planted laws.

pub mod batch_laws;
pub mod ema_sim;
pub mod fit_core;
pub mod frontier;
mod numeric;
pub mod run_store;
pub mod synth_world;
pub mod timescale;
