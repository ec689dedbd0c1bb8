//! Trains bound vectors that tighten a chosen functional bound while keeping
//! the noncrossing probability at the required level.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod network;
pub mod objective;
pub mod train;

pub use config::OptimizerConfig;
pub use objective::{ConstantObjective, FnObjective, Objective, QbrmObjective, QbrmTerm, Scope};
pub use train::{
    enforce_constraint, parameterize, split_optimize_apply, stage1_fit, stage1_model, stage2_optimize, train_bound,
    LogEntry, Model, SplitOutcome, Stage1Report, TrainedBound,
};
