//! Experiment harness: JSON configs in, CSV tables and a manifest out.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod window;

pub use config::{ExperimentConfig, ExperimentKind, InitialState, Method};
pub use error::{HarnessError, Result};
pub use experiments::{gce_json, gce_predict, run, RunOptions, RunSummary};
pub use window::{measure_window, Window};
