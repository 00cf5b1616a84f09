//! Threshold optimization, analysis and simulation for multiuser
//! switched-diversity scheduling, with a full-feedback selection benchmark.

// `!(x >= 0.0)` is how NaN gets rejected along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Reference values in tests keep all the digits they were derived with.
#![cfg_attr(test, allow(clippy::excessive_precision))]

pub mod analytics;
pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod metrics;
pub mod numerics;
pub mod optimize;
pub mod region;
pub mod report;
pub mod seld;
pub mod sim;

pub use analytics::{expected_rates, Scenario, ThresholdVector, User};
pub use channel::{ChannelModel, RateDistribution};
pub use error::{Error, Result};
pub use metrics::Unit;
pub use optimize::{optimize, Objective, OptimizationResult};
pub use report::{PerformanceReport, Provenance, UserPerformance};
