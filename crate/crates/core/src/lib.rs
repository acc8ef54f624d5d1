//! Discrete-time dropout hazard modelling on weekly learning-analytics data.

pub mod censoring;
pub mod config;
pub mod csvio;
pub mod curves;
pub mod endpoint;
pub mod evaluation;
pub mod error;
pub mod hazard;
pub mod ingestion;
pub mod leakage;
pub mod metrics;
pub mod person_period;
pub mod pipeline;
pub mod policy;
pub mod rng;
pub mod splitting;
pub mod subgroup;
pub mod synth;

pub use error::{Error, Result};
pub use ingestion::{Enrollment, EnrollmentKey, FinalResult};
pub use person_period::PersonPeriodTable;
