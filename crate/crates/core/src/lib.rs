//! Temporal colour constancy models with saliency modules, plus the
//! instrumentation needed to audit whether the saliency is faithful:
//! mask interventions, divergence metrics, statistical verdicts, and a
//! desk-scale training harness.

pub mod autodiff;
pub mod dataio;
pub mod error;
pub mod harness;
pub mod interventions;
pub mod metrics;
pub mod model;
pub mod stats;
pub mod verdicts;

pub use error::{Result, SalvetError};
