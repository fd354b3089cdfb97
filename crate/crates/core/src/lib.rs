//! Simulation and detection for non-orthogonal type-based random access in
//! a fog radio access network.
//!
//! Sensors that observe the same event share one codebook and send the
//! codeword of their local estimate. Edge nodes forward either a quantized
//! copy of what they receive (quantize-and-forward) or quantized local
//! LLRs (detect-and-forward) to a central processor, which recovers the
//! event states with GAMP and a group-sparse denoiser.

// `!(x > 0.0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod denoiser;
pub mod detection;
pub mod error;
pub mod experiment;
pub mod fronthaul;
pub mod gamp;
pub mod metrics;
pub mod rng;
pub mod scenario;

pub use config::{
    derive_prior, validate, CodebookKind, DeviceAssignment, DtfAllocation, EventPrior,
    FronthaulConfig, FronthaulScheme, ObservationModel, PowerEstimateMode, SystemConfig,
    ValidationReport,
};
pub use denoiser::{EventPosterior, GroupPrior, LlrMatrix};
pub use detection::{decide, fuse_llrs, optimize_threshold, DecisionVector, ThresholdPolicy};
pub use error::{Error, Result};
pub use gamp::{run_gamp, GampOptions};
pub use metrics::{Accumulator, MetricsReport};
pub use scenario::{Codebook, EventStateVector, Trial};
