//! Simulation core for nonlinear memristive-crossbar PUF primitives.
//!
//! The crate models analog resistive crosspoint devices with process
//! variation, solves the passive crossbar network they form under arbitrary
//! bias configurations, and builds the challenge/response and metric layers
//! of a crossbar PUF on top of the solver:
//!
//! - [`device`]: single-crosspoint I-V model, pulse switching and
//!   process-variation sampling.
//! - [`crossbar`]: array topology, bias configurations, the Newton nodal
//!   solver and conductance-map CSV I/O.
//! - [`tuning`]: write-verify programming, target-distribution generation
//!   and the rattling reconfiguration routine.
//! - [`puf`]: challenge unranking, single-bit/keyed responses, bias-code
//!   encoding and the two-layer composed primitive.
//! - [`metrics`]: uniformity, diffuseness, bit-error-rate and uniqueness
//!   statistics over 64-bit response packets.
//! - [`environment`]: read noise, supply variation, drift and temperature
//!   models used by the reliability protocols.
//! - [`rng`]: named, reproducible random substreams.

pub mod crossbar;
pub mod device;
pub mod environment;
pub mod metrics;
pub mod puf;
pub mod rng;
pub mod tuning;

pub use crossbar::{BiasConfig, ConductanceGrid, CrossbarArray, Line, LineRole, SolveResult};
pub use device::{DeviceParams, DeviceState, ProcessVariation};
pub use environment::PerturbationModel;
pub use metrics::MetricsReport;
pub use puf::{Challenge, ChallengeSpace, ResponseKey};
pub use tuning::{TargetDistribution, TuningPolicy};
