//! Next-token decoding as constrained dynamics on the probability simplex.
//!
//! * [`simplex`]: domain types, softmax / log-partition duality, entropy, KL and faces.
//! * [`mirror`]: the exact KL-prox step, the multiplicative-weights step and an
//!   iteration driver with ascent certificates.
//! * [`replicator`]: literal and entropic replicator fields, a simplex-preserving
//!   integrator, temperature schedules and effective time.
//! * [`path_fields`]: state-dependent scores `s(p) = s0 + Bp`, curl diagnostics,
//!   recurrence and lock-in probes.
//! * [`oracles`]: independent reference computations and the claim adjudication matrix.

pub mod error;
pub mod mirror;
mod numeric;
pub mod oracles;
pub mod path_fields;
pub mod replicator;
pub mod simplex;

pub use error::{Error, Result};
pub use mirror::{MirrorStepKind, StepSize};
pub use replicator::{FieldKind, TemperatureSchedule, TrajectoryRecord};
pub use simplex::{FaceMask, ScoreVector, SimplexPoint, Temperature};
