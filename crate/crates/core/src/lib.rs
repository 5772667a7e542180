//! Covariant error-correcting codes built from finite quantum clocks.
//!
//! The crate simulates the encode, error, clock measurement and decode steps
//! exactly at small dimension and evaluates worst-case fidelities.

pub mod align;
pub mod cli;
pub mod clock;
pub mod codes;
pub mod error;
pub mod fidelity;
pub mod linalg;
pub mod phase3;
pub mod verify;
pub mod pipeline;

pub use clock::{ClockKind, ClockSpec, ClockState, Generator};
pub use codes::{BaseCode, CovariantCode, KrausChannel};
pub use error::{Error, Result};
pub use fidelity::FidelityReport;
pub use pipeline::{ChannelMatrix, ConditionedState, KAlphaPolicy, OutcomeRecord};
