//! Link-level simulator and receivers for uplink grant-free SCMA.
//!
//! The crate models an uplink in which a sparse, unknown subset of K
//! potential users transmits simultaneously over B reused subcarrier blocks,
//! each user spreading its symbols over a few subcarriers of a sparse
//! codebook. The receiver must estimate the multipath channels, detect which
//! users are active, and decode their data jointly, starting from nothing
//! but short orthogonal pilots.
//!
//! Main pieces:
//!
//! - [`config`]: system parameters and their invariants.
//! - [`pattern`]: the sparse user/subcarrier incidence structure.
//! - [`codebook`]: sparse multi-dimensional constellations with file I/O.
//! - [`channel`]: activity, tapped-delay fading, and the received signal.
//! - [`pilot`]: orthogonal Zadoff-Chu pilots and the pilot-only ML estimate.
//! - [`receiver`]: the joint moment-matching receiver (data detection,
//!   data-aided channel estimation, variational activity detection).
//! - [`baseline`]: genie-aided exact MPA and the mean-field joint receiver.
//! - [`harness`]: seeded Monte Carlo sweeps, scoring, CSV output.

pub mod baseline;
pub mod channel;
pub mod codebook;
pub mod config;
pub mod error;
pub mod harness;
pub mod msg;
pub mod pattern;
pub mod pilot;
pub mod receiver;

pub use config::SystemConfig;
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, MetricsRecord, ReceiverKind};
pub use msg::{DiscreteMsg, GaussMsg};
pub use pattern::FactorGraphPattern;
pub use receiver::{ReceiverOutput, ReceiverState};
