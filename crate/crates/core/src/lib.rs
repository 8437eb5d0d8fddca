//! Feasibility determination for simulated systems under probability
//! constraints.
//!
//! Each system produces Bernoulli indicators, one per constraint, per
//! simulation replication. For every constraint the decision maker supplies
//! one or more thresholds `h` and asks whether `p <= h`. Decisions use an
//! odds-ratio indifference zone `theta > 1`: systems whose odds sit within a
//! factor `theta` of the threshold's odds may be declared either way.
//!
//! The crate is organised bottom-up:
//!
//! - [`odds`]: closed-form analytics (error allocation, half-widths,
//!   classification, absorption probabilities, stopping times, tolerance
//!   conversions for the batch-means baseline).
//! - [`streams`]: replayable counter-based random streams.
//! - [`testbeds`]: observation sources (synthetic Bernoulli systems and an
//!   `(s, S)` inventory simulator).
//! - [`brf`]: the statistically valid first pass.
//! - [`multipass`]: later passes for thresholds added after the fact.
//! - [`rf`]: the batch-means baseline procedure.
//! - [`harness`]: macro-replication experiments and CSV reports.
//! - [`session`]: interactive multi-pass sessions with JSON snapshots.

pub mod brf;
pub mod error;
pub mod harness;
pub mod multipass;
pub mod odds;
pub mod rf;
pub mod session;
pub mod streams;
pub mod testbeds;

pub use brf::{
    Decision, DecisionEntry, DecisionMatrix, PassObs, PassPlan, ProblemSpec, SamplingMode,
    SystemState,
};
pub use error::{Error, Result};
pub use multipass::{Heuristic, SessionState};
pub use odds::{Classification, ErrorSplitScheme, OddsRatio};
pub use testbeds::{ObservationSource, SourceConfig, Testbed};
