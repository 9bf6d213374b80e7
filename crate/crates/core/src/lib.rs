//! Asynchronous penalty-based distributed stochastic gradient descent over
//! time-varying directed networks with lossy, interference-limited links.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: directed graphs, union graphs, strong connectivity and the
//!   stochastic topology schedule.
//! * [`channel`]: additive SINR model, correlated Markov fading bank,
//!   Chernoff failure bound and the epsilon-greedy power rule.
//! * [`protocol`]: belief vectors, timestamp merging, flooding plans and
//!   age-of-information bookkeeping.
//! * [`optimizer`]: step-size and penalty schedules, the asynchronous update
//!   and the assumption validators.
//! * [`coverage`]: the stochastic sensor coverage benchmark.
//! * [`aoi_analysis`]: stochastic-dominance tail bounds and their empirical
//!   checks.
//! * [`engine`]: the slotted simulation loop and replication runner.
//! * [`scenario`]: declarative scenario files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aoi_analysis;
pub mod channel;
pub mod coverage;
pub mod engine;
pub mod error;
pub mod graph;
pub mod optimizer;
pub mod par;
pub mod protocol;
pub mod rng;
pub mod scenario;
pub mod stats;

pub use error::{Error, Result};
