//! Trace-driven cache simulation with exact delayed-hit accounting.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: trace records, the fetch-latency model and run configuration.
//! - [`workload`]: synthetic Zipf traces and CSV ingestion.
//! - [`analytics`]: the aggregate-delay distribution under Poisson arrivals,
//!   its moments, a Monte Carlo sampler and the delay estimators used by
//!   prior delayed-hit policies.
//! - [`policy`]: arrival-rate tracking and the eviction rankings (LRU,
//!   LRU-MAD, LAC, CALA and the variance-aware VA-CDH rank).
//! - [`sim`]: the event-driven replay engine.
//! - [`bench`]: experiment drivers behind the `vacdh` command line tool.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod bench;
pub mod error;
pub mod model;
pub mod policy;
pub mod sim;
pub mod workload;

pub use error::{Error, Result};
pub use model::{CacheConfig, LatencyModel, ObjectId, PolicyConfig, PolicyKind, TraceRecord};
pub use policy::{EvictionPolicy, RankScore};
pub use sim::{simulate, SimReport};
