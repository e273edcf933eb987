//! Aggregate delay under Poisson arrivals.
//!
//! A miss on object `i` at time `t` starts a fetch that completes at
//! `t + z`. Every further request for `i` inside that window waits for the
//! remainder of the fetch. The aggregate delay `D` is the miss latency plus
//! all those waits. When requests for `i` form a Poisson process of rate
//! `lambda`, the number `k` of requests inside the window is Poisson with
//! mean `lambda * z` and, given `k`, `D - z` is a sum of `k` independent
//! `U(0, z)` waits (a scaled Irwin-Hall variable). `D` therefore has an atom
//! of weight `exp(-lambda z)` at `z` plus a continuous Poisson mixture.

mod distribution;
mod estimators;
mod ks;
mod moments;
pub mod quadrature;
mod sampling;

pub use distribution::{
    conditional_cdf, conditional_pdf, conditional_pdf_with_threshold, poisson_count_pmf,
    DelayDistribution, MixtureDensity, GAUSSIAN_SWITCH_K, POISSON_TAIL_TOLERANCE,
};
pub use estimators::{
    cala_estimate, expost_aggregate_delay, lac_estimate, mad_estimate, remaining_wait, RunningMean,
};
pub use ks::ks_statistic;
pub use moments::{conditional_moments, delay_moments, gaussian_approx, normal_pdf, MomentPair};
pub use sampling::{sample_aggregate_delay, DelaySampler};
