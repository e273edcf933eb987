//! Delay estimators used by earlier delayed-hit policies, and the exact
//! after-the-fact aggregate delay of a fetch window.

use serde::{Deserialize, Serialize};

use crate::model::TraceRecord;

/// Wait of a request arriving `offset` ms after a miss whose fetch takes `z`.
#[inline]
pub fn remaining_wait(z: f64, offset: f64) -> f64 {
    (z - offset).max(0.0)
}

/// Exact aggregate delay of the fetch started by the miss at `trace[miss]`:
/// the miss latency `z` plus the remaining wait of every later request for the
/// same object that arrives before the fetch completes at `t + z`.
///
/// Requests sharing the miss timestamp but listed after it are inside the
/// window (they wait the full `z`); a request landing exactly on `t + z`
/// finds the object already fetched and adds nothing.
pub fn expost_aggregate_delay(trace: &[TraceRecord], miss: usize, z: f64) -> f64 {
    let TraceRecord {
        time: t, object_id, ..
    } = trace[miss];
    let done = t + z;
    let mut total = z;
    for r in trace[miss + 1..].iter().take_while(|r| r.time < done) {
        if r.object_id == object_id {
            total += remaining_wait(z, r.time - t);
        }
    }
    total
}

/// Running arithmetic mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningMean {
    count: u64,
    sum: f64,
}

impl RunningMean {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

impl FromIterator<f64> for RunningMean {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = RunningMean::default();
        iter.into_iter().for_each(|x| m.push(x));
        m
    }
}

/// MAD estimate: mean of completed per-fetch aggregate delays, or `z` for an
/// object with no completed fetch yet.
pub fn mad_estimate(history: &RunningMean, z: f64) -> f64 {
    history.mean().unwrap_or(z)
}

/// LAC estimate `(1 + 1 / (1 + lambda z)) z / 2`.
pub fn lac_estimate(lambda: f64, z: f64) -> f64 {
    (1.0 + 1.0 / (1.0 + lambda * z)) * z / 2.0
}

/// CALA estimate `(1 - gamma) AggDelay + gamma z^2`.
pub fn cala_estimate(agg_delay: f64, z: f64, gamma: f64) -> f64 {
    (1.0 - gamma) * agg_delay + gamma * z * z
}
