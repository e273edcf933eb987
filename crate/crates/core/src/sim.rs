//! Event-driven trace replay with in-flight fetch tracking.
//!
//! A request for a resident object is a hit (latency 0). A request for an
//! object whose fetch is still outstanding is a delayed hit and waits for the
//! rest of that fetch. Any other request is a miss: it pays the full fetch
//! latency `z` and starts a fetch that completes at `t + z`. Only at
//! completion does the object enter the cache, evicting the lowest-ranked
//! residents if space is short.
//!
//! Completions are processed before requests that carry the same timestamp,
//! so a request landing exactly on `t + z` is a hit.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::remaining_wait;
use crate::error::{Error, Result};
use crate::model::{CacheConfig, LatencyModel, ObjectId, PolicyConfig, TraceRecord};
use crate::policy::{select_victims, Candidate, EvictionPolicy, Policy, RankScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Hit,
    Miss,
    #[serde(rename = "delayed")]
    DelayedHit,
}

impl RequestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RequestKind::Hit => "hit",
            RequestKind::Miss => "miss",
            RequestKind::DelayedHit => "delayed",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub hits: u64,
    pub misses: u64,
    pub delayed_hits: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.hits + self.misses + self.delayed_hits
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub requests: u64,
    pub counts: Counts,
    pub total_latency: f64,
}

/// One fetch from the remote source and the delay it caused.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FetchWindow {
    pub object_id: ObjectId,
    /// Index of the missing request in the trace.
    pub miss_index: usize,
    pub start: f64,
    pub z: f64,
    pub done: f64,
    /// Miss latency plus every delayed-hit wait in the window.
    pub aggregate_delay: f64,
    pub delayed_hits: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvictionRecord {
    pub time: f64,
    pub incoming: ObjectId,
    pub victim: ObjectId,
    pub score: RankScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub policy: PolicyConfig,
    pub capacity: u64,
    pub latency: LatencyModel,
    pub seed: u64,
    pub num_requests: usize,
    pub total_latency: f64,
    pub counts: Counts,
    pub evictions: u64,
    pub per_request_latencies: Vec<f64>,
    pub request_kinds: Vec<RequestKind>,
    pub per_object: BTreeMap<ObjectId, ObjectSummary>,
    pub fetches: Vec<FetchWindow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eviction_log: Option<Vec<EvictionRecord>>,
}

impl SimReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Copy without the per-request, per-fetch and eviction vectors. Totals,
    /// counts and per-object summaries are kept.
    pub fn summary(&self) -> SimReport {
        SimReport {
            per_request_latencies: Vec::new(),
            request_kinds: Vec::new(),
            fetches: Vec::new(),
            eviction_log: None,
            per_object: self.per_object.clone(),
            ..*self
        }
    }

    /// `request_index,time_ms,object_id,kind,latency_ms`, one row per request.
    pub fn write_request_csv<W: Write>(&self, trace: &[TraceRecord], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "request_index",
            "time_ms",
            "object_id",
            "kind",
            "latency_ms",
        ])?;
        for (i, ((r, kind), lat)) in trace
            .iter()
            .zip(&self.request_kinds)
            .zip(&self.per_request_latencies)
            .enumerate()
        {
            w.write_record([
                i.to_string(),
                r.time.to_string(),
                r.object_id.to_string(),
                kind.as_str().to_string(),
                lat.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Eviction decisions, when they were recorded.
    pub fn write_eviction_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "time_ms",
            "incoming_object",
            "victim",
            "rank",
            "mean_term",
            "sigma_term",
            "residual_ms",
            "size_bytes",
        ])?;
        for e in self.eviction_log.iter().flatten() {
            w.write_record([
                e.time.to_string(),
                e.incoming.to_string(),
                e.victim.to_string(),
                e.score.value.to_string(),
                e.score.mean_term.to_string(),
                e.score.sigma_term.to_string(),
                e.score.residual.to_string(),
                e.score.size.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimOptions {
    pub record_evictions: bool,
    /// Check the capacity invariant after every event, not only periodically.
    pub check_every_event: bool,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    done: f64,
    seq: u64,
    object: ObjectId,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // min-heap on (done, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .done
            .total_cmp(&self.done)
            .then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy)]
struct InFlight {
    fetch: usize,
    size: u64,
}

/// Residents, in-flight fetches and byte accounting.
#[derive(Debug, Default)]
pub struct CacheState {
    resident: BTreeMap<ObjectId, u64>,
    in_flight: HashMap<ObjectId, InFlight>,
    used_bytes: u64,
}

impl CacheState {
    pub fn used_bytes(&self) -> u64 {
        self.used_bytes
    }

    pub fn is_resident(&self, object: ObjectId) -> bool {
        self.resident.contains_key(&object)
    }

    pub fn resident_count(&self) -> usize {
        self.resident.len()
    }

    fn check(&self, capacity: u64) -> Result<()> {
        let sum: u64 = self.resident.values().sum();
        if sum != self.used_bytes || sum > capacity {
            return Err(Error::CapacityViolation {
                needed: sum,
                available: capacity,
            });
        }
        debug_assert!(self
            .in_flight
            .keys()
            .all(|k| !self.resident.contains_key(k)));
        Ok(())
    }
}

/// Checks the preconditions of a run: time order and `size < capacity`.
pub fn validate_trace(trace: &[TraceRecord], capacity: u64) -> Result<()> {
    let mut previous = f64::NEG_INFINITY;
    for (index, r) in trace.iter().enumerate() {
        if !r.time.is_finite() || r.time < previous {
            return Err(Error::UnsortedTrace {
                index,
                time: r.time,
                previous,
            });
        }
        previous = r.time;
        if r.size == 0 || r.size >= capacity {
            return Err(Error::ObjectTooLarge {
                object: r.object_id,
                size: r.size,
                capacity,
            });
        }
    }
    Ok(())
}

/// Replays `trace` under the policy named in `config`.
pub fn simulate(
    trace: &[TraceRecord],
    config: &CacheConfig,
    latency: &LatencyModel,
) -> Result<SimReport> {
    let mut policy = Policy::new(config.policy)?;
    simulate_with(trace, config, latency, &mut policy, SimOptions::default())
}

pub fn simulate_with(
    trace: &[TraceRecord],
    config: &CacheConfig,
    latency: &LatencyModel,
    policy: &mut dyn EvictionPolicy,
    options: SimOptions,
) -> Result<SimReport> {
    config.validate()?;
    latency.validate()?;
    validate_trace(trace, config.capacity)?;

    let mut engine = Engine {
        capacity: config.capacity,
        state: CacheState::default(),
        queue: BinaryHeap::new(),
        fetches: Vec::new(),
        seq: 0,
        evictions: 0,
        log: options.record_evictions.then(Vec::new),
        check_every_event: options.check_every_event || cfg!(debug_assertions),
        events: 0,
    };

    let mut latencies = Vec::with_capacity(trace.len());
    let mut kinds = Vec::with_capacity(trace.len());
    let mut per_object: BTreeMap<ObjectId, ObjectSummary> = BTreeMap::new();
    let mut counts = Counts::default();

    for (index, record) in trace.iter().enumerate() {
        let t = record.time;
        engine.complete_until(t, latency, policy)?;

        let z = latency.latency_unchecked(record.size);
        let id = record.object_id;
        let (kind, lat) = if engine.state.is_resident(id) {
            (RequestKind::Hit, 0.0)
        } else if let Some(f) = engine.state.in_flight.get(&id) {
            let fetch = &mut engine.fetches[f.fetch];
            let wait = remaining_wait(fetch.z, t - fetch.start);
            fetch.aggregate_delay += wait;
            fetch.delayed_hits += 1;
            (RequestKind::DelayedHit, wait)
        } else {
            engine.start_fetch(index, record, z);
            (RequestKind::Miss, z)
        };

        match kind {
            RequestKind::Hit => counts.hits += 1,
            RequestKind::Miss => counts.misses += 1,
            RequestKind::DelayedHit => counts.delayed_hits += 1,
        }
        let summary = per_object.entry(id).or_default();
        summary.requests += 1;
        summary.total_latency += lat;
        match kind {
            RequestKind::Hit => summary.counts.hits += 1,
            RequestKind::Miss => summary.counts.misses += 1,
            RequestKind::DelayedHit => summary.counts.delayed_hits += 1,
        }
        latencies.push(lat);
        kinds.push(kind);

        policy.on_request(record, z)?;
        engine.tick()?;
    }
    engine.complete_until(f64::INFINITY, latency, policy)?;
    engine.state.check(engine.capacity)?;

    Ok(SimReport {
        policy: *policy.config(),
        capacity: config.capacity,
        latency: *latency,
        seed: config.seed,
        num_requests: trace.len(),
        total_latency: latencies.iter().sum(),
        counts,
        evictions: engine.evictions,
        per_request_latencies: latencies,
        request_kinds: kinds,
        per_object,
        fetches: engine.fetches,
        eviction_log: engine.log,
    })
}

struct Engine {
    capacity: u64,
    state: CacheState,
    queue: BinaryHeap<Pending>,
    fetches: Vec<FetchWindow>,
    seq: u64,
    evictions: u64,
    log: Option<Vec<EvictionRecord>>,
    check_every_event: bool,
    events: u64,
}

impl Engine {
    const CHECK_INTERVAL: u64 = 1024;

    fn tick(&mut self) -> Result<()> {
        self.events += 1;
        if self.check_every_event || self.events.is_multiple_of(Self::CHECK_INTERVAL) {
            self.state.check(self.capacity)?;
        }
        Ok(())
    }

    fn start_fetch(&mut self, index: usize, record: &TraceRecord, z: f64) {
        let done = record.time + z;
        self.state.in_flight.insert(
            record.object_id,
            InFlight {
                fetch: self.fetches.len(),
                size: record.size,
            },
        );
        self.fetches.push(FetchWindow {
            object_id: record.object_id,
            miss_index: index,
            start: record.time,
            z,
            done,
            aggregate_delay: z,
            delayed_hits: 0,
        });
        self.queue.push(Pending {
            done,
            seq: self.seq,
            object: record.object_id,
        });
        self.seq += 1;
    }

    /// Processes every fetch completing at or before `t`.
    fn complete_until(
        &mut self,
        t: f64,
        latency: &LatencyModel,
        policy: &mut dyn EvictionPolicy,
    ) -> Result<()> {
        while self.queue.peek().is_some_and(|p| p.done <= t) {
            let Pending { done, object, .. } = self.queue.pop().expect("peeked");
            let f = self
                .state
                .in_flight
                .remove(&object)
                .expect("every queued fetch is in flight");
            self.admit(object, f.size, done, latency, &*policy)?;
            self.tick()?;
        }
        Ok(())
    }

    fn admit(
        &mut self,
        object: ObjectId,
        size: u64,
        now: f64,
        latency: &LatencyModel,
        policy: &dyn EvictionPolicy,
    ) -> Result<()> {
        let needed = (self.state.used_bytes + size).saturating_sub(self.capacity);
        if needed > 0 {
            let mut scores = BTreeMap::new();
            let mut candidates = Vec::with_capacity(self.state.resident.len());
            for (&id, &sz) in &self.state.resident {
                let score = policy.rank(id, sz, latency.latency_unchecked(sz), now)?;
                candidates.push(Candidate {
                    object_id: id,
                    size: sz,
                    rank: score.value,
                    last_access: policy.last_access(id),
                    in_flight: false,
                });
                scores.insert(id, score);
            }
            for victim in select_victims(&candidates, needed)? {
                let sz = self
                    .state
                    .resident
                    .remove(&victim)
                    .expect("victims are resident");
                self.state.used_bytes -= sz;
                self.evictions += 1;
                if let Some(log) = self.log.as_mut() {
                    log.push(EvictionRecord {
                        time: now,
                        incoming: object,
                        victim,
                        score: scores[&victim],
                    });
                }
            }
        }
        self.state.resident.insert(object, size);
        self.state.used_bytes += size;
        if self.state.used_bytes > self.capacity {
            return Err(Error::CapacityViolation {
                needed: self.state.used_bytes,
                available: self.capacity,
            });
        }
        Ok(())
    }
}

/// One cell of a [`run_matrix`] grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub trace: usize,
    pub config: usize,
    pub report: std::result::Result<SimReport, String>,
}

/// Runs every `(trace, config)` pair; cells run in parallel and share
/// nothing. A failing cell is reported in place without stopping the grid.
pub fn run_matrix(
    traces: &[Vec<TraceRecord>],
    configs: &[(CacheConfig, LatencyModel)],
) -> Vec<MatrixCell> {
    let cells: Vec<(usize, usize)> = (0..traces.len())
        .flat_map(|t| (0..configs.len()).map(move |c| (t, c)))
        .collect();
    cells
        .into_par_iter()
        .map(|(t, c)| {
            let (cfg, lat) = &configs[c];
            MatrixCell {
                trace: t,
                config: c,
                report: simulate(&traces[t], cfg, lat).map_err(|e| e.to_string()),
            }
        })
        .collect()
}
