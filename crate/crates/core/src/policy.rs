//! Eviction policies for caches with delayed hits.
//!
//! Every policy except LRU ranks a cached object by an estimate of the delay
//! its next miss would cost, divided by `R * s` where `R` is the estimated
//! time to its next request and `s` its size. The lowest-ranked objects are
//! evicted first. Policies differ only in the delay estimate:
//!
//! | kind      | delay estimate                                   |
//! |-----------|--------------------------------------------------|
//! | `LRU_MAD` | mean as-if-miss aggregate delay                  |
//! | `LAC`     | `(1 + 1/(1 + lambda z)) z / 2`                   |
//! | `CALA`    | `(1 - gamma) MAD + gamma z^2`                    |
//! | `VA_CDH`  | `z (1 + lambda z / 2) + omega z sqrt(lambda z / 3)` |
//!
//! LAC and CALA are reduced to their delay estimators inside this common
//! `R * s` normalisation; they are not full re-implementations of the
//! original systems.
//!
//! Arrival rates are re-estimated from a tumbling learning window of `S`
//! requests: once `S` requests have been seen, every object that collected
//! inter-arrival samples in the window gets `lambda = 1 / mean gap`, and the
//! window starts over. Objects without samples keep their previous estimate
//! (zero until first estimated).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::analytics::{cala_estimate, delay_moments, lac_estimate, mad_estimate, RunningMean};
use crate::error::{Error, Result};
use crate::model::{ObjectId, PolicyConfig, PolicyKind, TraceRecord};

/// Smallest residual time used in a rank (one microsecond).
pub const RESIDUAL_FLOOR_MS: f64 = 1e-3;

/// Arrival rate from inter-arrival samples; `None` when there are none.
pub fn estimate_lambda(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    Some(1.0 / mean.max(RESIDUAL_FLOOR_MS))
}

/// Residual-time estimate: time elapsed since the last arrival.
pub fn estimate_residual(now: f64, last_arrival: f64) -> f64 {
    (now - last_arrival).max(RESIDUAL_FLOOR_MS)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankScore {
    pub value: f64,
    /// Mean delay estimate (numerator without the spread term).
    pub mean_term: f64,
    /// `omega * sigma`; zero for every policy but VA-CDH.
    pub sigma_term: f64,
    pub residual: f64,
    pub size: u64,
}

/// Variance-aware rank
/// `(z (1 + lambda z / 2) + omega z sqrt(lambda z / 3)) / (R s)`.
pub fn rank_va_cdh(lambda: f64, z: f64, residual: f64, size: u64, omega: f64) -> Result<RankScore> {
    check_rank_inputs(z, residual, size)?;
    let mean_term = delay_moments(lambda, z).mean;
    let sigma_term = omega * z * (lambda * z / 3.0).sqrt();
    Ok(RankScore {
        value: (mean_term + sigma_term) / (residual * size as f64),
        mean_term,
        sigma_term,
        residual,
        size,
    })
}

fn check_rank_inputs(z: f64, residual: f64, size: u64) -> Result<()> {
    if !(residual > 0.0) {
        return Err(Error::invalid(format!(
            "residual must be positive, got {residual}"
        )));
    }
    if size == 0 {
        return Err(Error::invalid("size must be positive"));
    }
    if !(z > 0.0) {
        return Err(Error::invalid(format!("z must be positive, got {z}")));
    }
    Ok(())
}

/// Everything a rank function may look at for one cached object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankInputs {
    pub last_access: f64,
    pub lambda: f64,
    pub z: f64,
    pub residual: f64,
    pub size: u64,
    /// Mean of completed as-if-miss aggregate delays, if any.
    pub mad_mean: Option<f64>,
}

/// Rank under any policy kind. LRU ranks by last access time.
pub fn rank_baseline(config: &PolicyConfig, inputs: &RankInputs) -> Result<RankScore> {
    let RankInputs {
        last_access,
        lambda,
        z,
        residual,
        size,
        mad_mean,
    } = *inputs;
    if config.kind == PolicyKind::VaCdh {
        return rank_va_cdh(lambda, z, residual, size, config.omega);
    }
    check_rank_inputs(z, residual, size)?;
    let mad = || mad_estimate(&mad_mean.into_iter().collect(), z);
    let mean_term = match config.kind {
        PolicyKind::Lru => {
            return Ok(RankScore {
                value: last_access,
                mean_term: 0.0,
                sigma_term: 0.0,
                residual,
                size,
            })
        }
        PolicyKind::LruMad => mad(),
        PolicyKind::Lac => lac_estimate(lambda, z),
        PolicyKind::Cala => cala_estimate(mad(), z, config.gamma),
        PolicyKind::VaCdh => unreachable!(),
    };
    Ok(RankScore {
        value: mean_term / (residual * size as f64),
        mean_term,
        sigma_term: 0.0,
        residual,
        size,
    })
}

/// An eviction candidate as seen by [`select_victims`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub object_id: ObjectId,
    pub size: u64,
    pub rank: f64,
    pub last_access: f64,
    /// In-flight objects are not cached yet and are never evicted.
    pub in_flight: bool,
}

/// Picks victims lowest rank first until at least `needed_bytes` are freed.
/// Equal ranks fall back to least recent access, then to the smaller id.
pub fn select_victims(candidates: &[Candidate], needed_bytes: u64) -> Result<Vec<ObjectId>> {
    if needed_bytes == 0 {
        return Ok(Vec::new());
    }
    let mut order: Vec<&Candidate> = candidates.iter().filter(|c| !c.in_flight).collect();
    let available: u64 = order.iter().map(|c| c.size).sum();
    if available < needed_bytes {
        return Err(Error::CapacityViolation {
            needed: needed_bytes,
            available,
        });
    }
    order.sort_by(|a, b| {
        a.rank
            .total_cmp(&b.rank)
            .then(a.last_access.total_cmp(&b.last_access))
            .then(a.object_id.cmp(&b.object_id))
    });
    let mut freed = 0u64;
    let mut victims = Vec::new();
    for c in order {
        if freed >= needed_bytes {
            break;
        }
        freed += c.size;
        victims.push(c.object_id);
    }
    Ok(victims)
}

/// Fixed-capacity request buffer that is cleared whenever it fills.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningWindow {
    capacity: usize,
    entries: Vec<(f64, ObjectId)>,
}

impl LearningWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            entries: Vec::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Returns `true` once the window holds `capacity` entries.
    pub fn push(&mut self, time: f64, object: ObjectId) -> bool {
        self.entries.push((time, object));
        self.entries.len() >= self.capacity
    }

    pub fn entries(&self) -> &[(f64, ObjectId)] {
        &self.entries
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// One as-if-miss fetch window still open.
#[derive(Debug, Clone, Copy, PartialEq)]
struct OpenWindow {
    start: f64,
    z: f64,
    done: f64,
    delay: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjectState {
    pub object_id: ObjectId,
    pub size: u64,
    pub last_arrival: Option<f64>,
    /// Gaps observed since the learning window last restarted.
    pub inter_arrival_samples: Vec<f64>,
    pub lambda_hat: f64,
    /// Completed as-if-miss aggregate delays.
    pub agg_delay_history: RunningMean,
    open: Vec<OpenWindow>,
}

impl ObjectState {
    fn new(object_id: ObjectId, size: u64) -> Self {
        Self {
            object_id,
            size,
            ..Self::default()
        }
    }

    /// MAD history including windows that have closed by `now`.
    pub fn agg_delay_mean_at(&self, now: f64) -> Option<f64> {
        let mut h = self.agg_delay_history;
        self.open
            .iter()
            .filter(|w| w.done <= now)
            .for_each(|w| h.push(w.delay));
        h.mean()
    }

    /// Treats the request at `t` as a miss with fetch time `z`: it adds its
    /// wait to every earlier virtual window still open and opens its own.
    fn track_as_if_miss(&mut self, t: f64, z: f64) {
        let history = &mut self.agg_delay_history;
        self.open.retain_mut(|w| {
            if t < w.done {
                w.delay += crate::analytics::remaining_wait(w.z, t - w.start);
                true
            } else {
                history.push(w.delay);
                false
            }
        });
        self.open.push(OpenWindow {
            start: t,
            z,
            done: t + z,
            delay: z,
        });
    }
}

/// Per-object arrival statistics shared by all delay-aware policies.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalTracker {
    objects: HashMap<ObjectId, ObjectState>,
    window: LearningWindow,
    last_time: f64,
    track_mad: bool,
}

impl ArrivalTracker {
    pub fn new(window_size: usize, track_mad: bool) -> Self {
        Self {
            objects: HashMap::new(),
            window: LearningWindow::new(window_size),
            last_time: f64::NEG_INFINITY,
            track_mad,
        }
    }

    pub fn on_request(&mut self, record: &TraceRecord, z: f64) -> Result<()> {
        let t = record.time;
        if t < self.last_time {
            return Err(Error::UnsortedTrace {
                index: self.window.len(),
                time: t,
                previous: self.last_time,
            });
        }
        self.last_time = t;
        let state = self
            .objects
            .entry(record.object_id)
            .or_insert_with(|| ObjectState::new(record.object_id, record.size));
        state.size = record.size;
        if let Some(prev) = state.last_arrival {
            state.inter_arrival_samples.push(t - prev);
        }
        state.last_arrival = Some(t);
        if self.track_mad {
            state.track_as_if_miss(t, z);
        }
        if self.window.push(t, record.object_id) {
            self.on_window_full();
        }
        Ok(())
    }

    /// Re-estimates the rate of every object seen in the window from that
    /// window's samples, then restarts the window.
    pub fn on_window_full(&mut self) {
        for &(_, id) in self.window.entries() {
            if let Some(state) = self.objects.get_mut(&id) {
                if let Some(lambda) = estimate_lambda(&state.inter_arrival_samples) {
                    state.lambda_hat = lambda;
                }
                state.inter_arrival_samples.clear();
            }
        }
        self.window.clear();
    }

    pub fn object(&self, id: ObjectId) -> Option<&ObjectState> {
        self.objects.get(&id)
    }

    pub fn window(&self) -> &LearningWindow {
        &self.window
    }

    pub fn lambda_hat(&self, id: ObjectId) -> f64 {
        self.objects.get(&id).map_or(0.0, |s| s.lambda_hat)
    }
}

/// Hooks the simulator drives. Implementations hold single-run mutable state.
pub trait EvictionPolicy {
    fn config(&self) -> &PolicyConfig;

    /// Called for every request, in trace order, after it has been served.
    fn on_request(&mut self, record: &TraceRecord, z: f64) -> Result<()>;

    /// Rank of a cached object at time `now`; lower is evicted first.
    fn rank(&self, object: ObjectId, size: u64, z: f64, now: f64) -> Result<RankScore>;

    fn last_access(&self, object: ObjectId) -> f64;
}

/// The built-in policies, all sharing one [`ArrivalTracker`].
#[derive(Debug, Clone)]
pub struct Policy {
    config: PolicyConfig,
    tracker: ArrivalTracker,
}

impl Policy {
    pub fn new(config: PolicyConfig) -> Result<Self> {
        config.validate()?;
        let track_mad = matches!(config.kind, PolicyKind::LruMad | PolicyKind::Cala);
        Ok(Self {
            config,
            tracker: ArrivalTracker::new(config.window_size, track_mad),
        })
    }

    pub fn tracker(&self) -> &ArrivalTracker {
        &self.tracker
    }

    pub fn inputs(&self, object: ObjectId, size: u64, z: f64, now: f64) -> RankInputs {
        let state = self.tracker.object(object);
        let last_access = state
            .and_then(|s| s.last_arrival)
            .unwrap_or(f64::NEG_INFINITY);
        RankInputs {
            last_access,
            lambda: state.map_or(0.0, |s| s.lambda_hat),
            z,
            residual: if last_access.is_finite() {
                estimate_residual(now, last_access)
            } else {
                f64::INFINITY
            },
            size,
            mad_mean: state.and_then(|s| s.agg_delay_mean_at(now)),
        }
    }
}

impl EvictionPolicy for Policy {
    fn config(&self) -> &PolicyConfig {
        &self.config
    }

    fn on_request(&mut self, record: &TraceRecord, z: f64) -> Result<()> {
        self.tracker.on_request(record, z)
    }

    fn rank(&self, object: ObjectId, size: u64, z: f64, now: f64) -> Result<RankScore> {
        rank_baseline(&self.config, &self.inputs(object, size, z, now))
    }

    fn last_access(&self, object: ObjectId) -> f64 {
        self.tracker
            .object(object)
            .and_then(|s| s.last_arrival)
            .unwrap_or(f64::NEG_INFINITY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cand(id: u64, size: u64, rank: f64, last: f64) -> Candidate {
        Candidate {
            object_id: id,
            size,
            rank,
            last_access: last,
            in_flight: false,
        }
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(estimate_lambda(&[2.0, 2.0, 2.0]), Some(0.5));
        assert_eq!(estimate_lambda(&[1.0, 3.0]), Some(0.5));
        assert_eq!(estimate_lambda(&[]), None);
        assert_eq!(estimate_lambda(&[0.0]), Some(1.0 / RESIDUAL_FLOOR_MS));
    }

    #[test]
    fn residual_examples() {
        assert_eq!(estimate_residual(100.0, 90.0), 10.0);
        assert_eq!(estimate_residual(100.0, 100.0), RESIDUAL_FLOOR_MS);
        assert!(estimate_residual(100.0, 50.0) > estimate_residual(100.0, 60.0));
    }

    #[test]
    fn va_cdh_examples() {
        let r = rank_va_cdh(0.0, 10.0, 2.0, 4, 0.0).unwrap();
        assert_eq!(r.value, 10.0 / 8.0);
        // (35 + 10 sqrt(5/3)) / 8, by hand: 10 * 1.2909944487358056 = 12.909944487358056
        let r = rank_va_cdh(0.5, 10.0, 2.0, 4, 1.0).unwrap();
        assert_relative_eq!(r.value, 47.909944487358056 / 8.0, max_relative = 1e-14);
        assert_relative_eq!(r.value, 5.988743060919757, max_relative = 1e-14);
        let half = rank_va_cdh(0.5, 10.0, 2.0, 8, 1.0).unwrap();
        assert_eq!(half.value, r.value / 2.0);
        assert!(rank_va_cdh(0.5, 10.0, 0.0, 4, 1.0).is_err());
        assert!(rank_va_cdh(0.5, 10.0, 1.0, 0, 1.0).is_err());
    }

    #[test]
    fn baseline_examples() {
        let inputs = RankInputs {
            last_access: 3.0,
            lambda: 0.5,
            z: 10.0,
            residual: 2.0,
            size: 4,
            mad_mean: Some(13.0),
        };
        let mut cfg = PolicyConfig::of_kind(PolicyKind::Cala);
        cfg.gamma = 1.0;
        assert_eq!(rank_baseline(&cfg, &inputs).unwrap().value, 100.0 / 8.0);

        let lac = rank_baseline(&PolicyConfig::of_kind(PolicyKind::Lac), &inputs).unwrap();
        assert_relative_eq!(lac.value, (35.0 / 6.0) / 8.0, max_relative = 1e-15);
        let mut va = PolicyConfig::of_kind(PolicyKind::VaCdh);
        va.omega = 0.0;
        let va = rank_baseline(&va, &inputs).unwrap();
        assert_eq!(va.value, 35.0 / 8.0);
        assert_ne!(va.value, lac.value);

        let mad = rank_baseline(&PolicyConfig::of_kind(PolicyKind::LruMad), &inputs).unwrap();
        assert_eq!(mad.value, 13.0 / 8.0);
        let cold = RankInputs {
            mad_mean: None,
            ..inputs
        };
        let mad = rank_baseline(&PolicyConfig::of_kind(PolicyKind::LruMad), &cold).unwrap();
        assert_eq!(mad.value, 10.0 / 8.0);
    }

    #[test]
    fn lru_evicts_oldest_first() {
        let cfg = PolicyConfig::of_kind(PolicyKind::Lru);
        let cands: Vec<Candidate> = [(0u64, 1.0), (1, 5.0), (2, 3.0)]
            .iter()
            .map(|&(id, t)| {
                let inputs = RankInputs {
                    last_access: t,
                    lambda: 0.0,
                    z: 1.0,
                    residual: 1.0,
                    size: 1,
                    mad_mean: None,
                };
                cand(id, 1, rank_baseline(&cfg, &inputs).unwrap().value, t)
            })
            .collect();
        assert_eq!(select_victims(&cands, 3).unwrap(), vec![0, 2, 1]);
    }

    #[test]
    fn victim_examples() {
        let cands = [cand(7, 10, 1.0, 0.0), cand(8, 10, 2.0, 0.0)];
        assert!(select_victims(&cands, 0).unwrap().is_empty());
        assert_eq!(select_victims(&cands, 10).unwrap(), vec![7]);
        assert_eq!(select_victims(&cands, 11).unwrap(), vec![7, 8]);
        assert!(matches!(
            select_victims(&cands, 21),
            Err(Error::CapacityViolation {
                needed: 21,
                available: 20
            })
        ));
    }

    #[test]
    fn victim_ties() {
        let cands = [
            cand(3, 1, 1.0, 5.0),
            cand(2, 1, 1.0, 5.0),
            cand(1, 1, 1.0, 9.0),
            cand(0, 1, 0.5, 9.0),
        ];
        assert_eq!(select_victims(&cands, 4).unwrap(), vec![0, 2, 3, 1]);
    }

    #[test]
    fn in_flight_never_victims() {
        let mut c = cand(1, 100, 0.0, 0.0);
        c.in_flight = true;
        let cands = [c, cand(2, 5, 9.0, 0.0)];
        assert_eq!(select_victims(&cands, 5).unwrap(), vec![2]);
        assert!(select_victims(&cands, 6).is_err());
    }

    #[test]
    fn window_hand_trace() {
        // S = 3, requests A, B, A
        let mut t = ArrivalTracker::new(3, false);
        t.on_request(&TraceRecord::new(0.0, 0, 1), 1.0).unwrap();
        t.on_request(&TraceRecord::new(1.0, 1, 1), 1.0).unwrap();
        assert_eq!(t.window().len(), 2);
        assert_eq!(t.lambda_hat(0), 0.0);
        t.on_request(&TraceRecord::new(4.0, 0, 1), 1.0).unwrap();
        assert!(t.window().is_empty());
        assert_eq!(t.lambda_hat(0), 0.25);
        assert_eq!(t.lambda_hat(1), 0.0);
        assert!(t.object(0).unwrap().inter_arrival_samples.is_empty());

        // next window only sees B twice: A keeps its estimate
        t.on_request(&TraceRecord::new(5.0, 1, 1), 1.0).unwrap();
        t.on_request(&TraceRecord::new(7.0, 1, 1), 1.0).unwrap();
        t.on_request(&TraceRecord::new(8.0, 2, 1), 1.0).unwrap();
        assert_eq!(t.lambda_hat(0), 0.25);
        // B gaps: 4 (from t=1), 2 -> mean 3
        assert_eq!(t.lambda_hat(1), 1.0 / 3.0);
    }

    #[test]
    fn out_of_order_rejected() {
        let mut t = ArrivalTracker::new(10, false);
        t.on_request(&TraceRecord::new(5.0, 0, 1), 1.0).unwrap();
        assert!(t.on_request(&TraceRecord::new(4.0, 0, 1), 1.0).is_err());
    }

    #[test]
    fn as_if_miss_history() {
        let mut t = ArrivalTracker::new(100, true);
        // z = 4: requests at 0, 1, 3 -> window from 0 accumulates 4 + 3 + 1
        for &time in &[0.0, 1.0, 3.0] {
            t.on_request(&TraceRecord::new(time, 0, 1), 4.0).unwrap();
        }
        let s = t.object(0).unwrap();
        assert_eq!(s.agg_delay_history.count(), 0);
        // at 4 the first window closes (8); at 5 the second (4 + 2 = 6);
        // at 7 the third (4)
        assert_eq!(s.agg_delay_mean_at(4.0), Some(8.0));
        assert_eq!(s.agg_delay_mean_at(5.0), Some(7.0));
        assert_eq!(s.agg_delay_mean_at(7.0), Some(6.0));
        t.on_request(&TraceRecord::new(20.0, 0, 1), 4.0).unwrap();
        let s = t.object(0).unwrap();
        assert_eq!(s.agg_delay_history.count(), 3);
        assert_eq!(s.agg_delay_history.mean(), Some(6.0));
    }

    #[test]
    fn same_stream_same_state() {
        let recs: Vec<TraceRecord> = (0..500)
            .map(|i| TraceRecord::new(i as f64 * 0.7, (i * 7 % 13) as u64, 1 + (i % 5) as u64))
            .collect();
        let run = || {
            let mut p = Policy::new(PolicyConfig {
                kind: PolicyKind::Cala,
                window_size: 17,
                ..PolicyConfig::default()
            })
            .unwrap();
            for r in &recs {
                p.on_request(r, 2.5).unwrap();
            }
            p
        };
        assert_eq!(run().tracker, run().tracker);
    }

    proptest! {
        #[test]
        fn omega_zero_is_mean_only(
            lambda in 0.0f64..5.0, z in 0.01f64..100.0, r in 1e-3f64..1e4, s in 1u64..1_000_000_000
        ) {
            let score = rank_va_cdh(lambda, z, r, s, 0.0).unwrap();
            prop_assert_eq!(score.sigma_term, 0.0);
            prop_assert_eq!(score.value, delay_moments(lambda, z).mean / (r * s as f64));
        }

        #[test]
        fn rank_monotonicity(
            lambda in 0.0f64..5.0, z in 0.01f64..100.0, r in 1e-3f64..1e4,
            s in 1u64..1_000_000, omega in 0.01f64..4.0
        ) {
            let base = rank_va_cdh(lambda, z, r, s, omega).unwrap().value;
            prop_assert!(rank_va_cdh(lambda * 1.5 + 0.01, z, r, s, omega).unwrap().value > base);
            prop_assert!(rank_va_cdh(lambda, z, r * 1.5, s, omega).unwrap().value < base);
            prop_assert!(rank_va_cdh(lambda, z, r, s * 2, omega).unwrap().value < base);
        }

        #[test]
        fn lambda_order_invariant(mut gaps in proptest::collection::vec(0.01f64..100.0, 1..50)) {
            let a = estimate_lambda(&gaps).unwrap();
            gaps.sort_by(f64::total_cmp);
            let b = estimate_lambda(&gaps).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }

        #[test]
        fn victims_free_enough(
            items in proptest::collection::vec((1u64..100, 0.0f64..10.0, any::<bool>()), 1..20),
            frac in 0.0f64..1.0
        ) {
            let cands: Vec<Candidate> = items
                .iter()
                .enumerate()
                .map(|(i, &(size, rank, fl))| Candidate {
                    object_id: i as u64, size, rank, last_access: i as f64, in_flight: fl,
                })
                .collect();
            let evictable: u64 = cands.iter().filter(|c| !c.in_flight).map(|c| c.size).sum();
            let need = (evictable as f64 * frac) as u64;
            let victims = select_victims(&cands, need).unwrap();
            let freed: u64 = victims.iter().map(|&v| cands[v as usize].size).sum();
            prop_assert!(freed >= need);
            prop_assert!(victims.iter().all(|&v| !cands[v as usize].in_flight));
        }
    }
}
