//! C ABI for the `vacdh` simulator.
//!
//! Traces and reports are opaque handles owned by the caller and released
//! with the matching `*_free` function. Every fallible call returns a
//! [`VacdhStatus`]; on failure the message is available from
//! [`vacdh_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use vacdh::analytics::{delay_moments, DelayDistribution};
use vacdh::policy::rank_va_cdh;
use vacdh::workload::{self, ArrivalProcess, ColumnMap, DecreasingTime, SyntheticSpec};
use vacdh::{CacheConfig, Error, LatencyModel, PolicyConfig, PolicyKind, SimReport, TraceRecord};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VacdhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    UnsortedTrace = 4,
    ObjectTooLarge = 5,
    CapacityViolation = 6,
    MalformedInput = 7,
    Io = 8,
    OutOfRange = 9,
    Internal = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VacdhPolicyKind {
    Lru = 0,
    LruMad = 1,
    Lac = 2,
    Cala = 3,
    VaCdh = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VacdhPolicyConfig {
    pub kind: VacdhPolicyKind,
    pub omega: f64,
    pub gamma: f64,
    pub window_size: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VacdhCounts {
    pub hits: u64,
    pub misses: u64,
    pub delayed_hits: u64,
}

/// Request kind codes returned by [`vacdh_report_request`].
pub const VACDH_KIND_HIT: i32 = 0;
pub const VACDH_KIND_MISS: i32 = 1;
pub const VACDH_KIND_DELAYED_HIT: i32 = 2;

/// Opaque request trace.
pub struct VacdhTrace {
    records: Vec<TraceRecord>,
}

/// Opaque simulation report.
pub struct VacdhReport {
    report: SimReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

enum Failure {
    Null(&'static str),
    Range(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn status_of(e: &Error) -> VacdhStatus {
    match e {
        Error::InvalidArgument(_) | Error::UnknownObject(_) => VacdhStatus::InvalidArgument,
        Error::InvalidConfig(_) | Error::Json(_) => VacdhStatus::InvalidConfig,
        Error::UnsortedTrace { .. } => VacdhStatus::UnsortedTrace,
        Error::ObjectTooLarge { .. } => VacdhStatus::ObjectTooLarge,
        Error::CapacityViolation { .. } => VacdhStatus::CapacityViolation,
        Error::MalformedRow { .. } | Error::Csv(_) => VacdhStatus::MalformedInput,
        Error::Io(_) => VacdhStatus::Io,
        Error::Validation(_) => VacdhStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VacdhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VacdhStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            VacdhStatus::NullPointer
        }
        Ok(Err(Failure::Range(msg))) => {
            set_error(msg);
            VacdhStatus::OutOfRange
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            VacdhStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or(Failure::Null(what))
}

impl From<VacdhPolicyKind> for PolicyKind {
    fn from(k: VacdhPolicyKind) -> Self {
        match k {
            VacdhPolicyKind::Lru => PolicyKind::Lru,
            VacdhPolicyKind::LruMad => PolicyKind::LruMad,
            VacdhPolicyKind::Lac => PolicyKind::Lac,
            VacdhPolicyKind::Cala => PolicyKind::Cala,
            VacdhPolicyKind::VaCdh => PolicyKind::VaCdh,
        }
    }
}

impl From<VacdhPolicyConfig> for PolicyConfig {
    fn from(c: VacdhPolicyConfig) -> Self {
        PolicyConfig {
            kind: c.kind.into(),
            omega: c.omega,
            gamma: c.gamma,
            window_size: c.window_size,
        }
    }
}

/// Message for the last failing call on this thread, or an empty string.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn vacdh_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Default parameters for `kind`.
#[no_mangle]
pub extern "C" fn vacdh_policy_default(kind: VacdhPolicyKind) -> VacdhPolicyConfig {
    let p = PolicyConfig::of_kind(kind.into());
    VacdhPolicyConfig {
        kind,
        omega: p.omega,
        gamma: p.gamma,
        window_size: p.window_size,
    }
}

/// New empty trace. Never returns null.
#[no_mangle]
pub extern "C" fn vacdh_trace_new() -> *mut VacdhTrace {
    Box::into_raw(Box::new(VacdhTrace {
        records: Vec::new(),
    }))
}

/// # Safety
/// `trace` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vacdh_trace_free(trace: *mut VacdhTrace) {
    if !trace.is_null() {
        drop(unsafe { Box::from_raw(trace) });
    }
}

/// Appends one request. Times must not decrease.
///
/// # Safety
/// `trace` must be a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn vacdh_trace_push(
    trace: *mut VacdhTrace,
    time_ms: f64,
    object_id: u64,
    size_bytes: u64,
) -> VacdhStatus {
    guard(|| {
        let t = unsafe { deref_mut(trace, "trace") }?;
        if !time_ms.is_finite() || size_bytes == 0 {
            return Err(Error::InvalidArgument(format!(
                "need a finite time and a positive size, got time={time_ms} size={size_bytes}"
            ))
            .into());
        }
        if let Some(prev) = t.records.last() {
            if time_ms < prev.time {
                return Err(Error::UnsortedTrace {
                    index: t.records.len(),
                    time: time_ms,
                    previous: prev.time,
                }
                .into());
            }
        }
        t.records
            .push(TraceRecord::new(time_ms, object_id, size_bytes));
        Ok(())
    })
}

/// Number of requests; 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn vacdh_trace_len(trace: *const VacdhTrace) -> usize {
    unsafe { trace.as_ref() }.map_or(0, |t| t.records.len())
}

/// Loads a CSV trace with columns `time_ms,object_id,size_bytes`. String
/// object keys are mapped to dense ids in order of first appearance.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn vacdh_trace_load_csv(
    path: *const c_char,
    out: *mut *mut VacdhTrace,
) -> VacdhStatus {
    guard(|| {
        let path = unsafe { CStr::from_ptr(deref(path, "path")?) };
        let out = unsafe { deref_mut(out, "out") }?;
        let path = path
            .to_str()
            .map_err(|_| Error::InvalidArgument("path is not UTF-8".into()))?;
        let t = workload::ingest_csv(path, &ColumnMap::default(), DecreasingTime::Fail)?;
        *out = Box::into_raw(Box::new(VacdhTrace { records: t.records }));
        Ok(())
    })
}

/// Synthetic Zipf trace. `rate` is the aggregate request rate per ms;
/// `pareto` selects heavy-tailed gaps with the same mean.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn vacdh_trace_generate(
    num_requests: usize,
    num_objects: usize,
    zipf_exponent: f64,
    min_size: u64,
    max_size: u64,
    rate: f64,
    pareto: bool,
    seed: u64,
    out: *mut *mut VacdhTrace,
) -> VacdhStatus {
    guard(|| {
        let out = unsafe { deref_mut(out, "out") }?;
        let arrival = if pareto {
            ArrivalProcess::pareto_matching_rate(rate)
        } else {
            ArrivalProcess::Poisson { rate }
        };
        let records = workload::generate(&SyntheticSpec {
            num_requests,
            num_objects,
            zipf_exponent,
            size_range: [min_size, max_size],
            arrival,
            seed,
        })?;
        *out = Box::into_raw(Box::new(VacdhTrace { records }));
        Ok(())
    })
}

/// Replays `trace` through a cache of `capacity` bytes. Fetch latency is
/// `latency_base_ms + latency_coeff * size`.
///
/// # Safety
/// `trace` and `policy` must be valid pointers and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vacdh_simulate(
    trace: *const VacdhTrace,
    capacity: u64,
    policy: *const VacdhPolicyConfig,
    latency_base_ms: f64,
    latency_coeff: f64,
    out: *mut *mut VacdhReport,
) -> VacdhStatus {
    guard(|| {
        let t = unsafe { deref(trace, "trace") }?;
        let p = unsafe { deref(policy, "policy") }?;
        let out = unsafe { deref_mut(out, "out") }?;
        let latency = LatencyModel::new(latency_base_ms, latency_coeff)?;
        let config = CacheConfig::new(capacity, (*p).into());
        let report = vacdh::simulate(&t.records, &config, &latency)?;
        *out = Box::into_raw(Box::new(VacdhReport { report }));
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vacdh_report_free(report: *mut VacdhReport) {
    if !report.is_null() {
        drop(unsafe { Box::from_raw(report) });
    }
}

/// Sum of per-request latencies in ms; NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn vacdh_report_total_latency(report: *const VacdhReport) -> f64 {
    unsafe { report.as_ref() }.map_or(f64::NAN, |r| r.report.total_latency)
}

/// # Safety
/// `report` must be a live report handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vacdh_report_counts(
    report: *const VacdhReport,
    out: *mut VacdhCounts,
) -> VacdhStatus {
    guard(|| {
        let r = unsafe { deref(report, "report") }?;
        let out = unsafe { deref_mut(out, "out") }?;
        let c = r.report.counts;
        *out = VacdhCounts {
            hits: c.hits,
            misses: c.misses,
            delayed_hits: c.delayed_hits,
        };
        Ok(())
    })
}

/// Latency and kind (`VACDH_KIND_*`) of request `index`.
///
/// # Safety
/// `report` must be a live report handle; `latency_ms` and `kind` writable.
#[no_mangle]
pub unsafe extern "C" fn vacdh_report_request(
    report: *const VacdhReport,
    index: usize,
    latency_ms: *mut f64,
    kind: *mut i32,
) -> VacdhStatus {
    guard(|| {
        let r = &unsafe { deref(report, "report") }?.report;
        let latency_ms = unsafe { deref_mut(latency_ms, "latency_ms") }?;
        let kind = unsafe { deref_mut(kind, "kind") }?;
        let n = r.per_request_latencies.len();
        if index >= n {
            return Err(Failure::Range(format!(
                "request {index} out of range ({n} requests)"
            )));
        }
        *latency_ms = r.per_request_latencies[index];
        *kind = match r.request_kinds[index] {
            vacdh::sim::RequestKind::Hit => VACDH_KIND_HIT,
            vacdh::sim::RequestKind::Miss => VACDH_KIND_MISS,
            vacdh::sim::RequestKind::DelayedHit => VACDH_KIND_DELAYED_HIT,
        };
        Ok(())
    })
}

/// Full report as JSON; free with [`vacdh_string_free`].
///
/// # Safety
/// `report` must be a live report handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vacdh_report_to_json(
    report: *const VacdhReport,
    out: *mut *mut c_char,
) -> VacdhStatus {
    guard(|| {
        let r = unsafe { deref(report, "report") }?;
        let out = unsafe { deref_mut(out, "out") }?;
        let json = r.report.to_json()?;
        *out = CString::new(json)
            .map_err(|_| Error::InvalidArgument("report contains NUL".into()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vacdh_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Mean and variance of the aggregate delay.
///
/// # Safety
/// `mean` and `variance` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vacdh_delay_moments(
    lambda: f64,
    z: f64,
    mean: *mut f64,
    variance: *mut f64,
) -> VacdhStatus {
    guard(|| {
        let mean = unsafe { deref_mut(mean, "mean") }?;
        let variance = unsafe { deref_mut(variance, "variance") }?;
        if !(lambda >= 0.0 && lambda.is_finite() && z > 0.0 && z.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need lambda >= 0 and z > 0, got lambda={lambda} z={z}"
            ))
            .into());
        }
        let m = delay_moments(lambda, z);
        *mean = m.mean;
        *variance = m.variance;
        Ok(())
    })
}

/// Density of the aggregate delay at `d`: the point mass at `z` is written
/// to `atom_weight` and the continuous density to `continuous`.
///
/// # Safety
/// `atom_weight` and `continuous` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vacdh_delay_pdf(
    lambda: f64,
    z: f64,
    d: f64,
    atom_weight: *mut f64,
    continuous: *mut f64,
) -> VacdhStatus {
    guard(|| {
        let atom_weight = unsafe { deref_mut(atom_weight, "atom_weight") }?;
        let continuous = unsafe { deref_mut(continuous, "continuous") }?;
        let m = DelayDistribution::new(lambda, z)?.mixture_pdf(d);
        *atom_weight = m.atom_weight;
        *continuous = m.continuous;
        Ok(())
    })
}

/// `P(D <= d)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vacdh_delay_cdf(
    lambda: f64,
    z: f64,
    d: f64,
    out: *mut f64,
) -> VacdhStatus {
    guard(|| {
        let out = unsafe { deref_mut(out, "out") }?;
        *out = DelayDistribution::new(lambda, z)?.mixture_cdf(d);
        Ok(())
    })
}

/// VA-CDH eviction score; lower values are evicted first.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vacdh_rank(
    lambda: f64,
    z: f64,
    residual_ms: f64,
    size_bytes: u64,
    omega: f64,
    out: *mut f64,
) -> VacdhStatus {
    guard(|| {
        let out = unsafe { deref_mut(out, "out") }?;
        *out = rank_va_cdh(lambda, z, residual_ms, size_bytes, omega)?.value;
        Ok(())
    })
}
