//! Synthetic trace generation and CSV trace ingestion.
//!
//! Synthetic traces use one global arrival process; each request picks its
//! object independently from a Zipf popularity law, so every per-object
//! sub-stream of a Poisson trace is itself Poisson (thinning).

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TraceRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "snake_case")]
pub enum ArrivalProcess {
    /// Exponential inter-arrival times with `rate` requests per ms.
    Poisson { rate: f64 },
    /// Pareto inter-arrival times, `scale` in ms.
    Pareto { shape: f64, scale: f64 },
}

impl ArrivalProcess {
    pub const DEFAULT_PARETO_SHAPE: f64 = 2.5;

    /// Pareto arrivals whose mean inter-arrival time equals `1 / rate`.
    pub fn pareto_matching_rate(rate: f64) -> Self {
        let shape = Self::DEFAULT_PARETO_SHAPE;
        ArrivalProcess::Pareto {
            shape,
            scale: (shape - 1.0) / (shape * rate),
        }
    }

    pub fn mean_interarrival(&self) -> f64 {
        match *self {
            ArrivalProcess::Poisson { rate } => 1.0 / rate,
            ArrivalProcess::Pareto { shape, scale } => {
                if shape > 1.0 {
                    shape * scale / (shape - 1.0)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ArrivalProcess::Poisson { rate } if !(rate.is_finite() && rate > 0.0) => Err(
                Error::InvalidConfig(format!("poisson rate must be positive, got {rate}")),
            ),
            ArrivalProcess::Pareto { shape, scale }
                if !(shape.is_finite() && shape > 0.0 && scale.is_finite() && scale > 0.0) =>
            {
                Err(Error::InvalidConfig(format!(
                    "pareto shape and scale must be positive, got shape={shape} scale={scale}"
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_requests: usize,
    pub num_objects: usize,
    pub zipf_exponent: f64,
    /// Inclusive `[min, max]` object size in bytes.
    pub size_range: [u64; 2],
    pub arrival: ArrivalProcess,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// 100K requests over 100 objects, Zipf(1.0), sizes U[1MB, 100MB] and
    /// Poisson arrivals at one request per millisecond.
    fn default() -> Self {
        Self {
            num_requests: 100_000,
            num_objects: 100,
            zipf_exponent: 1.0,
            size_range: [1_000_000, 100_000_000],
            arrival: ArrivalProcess::Poisson { rate: 1.0 },
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_requests == 0 {
            return Err(Error::InvalidConfig("num_requests must be positive".into()));
        }
        if self.num_objects == 0 {
            return Err(Error::InvalidConfig("num_objects must be positive".into()));
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "zipf_exponent must be positive, got {}",
                self.zipf_exponent
            )));
        }
        let [lo, hi] = self.size_range;
        if lo == 0 || hi < lo {
            return Err(Error::InvalidConfig(format!(
                "size_range must satisfy 1 <= min <= max, got [{lo}, {hi}]"
            )));
        }
        self.arrival.validate()
    }

    /// Normalised Zipf probabilities; index `r` is the object of rank `r + 1`.
    pub fn zipf_pmf(&self) -> Vec<f64> {
        let weights = zipf_weights(self.num_objects, self.zipf_exponent);
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }
}

fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    (1..=n).map(|r| (r as f64).powf(-exponent)).collect()
}

enum Gaps {
    Exp(Exp<f64>),
    Pareto(Pareto<f64>),
}

impl Gaps {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Gaps::Exp(d) => d.sample(rng),
            Gaps::Pareto(d) => d.sample(rng),
        }
    }
}

/// Generates a synthetic trace. Object `0` is the most popular.
pub fn generate(spec: &SyntheticSpec) -> Result<Vec<TraceRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let [lo, hi] = spec.size_range;
    let sizes: Vec<u64> = (0..spec.num_objects)
        .map(|_| rng.random_range(lo..=hi))
        .collect();

    let popularity = WeightedIndex::new(zipf_weights(spec.num_objects, spec.zipf_exponent))
        .map_err(|e| Error::InvalidConfig(format!("zipf weights: {e}")))?;
    let gaps = match spec.arrival {
        ArrivalProcess::Poisson { rate } => {
            Gaps::Exp(Exp::new(rate).map_err(|e| Error::InvalidConfig(e.to_string()))?)
        }
        ArrivalProcess::Pareto { shape, scale } => Gaps::Pareto(
            Pareto::new(scale, shape).map_err(|e| Error::InvalidConfig(e.to_string()))?,
        ),
    };

    let mut out = Vec::with_capacity(spec.num_requests);
    let mut now = 0.0f64;
    for _ in 0..spec.num_requests {
        let next = now + gaps.sample(&mut rng);
        now = if next > now { next } else { now.next_up() };
        let object = popularity.sample(&mut rng);
        out.push(TraceRecord::new(now, object as u64, sizes[object]));
    }
    Ok(out)
}

/// Column names used to locate the three trace fields in a CSV header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub time: String,
    pub object_id: String,
    pub size: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            time: "time_ms".into(),
            object_id: "object_id".into(),
            size: "size_bytes".into(),
        }
    }
}

/// What to do when a row's timestamp is smaller than its predecessor's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecreasingTime {
    #[default]
    Fail,
    /// Raise the timestamp to the previous one.
    Clamp,
}

/// A trace read from an external file. Original object keys are kept so
/// that dense id `i` maps back to `keys[i]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestedTrace {
    pub records: Vec<TraceRecord>,
    pub keys: Vec<String>,
    /// Number of rows whose timestamp was raised under [`DecreasingTime::Clamp`].
    pub clamped: usize,
}

impl IngestedTrace {
    pub fn dense_id(&self, key: &str) -> Option<u64> {
        self.keys.iter().position(|k| k == key).map(|i| i as u64)
    }
}

pub fn ingest_csv(
    path: impl AsRef<Path>,
    columns: &ColumnMap,
    on_decrease: DecreasingTime,
) -> Result<IngestedTrace> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    ingest_reader(file, path, columns, on_decrease)
}

pub fn ingest_reader<R: Read>(
    reader: R,
    path: &Path,
    columns: &ColumnMap,
    on_decrease: DecreasingTime,
) -> Result<IngestedTrace> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        log::warn!("{}: empty trace file", path.display());
        return Ok(IngestedTrace::default());
    }
    let locate = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MalformedRow {
                path: path.to_path_buf(),
                line: 1,
                reason: format!("missing column {name:?}"),
            })
    };
    let (ti, ii, si) = (
        locate(&columns.time)?,
        locate(&columns.object_id)?,
        locate(&columns.size)?,
    );

    let mut trace = IngestedTrace::default();
    let mut dense: HashMap<String, u64> = HashMap::new();
    let mut previous = f64::NEG_INFINITY;
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |reason: String| Error::MalformedRow {
            path: PathBuf::from(path),
            line,
            reason,
        };
        let field = |i: usize, what: &str| {
            row.get(i)
                .ok_or_else(|| bad(format!("missing {what} field")))
        };

        let raw_time = field(ti, "time")?;
        let mut time: f64 = raw_time
            .parse()
            .map_err(|_| bad(format!("unparseable time {raw_time:?}")))?;
        if !time.is_finite() || time < 0.0 {
            return Err(bad(format!("time must be finite and >= 0, got {raw_time}")));
        }
        let raw_size = field(si, "size")?;
        let size: u64 = raw_size
            .parse()
            .map_err(|_| bad(format!("unparseable size {raw_size:?}")))?;
        if size == 0 {
            return Err(bad("size must be positive".into()));
        }
        let key = field(ii, "object id")?;
        if key.is_empty() {
            return Err(bad("empty object id".into()));
        }

        if time < previous {
            match on_decrease {
                DecreasingTime::Fail => {
                    return Err(bad(format!(
                        "timestamp {time} decreases from previous {previous}"
                    )))
                }
                DecreasingTime::Clamp => {
                    log::warn!(
                        "{}:{line}: clamping time {time} to {previous}",
                        path.display()
                    );
                    time = previous;
                    trace.clamped += 1;
                }
            }
        }
        previous = time;

        let next_id = dense.len() as u64;
        let id = *dense.entry(key.to_string()).or_insert_with(|| {
            trace.keys.push(key.to_string());
            next_id
        });
        trace.records.push(TraceRecord::new(time, id, size));
    }
    if trace.records.is_empty() {
        log::warn!("{}: trace has no records", path.display());
    }
    Ok(trace)
}

/// Writes a trace with the default `time_ms,object_id,size_bytes` header.
pub fn write_csv<W: Write>(records: &[TraceRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["time_ms", "object_id", "size_bytes"])?;
    for r in records {
        w.write_record([
            r.time.to_string(),
            r.object_id.to_string(),
            r.size.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest_str(s: &str, mode: DecreasingTime) -> Result<IngestedTrace> {
        ingest_reader(
            s.as_bytes(),
            Path::new("mem.csv"),
            &ColumnMap::default(),
            mode,
        )
    }

    #[test]
    fn single_request_trace() {
        let spec = SyntheticSpec {
            num_requests: 1,
            num_objects: 1,
            ..SyntheticSpec::default()
        };
        let t = generate(&spec).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].object_id, 0);
        assert!(t[0].time > 0.0);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec {
            num_requests: 5_000,
            seed: 17,
            ..SyntheticSpec::default()
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_csv(&generate(&spec).unwrap(), &mut a).unwrap();
        write_csv(&generate(&spec).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);

        let other = generate(&SyntheticSpec { seed: 18, ..spec }).unwrap();
        let mut c = Vec::new();
        write_csv(&other, &mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sizes_fixed_per_object_and_in_range() {
        let spec = SyntheticSpec {
            num_requests: 20_000,
            ..SyntheticSpec::default()
        };
        let t = generate(&spec).unwrap();
        let mut seen: HashMap<u64, u64> = HashMap::new();
        for r in &t {
            assert!((1_000_000..=100_000_000).contains(&r.size));
            assert_eq!(*seen.entry(r.object_id).or_insert(r.size), r.size);
        }
        assert!(t.windows(2).all(|w| w[1].time > w[0].time));
    }

    #[test]
    fn invalid_specs_rejected() {
        let base = SyntheticSpec::default();
        for bad in [
            SyntheticSpec {
                num_requests: 0,
                ..base.clone()
            },
            SyntheticSpec {
                num_objects: 0,
                ..base.clone()
            },
            SyntheticSpec {
                zipf_exponent: 0.0,
                ..base.clone()
            },
            SyntheticSpec {
                size_range: [0, 10],
                ..base.clone()
            },
            SyntheticSpec {
                size_range: [10, 9],
                ..base.clone()
            },
            SyntheticSpec {
                arrival: ArrivalProcess::Poisson { rate: 0.0 },
                ..base.clone()
            },
            SyntheticSpec {
                arrival: ArrivalProcess::Pareto {
                    shape: -1.0,
                    scale: 1.0,
                },
                ..base.clone()
            },
        ] {
            assert!(generate(&bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn pareto_is_load_matched() {
        let p = ArrivalProcess::pareto_matching_rate(0.5);
        assert!((p.mean_interarrival() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ingest_three_rows() {
        let t = ingest_str(
            "time_ms,object_id,size_bytes\n0,a,10\n1.5,b,20\r\n2,c,30\n",
            DecreasingTime::Fail,
        )
        .unwrap();
        assert_eq!(t.records.len(), 3);
        let ids: Vec<_> = t.records.iter().map(|r| r.object_id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        assert_eq!(t.keys, vec!["a", "b", "c"]);
        assert_eq!(t.records[1].time, 1.5);
        assert_eq!(t.dense_id("c"), Some(2));
    }

    #[test]
    fn repeated_keys_share_ids() {
        let t = ingest_str(
            "time_ms,object_id,size_bytes\n0,x,1\n1,y,1\n2,x,1\n",
            DecreasingTime::Fail,
        )
        .unwrap();
        let ids: Vec<_> = t.records.iter().map(|r| r.object_id).collect();
        assert_eq!(ids, vec![0, 1, 0]);
    }

    #[test]
    fn zero_size_reports_line() {
        let err = ingest_str(
            "time_ms,object_id,size_bytes\n0,a,10\n1,b,0\n",
            DecreasingTime::Fail,
        )
        .unwrap_err();
        match err {
            Error::MalformedRow { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn garbage_field_reports_line() {
        let err = ingest_str(
            "time_ms,object_id,size_bytes\n0,a,10\nsoon,b,4\n",
            DecreasingTime::Fail,
        )
        .unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 3, .. }), "{err}");
    }

    #[test]
    fn empty_file_is_empty_stream() {
        let t = ingest_str("", DecreasingTime::Fail).unwrap();
        assert!(t.records.is_empty());
        let t = ingest_str("time_ms,object_id,size_bytes\n", DecreasingTime::Fail).unwrap();
        assert!(t.records.is_empty());
    }

    #[test]
    fn decreasing_time_fail_or_clamp() {
        let csv = "time_ms,object_id,size_bytes\n5,a,1\n3,b,1\n6,a,1\n";
        assert!(ingest_str(csv, DecreasingTime::Fail).is_err());
        let t = ingest_str(csv, DecreasingTime::Clamp).unwrap();
        let times: Vec<_> = t.records.iter().map(|r| r.time).collect();
        assert_eq!(times, vec![5.0, 5.0, 6.0]);
        assert_eq!(t.clamped, 1);
    }

    #[test]
    fn remapped_columns() {
        let cols = ColumnMap {
            time: "ts".into(),
            object_id: "key".into(),
            size: "bytes".into(),
        };
        let t = ingest_reader(
            "bytes,key,ts\n7,k1,0.25\n".as_bytes(),
            Path::new("m.csv"),
            &cols,
            DecreasingTime::Fail,
        )
        .unwrap();
        assert_eq!(t.records, vec![TraceRecord::new(0.25, 0, 7)]);
        assert!(ingest_str("ts,key,bytes\n0,a,1\n", DecreasingTime::Fail).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let spec = SyntheticSpec {
            num_requests: 500,
            num_objects: 7,
            ..SyntheticSpec::default()
        };
        let t = generate(&spec).unwrap();
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        let back = ingest_reader(
            buf.as_slice(),
            Path::new("rt.csv"),
            &ColumnMap::default(),
            DecreasingTime::Fail,
        )
        .unwrap();
        assert_eq!(back.records.len(), t.len());
        for (a, b) in t.iter().zip(&back.records) {
            assert_eq!(a.time, b.time);
            assert_eq!(a.size, b.size);
            assert_eq!(back.keys[b.object_id as usize], a.object_id.to_string());
        }
    }
}
