//! Domain types shared by every other module.
//!
//! Time is continuous and measured in milliseconds; sizes are bytes.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ObjectId = u64;

/// One request event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Arrival time in milliseconds.
    pub time: f64,
    pub object_id: ObjectId,
    /// Object size in bytes, always positive.
    pub size: u64,
}

impl TraceRecord {
    pub fn new(time: f64, object_id: ObjectId, size: u64) -> Self {
        Self {
            time,
            object_id,
            size,
        }
    }
}

/// Deterministic miss latency `z(size) = base + coeff * size`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    #[serde(rename = "base_ms")]
    pub base_ms: f64,
    #[serde(rename = "coeff_ms_per_byte", default)]
    pub coeff_ms_per_byte: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            base_ms: 10.0,
            coeff_ms_per_byte: 0.0,
        }
    }
}

impl LatencyModel {
    pub fn new(base_ms: f64, coeff_ms_per_byte: f64) -> Result<Self> {
        let model = Self {
            base_ms,
            coeff_ms_per_byte,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn constant(base_ms: f64) -> Result<Self> {
        Self::new(base_ms, 0.0)
    }

    /// The smallest possible latency is `base + coeff` (size 1), so that sum
    /// must be strictly positive.
    pub fn validate(&self) -> Result<()> {
        let ok = self.base_ms.is_finite()
            && self.coeff_ms_per_byte.is_finite()
            && self.base_ms >= 0.0
            && self.coeff_ms_per_byte >= 0.0
            && self.base_ms + self.coeff_ms_per_byte > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "latency model needs finite base >= 0 and coeff >= 0 with a positive sum, got base={} coeff={}",
                self.base_ms, self.coeff_ms_per_byte
            )))
        }
    }

    /// Fetch latency in milliseconds for an object of `size` bytes.
    pub fn fetch_latency(&self, size: u64) -> Result<f64> {
        if size == 0 {
            return Err(Error::invalid("object size must be positive"));
        }
        Ok(self.latency_unchecked(size))
    }

    #[inline]
    pub(crate) fn latency_unchecked(&self, size: u64) -> f64 {
        self.base_ms + self.coeff_ms_per_byte * size as f64
    }
}

/// Named latency presets. The names spell out the constant and the
/// proportional coefficient.
pub const LATENCY_PRESETS: &[(&str, f64, f64)] = &[
    ("base10ms", 10.0, 0.0),
    ("base10ms-0.1ms-per-mb", 10.0, 1e-7),
    ("base10ms-1ms-per-mb", 10.0, 1e-6),
];

pub fn latency_preset(name: &str) -> Result<LatencyModel> {
    LATENCY_PRESETS
        .iter()
        .find(|(n, _, _)| *n == name)
        .map(|&(_, base, coeff)| LatencyModel {
            base_ms: base,
            coeff_ms_per_byte: coeff,
        })
        .ok_or_else(|| {
            let names: Vec<_> = LATENCY_PRESETS.iter().map(|p| p.0).collect();
            Error::InvalidConfig(format!(
                "unknown latency preset {name:?}; known presets: {}",
                names.join(", ")
            ))
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "LRU")]
    Lru,
    #[serde(rename = "LRU_MAD")]
    LruMad,
    #[serde(rename = "LAC")]
    Lac,
    #[serde(rename = "CALA")]
    Cala,
    #[serde(rename = "VA_CDH")]
    VaCdh,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Lru,
        PolicyKind::LruMad,
        PolicyKind::Lac,
        PolicyKind::Cala,
        PolicyKind::VaCdh,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Lru => "LRU",
            PolicyKind::LruMad => "LRU_MAD",
            PolicyKind::Lac => "LAC",
            PolicyKind::Cala => "CALA",
            PolicyKind::VaCdh => "VA_CDH",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_'))
            .flat_map(char::to_lowercase)
            .collect();
        match norm.as_str() {
            "lru" => Ok(PolicyKind::Lru),
            "lrumad" | "mad" => Ok(PolicyKind::LruMad),
            "lac" => Ok(PolicyKind::Lac),
            "cala" => Ok(PolicyKind::Cala),
            "vacdh" => Ok(PolicyKind::VaCdh),
            _ => Err(Error::InvalidConfig(format!("unknown policy kind {s:?}"))),
        }
    }
}

/// Policy identity plus every tunable. Parameters that a kind does not use
/// are still stored so that reports echo the full configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub omega: f64,
    pub gamma: f64,
    pub window_size: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::VaCdh,
            omega: 1.0,
            gamma: 0.5,
            window_size: 10_000,
        }
    }
}

impl PolicyConfig {
    pub fn of_kind(kind: PolicyKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "omega must be finite and >= 0, got {}",
                self.omega
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.window_size == 0 {
            return Err(Error::InvalidConfig("window_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub capacity: u64,
    pub policy: PolicyConfig,
    pub seed: u64,
}

impl CacheConfig {
    pub fn new(capacity: u64, policy: PolicyConfig) -> Self {
        Self {
            capacity,
            policy,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::InvalidConfig("capacity must be positive".into()));
        }
        self.policy.validate()
    }
}

/// On-disk run configuration:
///
/// ```json
/// { "capacity_bytes": 500000000,
///   "latency": { "base_ms": 10, "coeff_ms_per_byte": 0 },
///   "policy": { "kind": "VA_CDH", "omega": 1, "gamma": 0.5, "window_size": 10000 },
///   "seed": 0 }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub capacity_bytes: u64,
    #[serde(default)]
    pub latency: LatencyModel,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.latency.validate()?;
        self.cache_config().validate()
    }

    pub fn cache_config(&self) -> CacheConfig {
        CacheConfig {
            capacity: self.capacity_bytes,
            policy: self.policy,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fetch_latency_examples() {
        let m = LatencyModel::new(10.0, 0.0).unwrap();
        assert_eq!(m.fetch_latency(5_000_000).unwrap(), 10.0);
        let m = LatencyModel::new(0.0, 0.001).unwrap();
        assert_eq!(m.fetch_latency(1000).unwrap(), 1.0);
        let m = LatencyModel::new(10.0, 1e-6).unwrap();
        assert_eq!(m.fetch_latency(10_000_000).unwrap(), 20.0);
    }

    #[test]
    fn zero_size_rejected() {
        let m = LatencyModel::default();
        assert!(m.fetch_latency(0).is_err());
    }

    #[test]
    fn degenerate_models_rejected() {
        assert!(LatencyModel::new(0.0, 0.0).is_err());
        assert!(LatencyModel::new(-1.0, 0.0).is_err());
        assert!(LatencyModel::new(1.0, -1e-9).is_err());
        assert!(LatencyModel::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn policy_kind_parsing() {
        assert_eq!("va-cdh".parse::<PolicyKind>().unwrap(), PolicyKind::VaCdh);
        assert_eq!("LRU_MAD".parse::<PolicyKind>().unwrap(), PolicyKind::LruMad);
        assert_eq!("lru".parse::<PolicyKind>().unwrap(), PolicyKind::Lru);
        assert!("lhd".parse::<PolicyKind>().is_err());
        for k in PolicyKind::ALL {
            assert_eq!(k.as_str().parse::<PolicyKind>().unwrap(), k);
        }
    }

    #[test]
    fn policy_config_bounds() {
        let mut p = PolicyConfig::default();
        assert!(p.validate().is_ok());
        p.gamma = 1.5;
        assert!(p.validate().is_err());
        p = PolicyConfig {
            window_size: 0,
            ..PolicyConfig::default()
        };
        assert!(p.validate().is_err());
        p = PolicyConfig {
            omega: -0.1,
            ..PolicyConfig::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn run_config_json() {
        let cfg = RunConfig::from_json_str(
            r#"{"capacity_bytes": 1000,
                "latency": {"base_ms": 10, "coeff_ms_per_byte": 0.5},
                "policy": {"kind": "LAC", "omega": 2, "gamma": 0.25, "window_size": 7},
                "seed": 42}"#,
        )
        .unwrap();
        assert_eq!(cfg.capacity_bytes, 1000);
        assert_eq!(cfg.latency.coeff_ms_per_byte, 0.5);
        assert_eq!(cfg.policy.kind, PolicyKind::Lac);
        assert_eq!(cfg.policy.window_size, 7);
        assert_eq!(cfg.seed, 42);

        let minimal = RunConfig::from_json_str(r#"{"capacity_bytes": 5}"#).unwrap();
        assert_eq!(minimal.policy, PolicyConfig::default());
        assert_eq!(minimal.latency, LatencyModel::default());

        assert!(RunConfig::from_json_str(r#"{"capacity_bytes": 0}"#).is_err());
    }

    #[test]
    fn presets_resolve() {
        let m = latency_preset("base10ms-1ms-per-mb").unwrap();
        assert_eq!(m.fetch_latency(1_000_000).unwrap(), 11.0);
        assert!(latency_preset("nope").is_err());
    }
}
