use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};

/// Monte Carlo sampler for the aggregate delay: draw `k ~ Poisson(lambda z)`
/// then return `z` plus `k` independent `U(0, z)` waits.
#[derive(Debug, Clone)]
pub struct DelaySampler {
    z: f64,
    count: Option<Poisson<f64>>,
}

impl DelaySampler {
    pub fn new(lambda: f64, z: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0 && z.is_finite() && z > 0.0) {
            return Err(Error::invalid(format!(
                "need lambda >= 0 and z > 0, got lambda={lambda} z={z}"
            )));
        }
        let mu = lambda * z;
        let count = if mu > 0.0 {
            Some(Poisson::new(mu).map_err(|e| Error::invalid(e.to_string()))?)
        } else {
            None
        };
        Ok(Self { z, count })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let k = self.count.as_ref().map_or(0, |p| p.sample(rng) as u64);
        let waits: f64 = (0..k).map(|_| rng.random::<f64>() * self.z).sum();
        self.z + waits
    }
}

pub fn sample_aggregate_delay<R: Rng + ?Sized>(lambda: f64, z: f64, rng: &mut R) -> Result<f64> {
    Ok(DelaySampler::new(lambda, z)?.sample(rng))
}
