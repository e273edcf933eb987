use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    pub mean: f64,
    pub variance: f64,
}

impl MomentPair {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Mean and variance of the aggregate delay given `k` requests during the
/// fetch: `z (1 + k/2)` and `k z^2 / 12`.
pub fn conditional_moments(k: u32, z: f64) -> MomentPair {
    let k = f64::from(k);
    MomentPair {
        mean: z * (1.0 + k / 2.0),
        variance: k * z * z / 12.0,
    }
}

/// Unconditional moments under Poisson(`lambda`) arrivals:
/// `E[D] = z (1 + lambda z / 2)` and `Var(D) = z^3 lambda / 3`.
pub fn delay_moments(lambda: f64, z: f64) -> MomentPair {
    MomentPair {
        mean: z * (1.0 + lambda * z / 2.0),
        variance: z * z * z * lambda / 3.0,
    }
}

/// Normal parameters approximating the conditional delay for large `k`.
pub fn gaussian_approx(k: u32, z: f64) -> Result<MomentPair> {
    if k == 0 {
        return Err(Error::invalid(
            "gaussian approximation needs k >= 1; k = 0 is an atom at z",
        ));
    }
    Ok(conditional_moments(k, z))
}

pub fn normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    (-d * d / (2.0 * variance)).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}
