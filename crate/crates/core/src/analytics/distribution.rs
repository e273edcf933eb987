use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use super::moments::{conditional_moments, normal_pdf};
use crate::error::{Error, Result};

/// Above this many in-window requests the conditional density is evaluated
/// with its normal approximation instead of the alternating Irwin-Hall sum.
pub const GAUSSIAN_SWITCH_K: u32 = 50;

/// Poisson mass allowed beyond the mixture truncation index.
pub const POISSON_TAIL_TOLERANCE: f64 = 1e-12;

/// `P(N = k)` for `N ~ Poisson(lambda * z)`.
pub fn poisson_count_pmf(k: i64, lambda: f64, z: f64) -> Result<f64> {
    if k < 0 {
        return Err(Error::invalid(format!(
            "poisson count must be >= 0, got {k}"
        )));
    }
    if !(lambda >= 0.0 && z > 0.0) {
        return Err(Error::invalid(format!(
            "need lambda >= 0 and z > 0, got lambda={lambda} z={z}"
        )));
    }
    Ok(pmf(k as u64, lambda * z))
}

fn pmf(k: u64, mu: f64) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if mu < 700.0 && k <= 1000 {
        let mut p = (-mu).exp();
        for i in 1..=k {
            p *= mu / i as f64;
        }
        p
    } else {
        let k = k as f64;
        (-mu + k * mu.ln() - ln_gamma(k + 1.0)).exp()
    }
}

/// Compensated (Neumaier) accumulator for alternating sums.
#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Standard Irwin-Hall density of the sum of `k` unit uniforms at `x`.
///
/// The density is symmetric about `k/2`, so the sum is always taken on the
/// shorter side; this bounds the number and size of the cancelling terms.
fn irwin_hall_pdf(x: f64, k: u32) -> f64 {
    let kf = f64::from(k);
    if !(0.0..=kf).contains(&x) {
        return 0.0;
    }
    let x = x.min(kf - x);
    let top = x.floor() as u32;
    let mut acc = Neumaier::default();
    let mut binom = 1.0f64;
    for j in 0..=top.min(k) {
        if j > 0 {
            binom = binom * f64::from(k - j + 1) / f64::from(j);
        }
        let term = binom * (x - f64::from(j)).powi(k as i32 - 1);
        acc.add(if j % 2 == 0 { term } else { -term });
    }
    let fact: f64 = (1..k).map(f64::from).product();
    (acc.total() / fact).max(0.0)
}

/// Standard Irwin-Hall CDF, with the same reflection as the density.
fn irwin_hall_cdf(x: f64, k: u32) -> f64 {
    let kf = f64::from(k);
    if x <= 0.0 {
        return 0.0;
    }
    if x >= kf {
        return 1.0;
    }
    let (y, upper) = if x > kf / 2.0 {
        (kf - x, true)
    } else {
        (x, false)
    };
    let top = y.floor() as u32;
    let mut acc = Neumaier::default();
    let mut binom = 1.0f64;
    for j in 0..=top.min(k) {
        if j > 0 {
            binom = binom * f64::from(k - j + 1) / f64::from(j);
        }
        let term = binom * (y - f64::from(j)).powi(k as i32);
        acc.add(if j % 2 == 0 { term } else { -term });
    }
    let fact: f64 = (1..=k).map(f64::from).product();
    let lower = (acc.total() / fact).clamp(0.0, 1.0);
    if upper {
        1.0 - lower
    } else {
        lower
    }
}

fn normal_cdf(x: f64, mean: f64, variance: f64) -> f64 {
    0.5 * erfc(-(x - mean) / (2.0 * variance).sqrt())
}

/// Density of the aggregate delay `d` given `k >= 1` requests during a
/// fetch of length `z`. Zero outside `[z, (k + 1) z]`.
pub fn conditional_pdf(d: f64, k: u32, z: f64) -> Result<f64> {
    conditional_pdf_with_threshold(d, k, z, GAUSSIAN_SWITCH_K)
}

pub fn conditional_pdf_with_threshold(d: f64, k: u32, z: f64, gaussian_above: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid(
            "conditional density needs k >= 1; k = 0 is the atom at z",
        ));
    }
    if !(z > 0.0) {
        return Err(Error::invalid(format!("z must be positive, got {z}")));
    }
    Ok(conditional_pdf_unchecked(d, k, z, gaussian_above))
}

fn conditional_pdf_unchecked(d: f64, k: u32, z: f64, gaussian_above: u32) -> f64 {
    if d < z || d > f64::from(k + 1) * z {
        return 0.0;
    }
    if k > gaussian_above {
        let m = conditional_moments(k, z);
        normal_pdf(d, m.mean, m.variance)
    } else {
        irwin_hall_pdf((d - z) / z, k) / z
    }
}

/// `P(D <= d | N = k)` for `k >= 1`.
pub fn conditional_cdf(d: f64, k: u32, z: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("conditional cdf needs k >= 1"));
    }
    if !(z > 0.0) {
        return Err(Error::invalid(format!("z must be positive, got {z}")));
    }
    Ok(conditional_cdf_unchecked(d, k, z, GAUSSIAN_SWITCH_K))
}

fn conditional_cdf_unchecked(d: f64, k: u32, z: f64, gaussian_above: u32) -> f64 {
    if d <= z {
        return 0.0;
    }
    if d >= f64::from(k + 1) * z {
        return 1.0;
    }
    if k > gaussian_above {
        let m = conditional_moments(k, z);
        normal_cdf(d, m.mean, m.variance)
    } else {
        irwin_hall_cdf((d - z) / z, k)
    }
}

/// Mixture density at a point: the Dirac weight at `z` is kept apart from the
/// continuous part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureDensity {
    pub atom_weight: f64,
    pub continuous: f64,
}

/// Aggregate-delay distribution for arrival rate `lambda` and fetch latency
/// `z`, truncated at `k_max` in-window requests.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDistribution {
    lambda: f64,
    z: f64,
    k_max: u32,
    gaussian_above: u32,
    /// `weights[k] = P(N = k)` for `k = 0..=k_max`.
    weights: Vec<f64>,
}

impl DelayDistribution {
    pub fn new(lambda: f64, z: f64) -> Result<Self> {
        Self::with_threshold(lambda, z, GAUSSIAN_SWITCH_K)
    }

    pub fn with_threshold(lambda: f64, z: f64, gaussian_above: u32) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::invalid(format!("z must be positive, got {z}")));
        }
        let mu = lambda * z;
        let k_max = truncation_index(mu);
        let weights = (0..=u64::from(k_max)).map(|k| pmf(k, mu)).collect();
        Ok(Self {
            lambda,
            z,
            k_max,
            gaussian_above,
            weights,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    /// Poisson mass discarded by the truncation.
    pub fn truncated_mass(&self) -> f64 {
        poisson_tail_after(self.lambda * self.z, self.k_max)
    }

    pub fn atom_weight(&self) -> f64 {
        self.weights[0]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest delay with non-zero density under the truncation.
    pub fn support_end(&self) -> f64 {
        f64::from(self.k_max + 1) * self.z
    }

    pub fn mixture_pdf(&self, d: f64) -> MixtureDensity {
        let continuous = self
            .weights
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, w)| w * conditional_pdf_unchecked(d, k as u32, self.z, self.gaussian_above))
            .sum();
        MixtureDensity {
            atom_weight: self.weights[0],
            continuous,
        }
    }

    /// `P(D <= d)`, right-continuous with a jump of `exp(-lambda z)` at `z`.
    pub fn mixture_cdf(&self, d: f64) -> f64 {
        if d < self.z {
            return 0.0;
        }
        let tail: f64 = self
            .weights
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, w)| w * conditional_cdf_unchecked(d, k as u32, self.z, self.gaussian_above))
            .sum();
        self.weights[0] + tail
    }

    /// `P(D < d)`; differs from [`Self::mixture_cdf`] only at `d = z`.
    pub fn mixture_cdf_left(&self, d: f64) -> f64 {
        if d <= self.z {
            0.0
        } else {
            self.mixture_cdf(d)
        }
    }

    /// Breakpoints `z, 2z, ..., (k_max + 1) z` between which the continuous
    /// density is smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        (1..=self.k_max + 1)
            .map(|m| f64::from(m) * self.z)
            .collect()
    }
}

fn poisson_tail_after(mu: f64, k: u32) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    // Summed from far in the tail inwards so that tiny terms are not lost.
    let far = k.max(max_truncation(mu)) + 64;
    let mut tail = 0.0;
    for j in (u64::from(k) + 1..=u64::from(far)).rev() {
        tail += pmf(j, mu);
    }
    tail
}

fn max_truncation(mu: f64) -> u32 {
    (10.0 * mu + 50.0).ceil() as u32
}

/// Smallest `k` whose Poisson tail falls below the tolerance, capped at
/// `10 mu + 50`.
fn truncation_index(mu: f64) -> u32 {
    if mu == 0.0 {
        return 0;
    }
    let cap = max_truncation(mu);
    let far = cap as usize + 64;
    let probs: Vec<f64> = (0..=far as u64).map(|j| pmf(j, mu)).collect();
    // The tail after k grows as k decreases; stop at the first k that breaks
    // the tolerance.
    let mut tail = 0.0;
    for k in (0..far).rev() {
        tail += probs[k + 1];
        if tail >= POISSON_TAIL_TOLERANCE {
            return ((k + 1) as u32).min(cap);
        }
    }
    0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const E_INV: f64 = 0.36787944117144233;

    #[test]
    fn pmf_examples() {
        assert_relative_eq!(
            poisson_count_pmf(0, 0.5, 2.0).unwrap(),
            E_INV,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            poisson_count_pmf(1, 1.0, 1.0).unwrap(),
            E_INV,
            max_relative = 1e-15
        );
        assert!(poisson_count_pmf(-1, 1.0, 1.0).is_err());
        assert_eq!(poisson_count_pmf(0, 0.0, 3.0).unwrap(), 1.0);
        assert_eq!(poisson_count_pmf(2, 0.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn pmf_sums_to_one() {
        let d = DelayDistribution::new(0.5, 10.0).unwrap();
        let total: f64 = d.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
        assert!(d.truncated_mass() < POISSON_TAIL_TOLERANCE);
    }

    #[test]
    fn pmf_log_branch_agrees() {
        // mu below the product-branch limit, evaluated both ways
        let mu: f64 = 40.0;
        for k in [0u64, 10, 40, 90] {
            let direct = pmf(k, mu);
            let kf = k as f64;
            let logp = (-mu + kf * mu.ln() - ln_gamma(kf + 1.0)).exp();
            assert_relative_eq!(direct, logp, max_relative = 1e-11);
        }
    }

    #[test]
    fn truncation_is_minimal() {
        for mu in [0.5, 2.0, 5.0, 10.0, 20.0] {
            let k = truncation_index(mu);
            assert!(
                poisson_tail_after(mu, k) < POISSON_TAIL_TOLERANCE,
                "mu={mu}"
            );
            assert!(k == 0 || poisson_tail_after(mu, k - 1) >= POISSON_TAIL_TOLERANCE);
            assert!(k <= max_truncation(mu));
        }
        assert_eq!(truncation_index(0.0), 0);
    }

    #[test]
    fn conditional_pdf_examples() {
        let z = 4.0;
        assert_relative_eq!(
            conditional_pdf(1.5 * z, 1, z).unwrap(),
            1.0 / z,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            conditional_pdf(2.0 * z, 2, z).unwrap(),
            1.0 / z,
            max_relative = 1e-15
        );
        assert_eq!(conditional_pdf(0.99 * z, 3, z).unwrap(), 0.0);
        assert_eq!(conditional_pdf(4.01 * z, 3, z).unwrap(), 0.0);
        assert!(conditional_pdf(z, 0, z).is_err());
    }

    #[test]
    fn irwin_hall_matches_closed_forms() {
        // k = 3 piecewise quadratic
        let f = |x: f64| {
            if x < 1.0 {
                x * x / 2.0
            } else if x < 2.0 {
                (-2.0 * x * x + 6.0 * x - 3.0) / 2.0
            } else {
                (3.0 - x) * (3.0 - x) / 2.0
            }
        };
        for i in 0..=300 {
            let x = i as f64 / 100.0;
            assert!((irwin_hall_pdf(x, 3) - f(x)).abs() < 1e-14, "x={x}");
        }
    }

    #[test]
    fn cdf_is_right_continuous_at_atom() {
        let d = DelayDistribution::new(0.1, 10.0).unwrap();
        assert_eq!(d.mixture_cdf(10.0 - 1e-9), 0.0);
        assert_relative_eq!(d.mixture_cdf(10.0), (-1.0f64).exp(), max_relative = 1e-15);
        assert_eq!(d.mixture_cdf_left(10.0), 0.0);
        assert!((d.mixture_cdf(d.support_end()) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_lambda_zero() {
        let d = DelayDistribution::new(0.0, 7.0).unwrap();
        assert_eq!(d.k_max(), 0);
        assert_eq!(d.atom_weight(), 1.0);
        assert_eq!(d.mixture_pdf(8.0).continuous, 0.0);
        assert_eq!(d.mixture_cdf(7.0), 1.0);
    }

    #[test]
    fn gaussian_branch_above_threshold() {
        let z = 2.0;
        let k = 60;
        let m = conditional_moments(k, z);
        let got = conditional_pdf(m.mean, k, z).unwrap();
        assert_relative_eq!(
            got,
            normal_pdf(m.mean, m.mean, m.variance),
            max_relative = 1e-15
        );
        // Explicit threshold lets the exact sum be used instead.
        let exact = conditional_pdf_with_threshold(m.mean, k, z, 100).unwrap();
        assert!((exact - got).abs() / got < 0.01);
    }

    #[test]
    fn bad_parameters_rejected() {
        assert!(DelayDistribution::new(-1.0, 1.0).is_err());
        assert!(DelayDistribution::new(1.0, 0.0).is_err());
        assert!(DelayDistribution::new(f64::NAN, 1.0).is_err());
    }
}
