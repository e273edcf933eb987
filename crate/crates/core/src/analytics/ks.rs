/// One-sample Kolmogorov-Smirnov distance between `samples` and a CDF with
/// possible jumps. `cdf_left(x)` must return `P(X < x)`.
///
/// The empirical CDF is compared with the model on both sides of each
/// distinct sample value, so tied samples sitting on an atom are handled.
pub fn ks_statistic<F, G>(samples: &[f64], cdf: F, cdf_left: G) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    if samples.is_empty() {
        return 0.0;
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == x {
            j += 1;
        }
        let below = i as f64 / n;
        let at = j as f64 / n;
        d = d.max((at - cdf(x)).abs()).max((below - cdf_left(x)).abs());
        i = j;
    }
    d
}
