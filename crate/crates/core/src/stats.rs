//! Small statistical helpers shared by the Monte Carlo harnesses.

/// z-score for a central 95% normal interval.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Sample mean and standard error of the mean.
///
/// Returns `(0.0, 0.0)` for an empty slice; the standard error is 0 for a
/// single observation.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Wilson 95% confidence interval for a binomial proportion.
///
/// For zero hits the rule-of-three one-sided bound `[0, 3/n]` is returned
/// instead, which is the honest summary in super-exponential regimes where
/// no hit is ever observed.
pub fn wilson_interval(hits: u64, n: u64) -> (f64, f64) {
    assert!(n > 0, "wilson_interval needs at least one trial");
    if hits == 0 {
        return (0.0, (3.0 / n as f64).min(1.0));
    }
    let n = n as f64;
    let p = hits as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Ordinary least squares fit `y = intercept + slope * x`.
///
/// Returns `(intercept, slope, r_squared)`. Degenerate inputs (fewer than two
/// points, or constant x) yield `r_squared = 0`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return (ys.first().copied().unwrap_or(0.0), 0.0, 0.0);
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return (my, 0.0, 0.0);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (intercept, slope, r2)
}

/// Numerically stable `log(sum(exp(x_i)))`.
///
/// Keeps tail-probability accounting finite even when the individual
/// likelihood-ratio weights underflow `f64` after exponentiation.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
