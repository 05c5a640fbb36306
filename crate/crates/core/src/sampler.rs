//! Finite random-wave models of an SGP and Gaussian path sampling.
//!
//! A spectral measure is discretized into frequencies `lambda_j` with weights
//! `w_j` summing to 1; a path is then
//!
//! `F(t) = sum_j sqrt(w_j) (xi_j cos(lambda_j t) + eta_j sin(lambda_j t))`
//!
//! with i.i.d. standard Gaussian coefficient pairs. This realizes the
//! orthonormal-series representation of the process restricted to the
//! discretized spectrum, and doubles as the exact entire extension used by
//! the analytic machinery. An exact finite-dimensional Gaussian oracle
//! (covariance Cholesky factorization) is provided for cross-validation.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measure::SpectralMeasure;

/// Jitter added to the covariance diagonal before factorization; sinc-type
/// kernels on fine grids are numerically near-singular.
pub const CHOLESKY_JITTER: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("frequencies must be strictly increasing and non-negative (index {index})")]
    UnsortedFrequencies { index: usize },
    #[error("weights must be positive and have the same length as frequencies")]
    BadWeights,
    #[error("frequency {frequency} lies outside the source support [{lo}, {hi}]")]
    FrequencyOutsideSupport { frequency: f64, lo: f64, hi: f64 },
    #[error("covariance matrix is not positive definite even with jitter {CHOLESKY_JITTER:e}")]
    FactorizationFailure,
}

/// Deterministic per-sample RNG stream: one base seed, one stream per sample
/// index, so parallel Monte Carlo results do not depend on thread scheduling.
pub fn stream_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

/// Default node count for a horizon-`t` experiment: several frequencies per
/// zero-crossing scale, floored at 64.
pub fn default_n_freq(mu: &SpectralMeasure, t: f64) -> usize {
    let (_, a) = mu.support_bounds();
    ((8.0 * a * t / std::f64::consts::PI).ceil() as usize).max(64)
}

/// Finite trigonometric frame: frequencies, weights and the measure they
/// discretize. Immutable and freely shareable.
#[derive(Debug, Clone)]
pub struct WaveExpansion {
    frequencies: Vec<f64>,
    weights: Vec<f64>,
    sqrt_weights: Vec<f64>,
    source: SpectralMeasure,
}

impl WaveExpansion {
    /// Validates and renormalizes a frame: frequencies strictly increasing and
    /// inside the source support bracket, weights positive with unit sum.
    pub fn new(
        frequencies: Vec<f64>,
        weights: Vec<f64>,
        source: SpectralMeasure,
    ) -> Result<Self, SamplerError> {
        if weights.len() != frequencies.len() || frequencies.is_empty() {
            return Err(SamplerError::BadWeights);
        }
        for (i, f) in frequencies.iter().enumerate() {
            if !f.is_finite() || *f < 0.0 || (i > 0 && frequencies[i - 1] >= *f) {
                return Err(SamplerError::UnsortedFrequencies { index: i });
            }
        }
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || weights.iter().any(|w| !(*w > 0.0)) {
            return Err(SamplerError::BadWeights);
        }
        let (lo, hi) = source.support_bounds();
        for &f in &frequencies {
            if f < lo - 1e-9 || f > hi + 1e-9 {
                return Err(SamplerError::FrequencyOutsideSupport { frequency: f, lo, hi });
            }
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / sum).collect();
        let sqrt_weights = weights.iter().map(|w| w.sqrt()).collect();
        Ok(Self { frequencies, weights, sqrt_weights, source })
    }

    /// Midpoint-rule discretization with `n_freq` nodes for the density part.
    ///
    /// Atoms pass through exactly with their two-sided masses; each density
    /// piece receives a share of the nodes proportional to its mass (at least
    /// one node each) placed at midpoints of equal subintervals. Midpoints
    /// stay strictly inside the pieces, so the exponential type of the frame
    /// never exceeds the support edge.
    pub fn discretize(mu: &SpectralMeasure, n_freq: usize) -> Self {
        assert!(n_freq >= 1, "need at least one node");
        assert!(
            n_freq >= mu.pieces().len(),
            "need at least one node per density piece"
        );
        let mut entries: Vec<(f64, f64)> = Vec::new();
        if let Some(z) = mu.zero_atom() {
            entries.push((0.0, z));
        }
        for a in mu.atoms() {
            entries.push((a.frequency, 2.0 * a.mass));
        }
        if !mu.pieces().is_empty() {
            let masses: Vec<f64> =
                mu.pieces().iter().map(|p| 2.0 * p.density * (p.hi - p.lo)).collect();
            let counts = allocate_nodes(&masses, n_freq);
            for (p, n_j) in mu.pieces().iter().zip(counts) {
                let width = (p.hi - p.lo) / n_j as f64;
                let node_mass = 2.0 * p.density * width;
                for i in 0..n_j {
                    entries.push((p.lo + (i as f64 + 0.5) * width, node_mass));
                }
            }
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut frequencies: Vec<f64> = Vec::with_capacity(entries.len());
        let mut weights: Vec<f64> = Vec::with_capacity(entries.len());
        for (f, w) in entries {
            match frequencies.last() {
                Some(prev) if (f - prev).abs() <= 1e-12 => {
                    *weights.last_mut().unwrap() += w;
                }
                _ => {
                    frequencies.push(f);
                    weights.push(w);
                }
            }
        }
        Self::new(frequencies, weights, mu.clone()).expect("discretization produces a valid frame")
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sqrt_weights(&self) -> &[f64] {
        &self.sqrt_weights
    }

    pub fn source(&self) -> &SpectralMeasure {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Largest frequency; the exponential type of every path on this frame.
    pub fn max_frequency(&self) -> f64 {
        *self.frequencies.last().expect("frame is nonempty")
    }

    /// Covariance kernel of the discretized process, `sum_j w_j cos(lambda_j t)`.
    pub fn kernel(&self, t: f64) -> f64 {
        self.frequencies
            .iter()
            .zip(&self.weights)
            .map(|(l, w)| w * (l * t).cos())
            .sum()
    }

    /// FNV-1a hash of the frequency/weight bit patterns, used to tie replayed
    /// coefficient vectors to the frame that produced them.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: f64| {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x1000_0000_01b3);
            }
        };
        for &f in &self.frequencies {
            eat(f);
        }
        for &w in &self.weights {
            eat(w);
        }
        h
    }
}

/// Sup-norm discrepancy between the frame kernel and the exact covariance
/// kernel of the source measure, over a 10^4-point grid of `[0, horizon]`.
pub fn kernel_error(frame: &WaveExpansion, horizon: f64) -> f64 {
    assert!(horizon > 0.0);
    let n = 10_000;
    let mut worst = 0.0f64;
    for i in 0..=n {
        let t = horizon * i as f64 / n as f64;
        worst = worst.max((frame.kernel(t) - frame.source().covariance(t)).abs());
    }
    worst
}

/// Largest-remainder allocation of `total` nodes proportional to `masses`,
/// with every piece receiving at least one node.
fn allocate_nodes(masses: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = masses.iter().sum();
    let raw: Vec<f64> = masses.iter().map(|m| total as f64 * m / sum).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..masses.len()).collect();
    order.sort_by(|&i, &j| {
        (raw[j] - raw[j].floor())
            .total_cmp(&(raw[i] - raw[i].floor()))
            .then(i.cmp(&j))
    });
    for k in 0..total.saturating_sub(assigned) {
        counts[order[k % order.len()]] += 1;
    }
    // nobody gets zero nodes: donate from the currently largest count
    loop {
        let Some(zero) = counts.iter().position(|&c| c == 0) else { break };
        let donor = (0..counts.len())
            .max_by(|&i, &j| counts[i].cmp(&counts[j]).then(j.cmp(&i)))
            .expect("nonempty");
        assert!(counts[donor] > 1, "not enough nodes for all pieces");
        counts[donor] -= 1;
        counts[zero] += 1;
    }
    counts
}

/// Replay form of a sampled path: frame fingerprint plus coefficient arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathReplay {
    pub frame: u64,
    pub xi: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tilt: Option<Vec<[f64; 2]>>,
}

/// A sampled coefficient vector bound to its frame.
///
/// `coeffs[j] = [xi_j, eta_j]` multiply `cos` and `sin` at `frequencies[j]`.
/// When the sampling law was mean-shifted, `tilt[j]` records the shifts so the
/// exact Gaussian likelihood ratio against the base law can be recovered.
#[derive(Debug, Clone)]
pub struct PathRealization {
    frame: Arc<WaveExpansion>,
    coeffs: Vec<[f64; 2]>,
    tilt: Option<Vec<[f64; 2]>>,
}

impl PathRealization {
    pub fn new(
        frame: Arc<WaveExpansion>,
        coeffs: Vec<[f64; 2]>,
        tilt: Option<Vec<[f64; 2]>>,
    ) -> Self {
        assert_eq!(coeffs.len(), frame.len(), "one coefficient pair per frequency");
        if let Some(t) = &tilt {
            assert_eq!(t.len(), frame.len());
        }
        Self { frame, coeffs, tilt }
    }

    pub fn frame(&self) -> &Arc<WaveExpansion> {
        &self.frame
    }

    pub fn coeffs(&self) -> &[[f64; 2]] {
        &self.coeffs
    }

    pub fn tilt(&self) -> Option<&[[f64; 2]]> {
        self.tilt.as_deref()
    }

    /// `F(t)`.
    pub fn value(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for ((l, sw), c) in self
            .frame
            .frequencies()
            .iter()
            .zip(self.frame.sqrt_weights())
            .zip(&self.coeffs)
        {
            let (s, co) = (l * t).sin_cos();
            acc += sw * (c[0] * co + c[1] * s);
        }
        acc
    }

    /// `F'(t)`.
    pub fn derivative(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for ((l, sw), c) in self
            .frame
            .frequencies()
            .iter()
            .zip(self.frame.sqrt_weights())
            .zip(&self.coeffs)
        {
            let (s, co) = (l * t).sin_cos();
            acc += sw * l * (-c[0] * s + c[1] * co);
        }
        acc
    }

    /// Values on the uniform grid `t0 + i * step`, `i = 0..n_points`.
    pub fn values_on_grid(&self, t0: f64, step: f64, n_points: usize) -> Vec<f64> {
        (0..n_points).map(|i| self.value(t0 + i as f64 * step)).collect()
    }

    /// Log of the base-law over sampling-law density ratio at this sample:
    /// `sum_j (-theta_j x_j + theta_j^2 / 2)` over all tilted coordinates.
    /// Zero (ratio 1) for untilted paths; always finite.
    pub fn log_likelihood_ratio(&self) -> f64 {
        match &self.tilt {
            None => 0.0,
            Some(shifts) => shifts
                .iter()
                .zip(&self.coeffs)
                .map(|(th, c)| {
                    -th[0] * c[0] + 0.5 * th[0] * th[0] - th[1] * c[1] + 0.5 * th[1] * th[1]
                })
                .sum(),
        }
    }

    pub fn replay(&self) -> PathReplay {
        PathReplay {
            frame: self.frame.fingerprint(),
            xi: self.coeffs.clone(),
            tilt: self.tilt.clone(),
        }
    }
}

/// Draws all coefficient pairs i.i.d. standard Gaussian.
pub fn sample_path<R: Rng + ?Sized>(frame: &Arc<WaveExpansion>, rng: &mut R) -> PathRealization {
    let coeffs = (0..frame.len())
        .map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)])
        .collect();
    PathRealization::new(Arc::clone(frame), coeffs, None)
}

/// Draws coefficients under the mean-shifted law `N(theta_j, 1)` and records
/// the shifts. With all-zero shifts this consumes the RNG identically to
/// [`sample_path`] and produces the same path.
pub fn sample_path_tilted<R: Rng + ?Sized>(
    frame: &Arc<WaveExpansion>,
    rng: &mut R,
    shifts: &[[f64; 2]],
) -> PathRealization {
    assert_eq!(shifts.len(), frame.len());
    let coeffs = shifts
        .iter()
        .map(|th| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            [a + th[0], b + th[1]]
        })
        .collect();
    PathRealization::new(Arc::clone(frame), coeffs, Some(shifts.to_vec()))
}

/// One exact sample of `(F(t_1), ..., F(t_m))` with covariance
/// `K_ij = k(t_i - t_j)`, via Cholesky factorization of `K + jitter * I`.
pub fn gaussian_vector_oracle<R: Rng + ?Sized>(
    mu: &SpectralMeasure,
    grid: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>, SamplerError> {
    let m = grid.len();
    let mut k = DMatrix::from_fn(m, m, |i, j| mu.covariance(grid[i] - grid[j]));
    for i in 0..m {
        k[(i, i)] += CHOLESKY_JITTER;
    }
    let chol = Cholesky::new(k).ok_or(SamplerError::FactorizationFailure)?;
    let z = DVector::from_fn(m, |_, _| rng.sample(StandardNormal));
    Ok((chol.l() * z).iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn uniform01() -> SpectralMeasure {
        SpectralMeasure::uniform_band(0.0, 1.0)
    }

    #[test]
    fn discretize_examples() {
        let frame = WaveExpansion::discretize(&uniform01(), 4);
        assert_eq!(frame.frequencies(), &[0.125, 0.375, 0.625, 0.875]);
        for w in frame.weights() {
            assert_abs_diff_eq!(*w, 0.25, epsilon = 1e-15);
        }

        let frame = WaveExpansion::discretize(&SpectralMeasure::pure_tone(1.0), 16);
        assert_eq!(frame.frequencies(), &[1.0]);
        assert_eq!(frame.weights(), &[1.0]);

        let frame = WaveExpansion::discretize(&SpectralMeasure::uniform_band(1.0, 2.0), 2);
        assert_eq!(frame.frequencies(), &[1.25, 1.75]);
        assert_abs_diff_eq!(frame.weights()[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn node_allocation_is_proportional_with_floor() {
        assert_eq!(allocate_nodes(&[1.0], 5), vec![5]);
        assert_eq!(allocate_nodes(&[3.0, 1.0], 4), vec![3, 1]);
        assert_eq!(allocate_nodes(&[0.999, 0.001], 4), vec![3, 1]);
        assert_eq!(allocate_nodes(&[1.0, 1.0, 1.0], 4), vec![2, 1, 1]);
    }

    #[test]
    fn fixed_seed_reproduces_coefficients() {
        let frame = Arc::new(WaveExpansion::discretize(&uniform01(), 32));
        let a = sample_path(&frame, &mut stream_rng(7, 0));
        let b = sample_path(&frame, &mut stream_rng(7, 0));
        assert_eq!(a.coeffs(), b.coeffs());
        assert_eq!(a.value(3.21).to_bits(), b.value(3.21).to_bits());
        let c = sample_path(&frame, &mut stream_rng(7, 1));
        assert_ne!(a.coeffs(), c.coeffs());
    }

    #[test]
    fn coefficient_moments_are_standard_gaussian() {
        let frame = Arc::new(WaveExpansion::discretize(&uniform01(), 4));
        let n = 100_000;
        let mut xi = Vec::with_capacity(n);
        let mut eta = Vec::with_capacity(n);
        for i in 0..n {
            let p = sample_path(&frame, &mut stream_rng(2024, i as u64));
            xi.push(p.coeffs()[0][0]);
            eta.push(p.coeffs()[0][1]);
        }
        let (mean, _) = crate::stats::mean_and_se(&xi);
        assert!(mean.abs() < 0.0095, "mean {mean}");
        let var = xi.iter().map(|x| x * x).sum::<f64>() / n as f64 - mean * mean;
        assert!((var - 1.0).abs() < 0.02, "var {var}");
        let corr = xi.iter().zip(&eta).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        assert!(corr.abs() < 0.01, "corr {corr}");
    }

    #[test]
    fn pure_cosine_path_evaluates_exactly() {
        let frame =
            Arc::new(WaveExpansion::discretize(&SpectralMeasure::pure_tone(1.0), 1));
        let path = PathRealization::new(frame, vec![[1.0, 0.0]], None);
        assert_abs_diff_eq!(path.value(0.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(path.derivative(0.0), 0.0, epsilon = 1e-15);
        for t in [0.5, 1.7, PI] {
            assert_abs_diff_eq!(path.value(t), t.cos(), epsilon = 1e-15);
            assert_abs_diff_eq!(path.derivative(t), -t.sin(), epsilon = 1e-15);
        }
    }

    #[test]
    fn variance_at_zero_is_unit() {
        let frame = Arc::new(WaveExpansion::discretize(&uniform01(), 64));
        let n = 100_000;
        let mut sq = 0.0;
        for i in 0..n {
            let v = sample_path(&frame, &mut stream_rng(5, i as u64)).value(0.0);
            sq += v * v;
        }
        let var = sq / n as f64;
        assert!((var - 1.0).abs() < 0.02, "Var[F(0)] = {var}");
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let frame = Arc::new(WaveExpansion::discretize(&uniform01(), 64));
        let path = sample_path(&frame, &mut stream_rng(11, 0));
        let h = 1e-5;
        let mut rng = stream_rng(11, 1);
        for _ in 0..100 {
            let t: f64 = rng.random::<f64>() * 40.0 - 20.0;
            let fd = (path.value(t + h) - path.value(t - h)) / (2.0 * h);
            assert!((fd - path.derivative(t)).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn stationarity_proxy_variances() {
        let frame = Arc::new(WaveExpansion::discretize(&uniform01(), 64));
        let n = 10_000;
        for t in [0.0, 5.0, 17.0] {
            let mut sq = 0.0;
            for i in 0..n {
                let v = sample_path(&frame, &mut stream_rng(60 + t as u64, i as u64)).value(t);
                sq += v * v;
            }
            let var = sq / n as f64;
            assert!((var - 1.0).abs() < 0.03, "Var[F({t})] = {var}");
        }
    }

    #[test]
    fn oracle_marginals_and_degenerate_grid() {
        let mu = uniform01();
        let n = 100_000;
        let mut sq = 0.0;
        for i in 0..n {
            let v = gaussian_vector_oracle(&mu, &[0.0], &mut stream_rng(31, i as u64)).unwrap();
            sq += v[0] * v[0];
        }
        let var = sq / n as f64;
        assert!((var - 1.0).abs() < 0.02, "var {var}");

        let v = gaussian_vector_oracle(&mu, &[0.0, 0.0], &mut stream_rng(31, 0)).unwrap();
        assert!((v[0] - v[1]).abs() < 1e-5, "{} vs {}", v[0], v[1]);
    }

    #[test]
    fn oracle_decorrelates_at_sinc_zero() {
        let mu = uniform01(); // kernel sin(t)/t vanishes at pi
        let n = 100_000;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let v = gaussian_vector_oracle(&mu, &[0.0, PI], &mut stream_rng(47, i as u64)).unwrap();
            sxy += v[0] * v[1];
            sxx += v[0] * v[0];
            syy += v[1] * v[1];
        }
        let corr = sxy / (sxx.sqrt() * syy.sqrt());
        assert!(corr.abs() < 0.02, "corr {corr}");
    }

    #[test]
    fn kernel_error_bounds() {
        let tone = WaveExpansion::discretize(&SpectralMeasure::pure_tone(1.0), 1);
        assert!(kernel_error(&tone, 50.0) < 1e-12);

        // regression bound computed once against the closed-form kernel
        let frame = WaveExpansion::discretize(&uniform01(), 64);
        assert!(kernel_error(&frame, 50.0) <= 0.05);

        let errs: Vec<f64> = [16, 64, 256]
            .iter()
            .map(|&n| kernel_error(&WaveExpansion::discretize(&uniform01(), n), 50.0))
            .collect();
        assert!(errs[0] >= errs[1] && errs[1] >= errs[2], "{errs:?}");
    }

    #[test]
    fn tilted_sampling_records_shifts_and_llr() {
        let frame = Arc::new(WaveExpansion::discretize(&uniform01(), 8));
        let shifts: Vec<[f64; 2]> = (0..8).map(|j| [0.1 * j as f64, 0.0]).collect();
        let base = sample_path(&frame, &mut stream_rng(3, 9));
        let tilted = sample_path_tilted(&frame, &mut stream_rng(3, 9), &shifts);
        for j in 0..8 {
            assert_abs_diff_eq!(
                tilted.coeffs()[j][0],
                base.coeffs()[j][0] + shifts[j][0],
                epsilon = 1e-15
            );
        }
        assert_eq!(base.log_likelihood_ratio(), 0.0);
        let llr: f64 = shifts
            .iter()
            .zip(tilted.coeffs())
            .map(|(th, c)| -th[0] * c[0] + 0.5 * th[0] * th[0])
            .sum();
        assert_abs_diff_eq!(tilted.log_likelihood_ratio(), llr, epsilon = 1e-12);
        assert!(tilted.log_likelihood_ratio().is_finite());

        // zero shift consumes RNG identically
        let zero = sample_path_tilted(&frame, &mut stream_rng(3, 9), &vec![[0.0, 0.0]; 8]);
        assert_eq!(zero.coeffs(), base.coeffs());
    }

    #[test]
    fn replay_serializes_with_frame_fingerprint() {
        let frame = Arc::new(WaveExpansion::discretize(&uniform01(), 8));
        let path = sample_path(&frame, &mut stream_rng(1, 0));
        let json = serde_json::to_string(&path.replay()).unwrap();
        let replay: PathReplay = serde_json::from_str(&json).unwrap();
        assert_eq!(replay.frame, frame.fingerprint());
        assert_eq!(replay.xi.len(), 8);
    }
}
