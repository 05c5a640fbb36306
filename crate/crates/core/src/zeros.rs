//! Real zero counting on an interval, and Kac–Rice comparisons.
//!
//! Zeros are located by scanning sign changes on a grid no coarser than
//! `pi / (20 sigma)` (`sigma` = top frequency of the frame), refining each
//! bracketing cell by bisection. At that resolution a cell holds at most one
//! zero up to measure-zero tangencies, which a derivative-based safeguard
//! resolves into zero or two crossings. Zeros are counted without
//! multiplicity.

use rayon::prelude::*;
use std::sync::Arc;
use thiserror::Error;

use crate::measure::SpectralMeasure;
use crate::sampler::{default_n_freq, sample_path, stream_rng, PathRealization, WaveExpansion};
use crate::stats::mean_and_se;

/// Bisection tolerance on zero locations.
pub const REFINEMENT_TOLERANCE: f64 = 1e-10;

/// Both grid endpoints of a cell below this magnitude trigger the tangency
/// safeguard.
const NEAR_ZERO: f64 = 1e-12;

/// A grid value below this magnitude is treated as an exact zero.
const EXACT_ZERO: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum CountError {
    #[error("grid step {step} exceeds pi/(20 sigma) = {max_step} for top frequency {sigma}")]
    ResolutionTooCoarse { step: f64, max_step: f64, sigma: f64 },
    #[error("window [{lo}, {hi}] is empty")]
    EmptyWindow { lo: f64, hi: f64 },
}

/// Outcome of a zero count over a window.
#[derive(Debug, Clone)]
pub struct ZeroReport {
    /// Counted window `[start, end]`.
    pub window: (f64, f64),
    pub count: usize,
    /// Strictly increasing locations inside the window.
    pub locations: Vec<f64>,
    pub grid_step: f64,
    pub refinement_tolerance: f64,
}

/// Coarsest admissible scan step for paths on this frame.
pub fn default_grid_step(frame: &WaveExpansion) -> f64 {
    let sigma = frame.max_frequency();
    if sigma > 0.0 {
        std::f64::consts::PI / (20.0 * sigma)
    } else {
        // constant paths have no oscillation to resolve
        0.05
    }
}

/// Counts zeros of the path on `[0, T]`.
pub fn count_zeros(path: &PathRealization, t: f64, grid_step: f64) -> Result<ZeroReport, CountError> {
    count_zeros_between(path, 0.0, t, grid_step)
}

/// Counts zeros of the path on `[lo, hi]`.
///
/// A zero within `1e-10` of either endpoint counts as inside.
pub fn count_zeros_between(
    path: &PathRealization,
    lo: f64,
    hi: f64,
    grid_step: f64,
) -> Result<ZeroReport, CountError> {
    if !(hi > lo) {
        return Err(CountError::EmptyWindow { lo, hi });
    }
    let sigma = path.frame().max_frequency();
    if sigma > 0.0 {
        let max_step = std::f64::consts::PI / (20.0 * sigma);
        if grid_step > max_step * (1.0 + 1e-12) {
            return Err(CountError::ResolutionTooCoarse { step: grid_step, max_step, sigma });
        }
    }
    let n_cells = (((hi - lo) / grid_step).ceil() as usize).max(1);
    let h = (hi - lo) / n_cells as f64;
    let values = path.values_on_grid(lo, h, n_cells + 1);

    let mut roots: Vec<f64> = Vec::new();
    for i in 0..=n_cells {
        if values[i].abs() <= EXACT_ZERO {
            roots.push(lo + i as f64 * h);
        }
    }
    for i in 0..n_cells {
        let (a, b) = (lo + i as f64 * h, lo + (i + 1) as f64 * h);
        let (fa, fb) = (values[i], values[i + 1]);
        if fa.abs() <= NEAR_ZERO && fb.abs() <= NEAR_ZERO {
            scan_tangential_cell(path, a, b, &mut roots);
        } else if fa.abs() > EXACT_ZERO && fb.abs() > EXACT_ZERO && fa.signum() != fb.signum() {
            roots.push(bisect(path, a, b, fa));
        }
    }

    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 2.0 * REFINEMENT_TOLERANCE);
    roots.retain(|&r| r >= lo - REFINEMENT_TOLERANCE && r <= hi + REFINEMENT_TOLERANCE);

    Ok(ZeroReport {
        window: (lo, hi),
        count: roots.len(),
        locations: roots,
        grid_step: h,
        refinement_tolerance: REFINEMENT_TOLERANCE,
    })
}

/// Counts strict sign changes in a slice of sampled values (shared grid
/// convention for cross-validating samplers).
pub fn count_sign_changes(values: &[f64]) -> usize {
    values
        .windows(2)
        .filter(|w| w[0] != 0.0 && w[1] != 0.0 && w[0].signum() != w[1].signum())
        .count()
}

fn bisect(path: &PathRealization, mut a: f64, mut b: f64, fa: f64) -> f64 {
    let mut sign_a = fa.signum();
    while b - a > REFINEMENT_TOLERANCE {
        let mid = 0.5 * (a + b);
        let fm = path.value(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == sign_a {
            a = mid;
        } else {
            b = mid;
        }
        sign_a = path.value(a).signum();
    }
    0.5 * (a + b)
}

/// Both endpoints nearly vanish: subdivide x16 and use F and F' to split a
/// tangential near-zero into its actual crossings.
fn scan_tangential_cell(path: &PathRealization, a: f64, b: f64, roots: &mut Vec<f64>) {
    let n = 16;
    let h = (b - a) / n as f64;
    let vals: Vec<f64> = (0..=n).map(|i| path.value(a + i as f64 * h)).collect();
    let mut found = false;
    for i in 0..n {
        let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
        if vals[i].signum() != vals[i + 1].signum() && vals[i] != 0.0 && vals[i + 1] != 0.0 {
            roots.push(bisect(path, x0, x1, vals[i]));
            found = true;
        }
    }
    if !found {
        // F hugs zero across the cell: a touch point is where F' changes sign
        // and |F| dips below the exact-zero threshold.
        let derivs: Vec<f64> = (0..=n).map(|i| path.derivative(a + i as f64 * h)).collect();
        for i in 0..n {
            if derivs[i].signum() != derivs[i + 1].signum() {
                let x = a + (i as f64 + 0.5) * h;
                if path.value(x).abs() <= EXACT_ZERO {
                    roots.push(x);
                }
            }
        }
    }
}

/// Expected zero density per unit time, `gamma / pi` with
/// `gamma^2 = integral lambda^2 d mu`.
pub fn kac_rice_density(mu: &SpectralMeasure) -> f64 {
    mu.moment(2).sqrt() / std::f64::consts::PI
}

/// Monte Carlo summary of `N(T) / T` over i.i.d. paths.
#[derive(Debug, Clone)]
pub struct DensitySummary {
    pub t_horizon: f64,
    pub n_samples: usize,
    pub mean: f64,
    pub std_err: f64,
    pub min: f64,
    pub max: f64,
}

/// Samples `n_samples` paths (disjoint RNG streams derived from `base_seed`)
/// and reports mean, standard error, min and max of the zero density.
pub fn empirical_density(
    mu: &SpectralMeasure,
    t: f64,
    n_samples: usize,
    base_seed: u64,
    n_freq: Option<usize>,
) -> DensitySummary {
    assert!(n_samples >= 2);
    let frame = Arc::new(WaveExpansion::discretize(
        mu,
        n_freq.unwrap_or_else(|| default_n_freq(mu, t)),
    ));
    let step = default_grid_step(&frame);
    let densities: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let path = sample_path(&frame, &mut stream_rng(base_seed, i as u64));
            let report = count_zeros(&path, t, step).expect("default step satisfies resolution");
            report.count as f64 / t
        })
        .collect();
    let (mean, std_err) = mean_and_se(&densities);
    let min = densities.iter().copied().fold(f64::INFINITY, f64::min);
    let max = densities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    DensitySummary { t_horizon: t, n_samples, mean, std_err, min, max }
}
