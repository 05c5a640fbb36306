//! The entire extension of a sampled path and its zero-bounding machinery.
//!
//! A path `F(t) = sum_j sqrt(w_j)(xi_j cos(lambda_j t) + eta_j sin(lambda_j t))`
//! extends to an entire function by evaluating cos/sin on C. The extension is
//! of exponential type `sigma = max lambda_j`, which never exceeds the support
//! edge `A` of the source measure. On top of it this module provides
//!
//! * Jensen circle averages of `log |F|` (trapezoidal quadrature with a
//!   doubling convergence check),
//! * argument-principle zero counts in discs,
//! * growth certificates (linear growth constant, Cartwright integral) and a
//!   Phragmen–Lindelof-style pointwise bound check,
//! * the averaged Jensen scheme producing a certified upper bound on the
//!   number of real zeros in `[0, T]`.

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::sampler::{PathRealization, WaveExpansion};
use crate::zeros::{count_zeros, default_grid_step};

/// Default angular node count for circle quadrature.
pub const DEFAULT_N_THETA: usize = 2048;

/// `|Im z| * sigma` beyond which `cos(lambda z)` overflows `f64`.
pub const OVERFLOW_LIMIT: f64 = 700.0;

/// Quadrature nodes with `|F|` below this floor force a radius perturbation.
const CONTOUR_FLOOR: f64 = 1e-14;

/// Relative radius perturbation per retry when a zero sits on the contour.
const RADIUS_PERTURBATION: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum AnalyticError {
    #[error("|Im z| * sigma = {product} exceeds {OVERFLOW_LIMIT}; rescale before evaluating")]
    OverflowGuard { product: f64 },
    #[error("could not move the contour off a zero near center {center}, radius {radius}")]
    ZeroOnContour { center: f64, radius: f64 },
    #[error("winding number stayed {residual} away from an integer after refinement")]
    NonIntegerWinding { residual: f64 },
    #[error("invalid averaging scheme: {0}")]
    InvalidScheme(String),
}

/// `F(z)` for complex `z`, via the exact entire form of the wave sum.
pub fn complex_value(path: &PathRealization, z: Complex64) -> Result<Complex64, AnalyticError> {
    overflow_guard(path, z)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for ((l, sw), c) in path
        .frame()
        .frequencies()
        .iter()
        .zip(path.frame().sqrt_weights())
        .zip(path.coeffs())
    {
        let w = z * *l;
        acc += *sw * (c[0] * w.cos() + c[1] * w.sin());
    }
    Ok(acc)
}

/// `F'(z)` for complex `z`.
pub fn complex_derivative(path: &PathRealization, z: Complex64) -> Result<Complex64, AnalyticError> {
    overflow_guard(path, z)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for ((l, sw), c) in path
        .frame()
        .frequencies()
        .iter()
        .zip(path.frame().sqrt_weights())
        .zip(path.coeffs())
    {
        let w = z * *l;
        acc += *sw * *l * (-c[0] * w.sin() + c[1] * w.cos());
    }
    Ok(acc)
}

fn overflow_guard(path: &PathRealization, z: Complex64) -> Result<(), AnalyticError> {
    let product = z.im.abs() * path.frame().max_frequency();
    if product > OVERFLOW_LIMIT {
        return Err(AnalyticError::OverflowGuard { product });
    }
    Ok(())
}

/// Exponential type of paths on this frame: the top frequency. Never exceeds
/// the support edge of the source measure.
pub fn exponential_type(frame: &WaveExpansion) -> f64 {
    let sigma = frame.max_frequency();
    let (_, a) = frame.source().support_bounds();
    assert!(sigma <= a + 1e-9, "type {sigma} exceeds support edge {a}");
    sigma
}

/// Circle average `(1/2pi) integral log |F(a + r e^{i theta})| d theta` by the
/// (periodic, hence spectrally accurate) trapezoidal rule on `n_theta` angles.
///
/// If `|F|` underflows at a node the radius is nudged off the zero, three
/// times at most.
pub fn jensen_integral(
    path: &PathRealization,
    center: f64,
    radius: f64,
    n_theta: usize,
) -> Result<f64, AnalyticError> {
    assert!(radius > 0.0 && n_theta >= 8);
    for attempt in 0..4 {
        let r = radius * (1.0 + RADIUS_PERTURBATION * attempt as f64);
        if let Some(avg) = try_circle_average(path, center, r, n_theta)? {
            return Ok(avg);
        }
    }
    Err(AnalyticError::ZeroOnContour { center, radius })
}

fn try_circle_average(
    path: &PathRealization,
    center: f64,
    radius: f64,
    n_theta: usize,
) -> Result<Option<f64>, AnalyticError> {
    let mut sum = 0.0;
    for i in 0..n_theta {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / n_theta as f64;
        let z = Complex64::new(center + radius * theta.cos(), radius * theta.sin());
        let modulus = complex_value(path, z)?.norm();
        if modulus <= CONTOUR_FLOOR {
            return Ok(None);
        }
        sum += modulus.ln();
    }
    Ok(Some(sum / n_theta as f64))
}

/// [`jensen_integral`] with a built-in doubling convergence check: doubles
/// `n_theta` from the default until two refinements agree to `1e-7` (or a cap
/// of 2^16 nodes). Returns the value and the last observed delta.
pub fn jensen_integral_converged(
    path: &PathRealization,
    center: f64,
    radius: f64,
) -> Result<(f64, f64), AnalyticError> {
    let mut n = DEFAULT_N_THETA;
    let mut value = jensen_integral(path, center, radius, n)?;
    let mut delta = f64::INFINITY;
    while n < (1 << 16) {
        n *= 2;
        let refined = jensen_integral(path, center, radius, n)?;
        delta = (refined - value).abs();
        value = refined;
        if delta < 1e-7 {
            break;
        }
    }
    Ok((value, delta))
}

/// Number of zeros of the entire extension in the disc `B(center, radius)`,
/// counted with multiplicity, by the argument principle.
///
/// The contour integral of `F'/F` is refined (doubling nodes) until its value
/// is within 0.1 of an integer *and* two consecutive refinement levels agree
/// on that integer — a conjugate zero pair close to the contour can otherwise
/// fake a plausible-looking off-by-one value. A contour running into a zero
/// is perturbed.
pub fn disc_zero_count(
    path: &PathRealization,
    center: f64,
    radius: f64,
) -> Result<usize, AnalyticError> {
    assert!(radius > 0.0);
    let mut last_residual = f64::INFINITY;
    for attempt in 0..4 {
        let r = radius * (1.0 + RADIUS_PERTURBATION * attempt as f64);
        let mut n_theta = 1024;
        let mut pending: Option<f64> = None;
        // the cap must cover contours passing within ~1e-5 r of a zero, where
        // the trapezoid error decays like exp(-n d / r)
        'refine: while n_theta <= (1 << 18) {
            let mut integral = Complex64::new(0.0, 0.0);
            for i in 0..n_theta {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / n_theta as f64;
                let dir = Complex64::new(theta.cos(), theta.sin());
                let z = Complex64::new(center, 0.0) + r * dir;
                let f = complex_value(path, z)?;
                if f.norm() <= 1e-8 {
                    // too close to a zero, move the contour
                    break 'refine;
                }
                integral += complex_derivative(path, z)? / f * dir;
            }
            integral *= r / n_theta as f64;
            let rounded = integral.re.round();
            let residual = (integral - Complex64::new(rounded, 0.0)).norm();
            if residual < 0.1 && rounded >= 0.0 {
                if pending == Some(rounded) {
                    return Ok(rounded as usize);
                }
                pending = Some(rounded);
            } else {
                pending = None;
            }
            last_residual = residual;
            n_theta *= 2;
        }
    }
    Err(AnalyticError::NonIntegerWinding { residual: last_residual })
}

/// Outcome of sampling the circle-average growth bound
/// `avg log|F| <= (A/pi) 2r + 6 log T` at random centers and radii.
#[derive(Debug, Clone)]
pub struct CircleBoundCheck {
    pub holds: bool,
    /// Smallest observed `rhs - lhs`.
    pub min_slack: f64,
    pub n_checked: usize,
}

/// Samples 20 random `(a, r)` in `[0, T] x (0, T)` and checks the growth bound
/// on each circle, reporting the worst margin.
pub fn circle_average_bound_check<R: Rng + ?Sized>(
    path: &PathRealization,
    t: f64,
    rng: &mut R,
) -> Result<CircleBoundCheck, AnalyticError> {
    assert!(t >= 10.0, "bound check is calibrated for T >= 10");
    let (_, a_edge) = path.frame().source().support_bounds();
    let mut min_slack = f64::INFINITY;
    let n_checked = 20;
    for _ in 0..n_checked {
        let a = rng.random::<f64>() * t;
        let r = (rng.random::<f64>() * t).max(1e-3 * t);
        let lhs = jensen_integral(path, a, r, DEFAULT_N_THETA)?;
        let rhs = a_edge / std::f64::consts::PI * 2.0 * r + 6.0 * t.ln();
        min_slack = min_slack.min(rhs - lhs);
    }
    Ok(CircleBoundCheck { holds: min_slack >= 0.0, min_slack, n_checked })
}

/// Empirical growth data for one path: the linear growth constant
/// `M = sup |F(t)|/(1+|t|)`, the (truncated) Cartwright integral
/// `integral log+ |F| / (1+t^2)`, and the exponential type.
#[derive(Debug, Clone)]
pub struct GrowthCertificate {
    pub linear_bound: f64,
    pub horizon: f64,
    pub cartwright_integral: f64,
    pub exponential_type: f64,
}

/// Scans `[-T, T]` on an oscillation-resolving grid. The truncation of the
/// Cartwright integral is benign: under linear growth the integrand tail is
/// `O(log t / t^2)`.
pub fn growth_certificate(path: &PathRealization, t: f64) -> GrowthCertificate {
    assert!(t > 0.0);
    let sigma = exponential_type(path.frame());
    let step = growth_grid_step(sigma);
    let n = ((2.0 * t / step).ceil() as usize).max(2);
    let h = 2.0 * t / n as f64;
    let mut linear_bound = 0.0f64;
    let mut integral = 0.0;
    let mut prev = 0.0;
    for i in 0..=n {
        let x = -t + i as f64 * h;
        let v = path.value(x).abs();
        linear_bound = linear_bound.max(v / (1.0 + x.abs()));
        let integrand = v.ln().max(0.0) / (1.0 + x * x);
        if i > 0 {
            integral += 0.5 * (prev + integrand) * h;
        }
        prev = integrand;
    }
    GrowthCertificate {
        linear_bound,
        horizon: t,
        cartwright_integral: integral,
        exponential_type: sigma,
    }
}

fn growth_grid_step(sigma: f64) -> f64 {
    if sigma > 0.0 {
        (std::f64::consts::PI / (40.0 * sigma)).min(0.05)
    } else {
        0.05
    }
}

/// One evaluation of the harmonic-majorant bound
/// `log|F(z)| <= (|y|/pi) integral log+|F(t)| / |t-z|^2 dt + sigma |y|`.
#[derive(Debug, Clone)]
pub struct PhragmenReport {
    pub lhs: f64,
    pub rhs: f64,
    pub main_term: f64,
    pub tail_term: f64,
    pub holds: bool,
}

/// Checks the bound at `z` (needs `Im z != 0`). The integral is evaluated on
/// `[Re z - t_trunc, Re z + t_trunc]`; outside, `|F(t)| <= M (1 + |t|)` with
/// the empirical `M` yields an explicit analytic tail majorant.
pub fn phragmen_check(
    path: &PathRealization,
    z: Complex64,
    t_trunc: f64,
) -> Result<PhragmenReport, AnalyticError> {
    assert!(z.im != 0.0, "bound is vacuous on the real axis");
    assert!(t_trunc >= 1.0);
    let x = z.re;
    let y_abs = z.im.abs();
    let sigma = exponential_type(path.frame());
    let lhs = complex_value(path, z)?.norm().ln();

    // empirical linear-growth constant on a window wide enough to dominate
    // the kernel-weighted tail
    let half = x.abs() + 2.0 * t_trunc;
    let m = {
        let step = growth_grid_step(sigma);
        let n = ((2.0 * half / step).ceil() as usize).max(2);
        let h = 2.0 * half / n as f64;
        let mut worst = 0.0f64;
        for i in 0..=n {
            let u = -half + i as f64 * h;
            worst = worst.max(path.value(u).abs() / (1.0 + u.abs()));
        }
        worst
    };

    // Poisson-kernel-weighted trapezoid on the truncation window; the kernel
    // peak has width |y|, so the step resolves it
    let h = (y_abs / 8.0).min(0.05).min(growth_grid_step(sigma));
    let n = ((2.0 * t_trunc / h).ceil() as usize).max(2);
    let hh = 2.0 * t_trunc / n as f64;
    let mut main = 0.0;
    let mut prev = 0.0;
    for i in 0..=n {
        let t_val = x - t_trunc + i as f64 * hh;
        let num = path.value(t_val).abs().ln().max(0.0);
        let den = (t_val - x) * (t_val - x) + z.im * z.im;
        let integrand = num / den;
        if i > 0 {
            main += 0.5 * (prev + integrand) * hh;
        }
        prev = integrand;
    }
    let main_term = y_abs / std::f64::consts::PI * main;

    // tail: log+|F(t)| <= log+ M + log(1+|x|) + log(1+|s|) for s = t - x
    let c1 = m.ln().max(0.0) + (1.0 + x.abs()).ln();
    let kernel_tail = 2.0 / y_abs * (std::f64::consts::FRAC_PI_2 - (t_trunc / y_abs).atan());
    let log_tail = 2.0 * ((1.0 + t_trunc).ln() / t_trunc + (1.0 + 1.0 / t_trunc).ln());
    let tail_term = y_abs / std::f64::consts::PI * (c1 * kernel_tail + log_tail);

    let rhs = main_term + tail_term + sigma * y_abs;
    Ok(PhragmenReport { lhs, rhs, main_term, tail_term, holds: lhs <= rhs + 1e-9 })
}

/// Bookkeeping of the averaged Jensen scheme on `[0, T]`:
/// `Delta = eps^2 T`, `r = eps T`, `n = ceil((T + 2r) / Delta)` circles whose
/// centers are picked one per interval `I_k = [(k-1) Delta - r, k Delta - r]`.
#[derive(Debug, Clone)]
pub struct JensenScheme {
    pub eps: f64,
    pub horizon: f64,
    pub delta: f64,
    pub radius: f64,
    pub n_circles: usize,
}

impl JensenScheme {
    /// `eps` must lie in `(0, 1/e]`: beyond that the averaging coefficient
    /// `2 (1/eps - 2 log(1/eps))` no longer under-counts the covering
    /// multiplicity and the bound would lose its one-sided guarantee.
    pub fn new(t: f64, eps: f64) -> Result<Self, AnalyticError> {
        if !(t >= 10.0) {
            return Err(AnalyticError::InvalidScheme(format!("horizon {t} below 10")));
        }
        if !(eps > 0.0 && eps <= 1.0 / std::f64::consts::E) {
            return Err(AnalyticError::InvalidScheme(format!(
                "eps {eps} outside (0, 1/e]"
            )));
        }
        let delta = eps * eps * t;
        let radius = eps * t;
        let n_circles = ((t + 2.0 * radius) / delta).ceil() as usize;
        Ok(Self { eps, horizon: t, delta, radius, n_circles })
    }

    /// `I_k` for `k = 0..n_circles` (0-based).
    pub fn interval(&self, k: usize) -> (f64, f64) {
        let lo = k as f64 * self.delta - self.radius;
        (lo, lo + self.delta)
    }

    /// The averaging coefficient dividing the summed Jensen excesses.
    pub fn coefficient(&self) -> f64 {
        2.0 * (1.0 / self.eps - 2.0 * (1.0 / self.eps).ln())
    }
}

/// Result of the averaged Jensen scheme on one path.
#[derive(Debug, Clone)]
pub struct JensenBound {
    pub scheme: JensenScheme,
    /// Chosen evaluation points, one per interval (argmax of `|F|`).
    pub points: Vec<f64>,
    /// `log |F(x_k)|` at the chosen points.
    pub floor_logs: Vec<f64>,
    /// Circle averages of `log |F|` around each point.
    pub circle_averages: Vec<f64>,
    /// Certified upper bound on the number of real zeros in `[0, T]`.
    pub bound: f64,
    /// Bisection-refined count of the real zeros in `[0, T]`.
    pub exact: usize,
}

impl JensenBound {
    pub fn slack(&self) -> f64 {
        self.bound - self.exact as f64
    }

    /// Smallest floor, the observed stand-in for the small-ball constant.
    pub fn min_floor_log(&self) -> f64 {
        self.floor_logs.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Runs the averaged Jensen scheme: picks `x_k` as the 64-point-grid argmax of
/// `|F|` on `I_k` (so the floors are as tight as the construction allows),
/// sums the circle averages minus floors, and divides by the averaging
/// coefficient. The result is a deterministic upper bound for the real zero
/// count of the path on `[0, T]`, which is also recomputed exactly.
pub fn jensen_upper_bound(
    path: &PathRealization,
    t: f64,
    eps: f64,
) -> Result<JensenBound, AnalyticError> {
    let scheme = JensenScheme::new(t, eps)?;
    let mut points = Vec::with_capacity(scheme.n_circles);
    let mut floor_logs = Vec::with_capacity(scheme.n_circles);
    let mut circle_averages = Vec::with_capacity(scheme.n_circles);
    for k in 0..scheme.n_circles {
        let (lo, hi) = scheme.interval(k);
        let mut best_x = lo;
        let mut best_v = -1.0;
        for i in 0..64 {
            let x = lo + (hi - lo) * i as f64 / 63.0;
            let v = path.value(x).abs();
            if v > best_v {
                best_v = v;
                best_x = x;
            }
        }
        if best_v <= 0.0 {
            return Err(AnalyticError::ZeroOnContour { center: best_x, radius: 0.0 });
        }
        points.push(best_x);
        floor_logs.push(best_v.ln());
        circle_averages.push(jensen_integral(path, best_x, scheme.radius, DEFAULT_N_THETA)?);
    }
    let numerator: f64 = circle_averages.iter().sum::<f64>() - floor_logs.iter().sum::<f64>();
    let bound = numerator / scheme.coefficient();
    let exact = count_zeros(path, t, default_grid_step(path.frame()))
        .expect("default step satisfies the resolution requirement")
        .count;
    Ok(JensenBound { scheme, points, floor_logs, circle_averages, bound, exact })
}
