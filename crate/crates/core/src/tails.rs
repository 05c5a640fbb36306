//! Overcrowding / undercrowding tail estimation.
//!
//! Two estimators for zero-count tail events on `[0, T]`:
//!
//! * **naive** — plain Monte Carlo frequency of `{N >= eta T}` (or `<=`),
//!   with a Wilson 95% interval and the rule-of-three bound on zero hits;
//! * **tilted** — importance sampling that shifts the means of the cosine
//!   coefficients inside a heavy spectral band near a target frequency `X`,
//!   so sampled paths imitate a pure wave of frequency ~ `X`. Each sample is
//!   reweighted by the exact Gaussian likelihood ratio, giving an unbiased
//!   estimate of `P(N(T)/T in [(X-2eps)/pi, (X+2eps)/pi])`. All probability
//!   accounting runs in log space so estimates stay finite far below `f64`
//!   underflow.
//!
//! A tilted sample can additionally be screened by a deterministic pure-wave
//! certificate: if the band coefficient clears the floor `10 L` and the
//! residual and its derivative stay below `L` and `a L`, the path provably has
//! no zeros near the lattice `(pi/a) Z`, exactly one zero between consecutive
//! lattice points, and alternating lattice signs — pinning `N(T)` into a
//! two-wide window.

use rayon::prelude::*;
use std::sync::Arc;
use thiserror::Error;

use crate::measure::{BandQuery, MeasureError, SpectralMeasure};
use crate::sampler::{
    default_n_freq, sample_path, sample_path_tilted, stream_rng, PathRealization, WaveExpansion,
};
use crate::stats::{linear_fit, log_sum_exp, wilson_interval, Z_95};
use crate::zeros::{count_zeros, default_grid_step};

/// Effective sample sizes below this flag a degenerate importance-sampling run.
pub const ESS_FLOOR: f64 = 10.0;

#[derive(Debug, Error)]
pub enum TailError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("decay fit needs at least 3 estimates with nonzero probability, got {0}")]
    InsufficientData(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Over,
    Under,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Over => "over",
            Side::Under => "under",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Naive,
    Tilted,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Naive => "naive",
            EstimatorKind::Tilted => "tilted",
        }
    }
}

/// Parameters of an exponential tilt.
#[derive(Debug, Clone)]
pub struct TiltDescriptor {
    pub band_center: f64,
    pub band_half_width: f64,
    /// Aggregate mean shift along the band direction, `10 L / sqrt(W)`.
    pub theta: f64,
    pub l_param: f64,
    pub kappa: f64,
    /// Number of frame frequencies carrying the tilt.
    pub n_carriers: usize,
    /// True when no frame frequency fell inside the band and the nearest node
    /// was used as the carrier.
    pub fallback_carrier: bool,
    /// Target density window `[(X-2eps)/pi, (X+2eps)/pi]`.
    pub window: (f64, f64),
}

/// A tail probability estimate with its uncertainty.
#[derive(Debug, Clone)]
pub struct TailEstimate {
    pub t_horizon: f64,
    pub eta: f64,
    pub side: Side,
    pub estimator: EstimatorKind,
    pub n_samples: usize,
    /// Raw hit count (unweighted).
    pub hits: u64,
    /// Effective sample size, tilted runs only.
    pub ess: Option<f64>,
    pub p_hat: f64,
    /// 95% interval containing `p_hat`.
    pub ci: (f64, f64),
    /// `ln p_hat`, finite whenever at least one hit occurred (computed in log
    /// space), `-inf` otherwise.
    pub log_p: f64,
    /// Delta-method standard error of `ln p_hat`, where defined.
    pub log_p_se: Option<f64>,
    pub tilt: Option<TiltDescriptor>,
    pub degenerate_ess: bool,
}

fn simulate_counts(
    frame: &Arc<WaveExpansion>,
    t: f64,
    n_samples: usize,
    base_seed: u64,
) -> Vec<usize> {
    let step = default_grid_step(frame);
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let path = sample_path(frame, &mut stream_rng(base_seed, i as u64));
            count_zeros(&path, t, step).expect("default step is admissible").count
        })
        .collect()
}

/// Plain Monte Carlo estimate of `P(N(T) >= eta T)` (side `Over`) or
/// `P(N(T) <= eta T)` (side `Under`).
pub fn naive_tail(
    mu: &SpectralMeasure,
    t: f64,
    eta: f64,
    side: Side,
    n_samples: usize,
    base_seed: u64,
    n_freq: Option<usize>,
) -> TailEstimate {
    assert!(n_samples >= 100, "naive tails need at least 100 samples");
    let frame = Arc::new(WaveExpansion::discretize(
        mu,
        n_freq.unwrap_or_else(|| default_n_freq(mu, t)),
    ));
    let counts = simulate_counts(&frame, t, n_samples, base_seed);
    let threshold = eta * t;
    let hits = counts
        .iter()
        .filter(|&&n| match side {
            Side::Over => n as f64 >= threshold,
            Side::Under => n as f64 <= threshold,
        })
        .count() as u64;
    let n = n_samples as f64;
    let p_hat = hits as f64 / n;
    let ci = wilson_interval(hits, n_samples as u64);
    let log_p_se = if hits > 0 { Some(((1.0 - p_hat) / (n * p_hat)).sqrt()) } else { None };
    TailEstimate {
        t_horizon: t,
        eta,
        side,
        estimator: EstimatorKind::Naive,
        n_samples,
        hits,
        ess: None,
        p_hat,
        ci: (ci.0, ci.1),
        log_p: if hits > 0 { p_hat.ln() } else { f64::NEG_INFINITY },
        log_p_se,
        tilt: None,
        degenerate_ess: false,
    }
}

/// Configuration of a tilted run.
#[derive(Debug, Clone)]
pub struct TiltConfig {
    pub t_horizon: f64,
    /// Target frequency `X`; the tilt imitates a pure wave near it.
    pub x_target: f64,
    /// Window half-width parameter `eps` (`mu([X-eps, X+eps]) > 0` required).
    pub eps: f64,
    pub n_samples: usize,
    pub base_seed: u64,
    /// Overrides `L = kappa^{-1/3}`. The default optimizes the asymptotic
    /// exponent, not finite-T estimator variance.
    pub l_override: Option<f64>,
    /// Overrides the node count; the default refines until the band around
    /// `X` is guaranteed to contain a frame frequency.
    pub n_freq: Option<usize>,
    /// Evaluate the pure-wave certificate on each sample.
    pub check_certificates: bool,
}

impl TiltConfig {
    pub fn new(t_horizon: f64, x_target: f64, eps: f64, n_samples: usize, base_seed: u64) -> Self {
        Self {
            t_horizon,
            x_target,
            eps,
            n_samples,
            base_seed,
            l_override: None,
            n_freq: None,
            check_certificates: false,
        }
    }
}

/// Aggregate certificate statistics over a tilted run.
#[derive(Debug, Clone, Default)]
pub struct CertificateSummary {
    pub n_checked: usize,
    pub n_fired: usize,
    /// Fired certificates whose window disagreed with the refined zero count.
    pub n_contradictions: usize,
}

impl CertificateSummary {
    pub fn fire_rate(&self) -> f64 {
        if self.n_checked == 0 {
            0.0
        } else {
            self.n_fired as f64 / self.n_checked as f64
        }
    }
}

/// Outcome of a tilted run: the estimate plus certificate statistics.
#[derive(Debug, Clone)]
pub struct TiltRun {
    pub estimate: TailEstimate,
    pub certificates: Option<CertificateSummary>,
}

/// Node count large enough that the tilt band is guaranteed to contain a
/// frame frequency when it overlaps a density piece.
pub fn tilted_default_n_freq(mu: &SpectralMeasure, t: f64, band: &BandQuery) -> usize {
    let base = default_n_freq(mu, t);
    let host = mu
        .pieces()
        .iter()
        .find(|p| band.center >= p.lo && band.center <= p.hi);
    match host {
        None => base,
        Some(p) => {
            let total: f64 = mu.pieces().iter().map(|q| 2.0 * q.density * (q.hi - q.lo)).sum();
            let needed = total / (2.0 * p.density * band.half_width);
            base.max(needed.ceil() as usize + mu.pieces().len())
        }
    }
}

/// Tilted estimate of the pure-wave window event
/// `{ N(T)/T in [(X - 2 eps)/pi, (X + 2 eps)/pi] }`.
pub fn tilted_tail(mu: &SpectralMeasure, cfg: &TiltConfig) -> Result<TiltRun, TailError> {
    let lo = (cfg.x_target - 2.0 * cfg.eps) / std::f64::consts::PI;
    let hi = (cfg.x_target + 2.0 * cfg.eps) / std::f64::consts::PI;
    tilted_event_tail(mu, cfg, move |count, t| {
        let density = count as f64 / t;
        density >= lo && density <= hi
    })
}

/// Tilted estimate of an arbitrary count event (`event(count, T)`).
///
/// The tilt construction is identical to [`tilted_tail`]; only the indicator
/// changes, so naive/tilted agreement can be validated on cheap events.
pub fn tilted_event_tail<E>(
    mu: &SpectralMeasure,
    cfg: &TiltConfig,
    event: E,
) -> Result<TiltRun, TailError>
where
    E: Fn(usize, f64) -> bool + Sync,
{
    let t = cfg.t_horizon;
    let band = mu.select_heavy_band(cfg.x_target, cfg.eps, t)?;
    let interval_mass = mu.band_mass(&BandQuery::new(cfg.x_target, cfg.eps));
    let kappa = cfg.eps / (10.0 * interval_mass);
    let l_param = cfg.l_override.unwrap_or_else(|| kappa.powf(-1.0 / 3.0));

    let n_freq = cfg.n_freq.unwrap_or_else(|| tilted_default_n_freq(mu, t, &band));
    let frame = Arc::new(WaveExpansion::discretize(mu, n_freq));

    let (carriers, fallback) = band_carriers(&frame, &band);
    let w_band: f64 = carriers.iter().map(|&j| frame.weights()[j]).sum();
    let mut shifts = vec![[0.0, 0.0]; frame.len()];
    if l_param > 0.0 {
        // E[sum_J sqrt(w_j) xi_j] = 10 L: the certificate floor sits at the
        // tilted mean, so about half the samples clear it
        for &j in &carriers {
            shifts[j][0] = 10.0 * l_param * frame.sqrt_weights()[j] / w_band;
        }
    }
    let theta = 10.0 * l_param / w_band.sqrt();

    let window = (
        (cfg.x_target - 2.0 * cfg.eps) / std::f64::consts::PI,
        (cfg.x_target + 2.0 * cfg.eps) / std::f64::consts::PI,
    );

    struct SampleRecord {
        llr: f64,
        hit: bool,
        cert: Option<(bool, bool)>, // (fired, window agrees with count)
    }

    let step = default_grid_step(&frame);
    let records: Vec<SampleRecord> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| {
            let path =
                sample_path_tilted(&frame, &mut stream_rng(cfg.base_seed, i as u64), &shifts);
            let count = count_zeros(&path, t, step).expect("default step is admissible").count;
            let cert = if cfg.check_certificates {
                let c = wave_certificate_for_band(
                    &path,
                    &band,
                    cfg.x_target,
                    cfg.eps,
                    l_param,
                    t,
                );
                Some((c.fired(), c.window_contains(count)))
            } else {
                None
            };
            SampleRecord { llr: path.log_likelihood_ratio(), hit: event(count, t), cert }
        })
        .collect();

    let n = cfg.n_samples as f64;
    let hits = records.iter().filter(|r| r.hit).count() as u64;
    let hit_llrs: Vec<f64> = records.iter().filter(|r| r.hit).map(|r| r.llr).collect();
    let all_llrs: Vec<f64> = records.iter().map(|r| r.llr).collect();

    // log-space accounting keeps the estimate finite far below underflow
    let log_p = if hits == 0 { f64::NEG_INFINITY } else { log_sum_exp(&hit_llrs) - n.ln() };
    let max_llr = hit_llrs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let p_hat = if hits > 0 && max_llr > -700.0 {
        // linear-space sum is exact for untilted runs (all weights are 1)
        hit_llrs.iter().map(|l| l.exp()).sum::<f64>() / n
    } else {
        log_p.exp()
    };

    let double_llrs: Vec<f64> = all_llrs.iter().map(|l| 2.0 * l).collect();
    let ess = (2.0 * log_sum_exp(&all_llrs) - log_sum_exp(&double_llrs)).exp();

    // delta-method SE of ln p from the weighted second moment, in log space
    let log_p_se = if hits > 0 {
        let double_hit: Vec<f64> = hit_llrs.iter().map(|l| 2.0 * l).collect();
        let log_ey2 = log_sum_exp(&double_hit) - n.ln();
        let rel_var = ((log_ey2 - 2.0 * log_p).exp() - 1.0).max(0.0);
        Some((rel_var / n).sqrt())
    } else {
        None
    };
    let se = log_p_se.map(|s| s * p_hat).unwrap_or(0.0);
    let ci = ((p_hat - Z_95 * se).max(0.0), (p_hat + Z_95 * se).min(1.0).max(p_hat));

    let certificates = if cfg.check_certificates {
        let mut summary = CertificateSummary { n_checked: records.len(), ..Default::default() };
        for r in &records {
            if let Some((fired, agrees)) = r.cert {
                if fired {
                    summary.n_fired += 1;
                    if !agrees {
                        summary.n_contradictions += 1;
                    }
                }
            }
        }
        Some(summary)
    } else {
        None
    };

    Ok(TiltRun {
        estimate: TailEstimate {
            t_horizon: t,
            eta: cfg.x_target / std::f64::consts::PI,
            side: Side::Over,
            estimator: EstimatorKind::Tilted,
            n_samples: cfg.n_samples,
            hits,
            ess: Some(ess),
            p_hat,
            ci,
            log_p,
            log_p_se,
            tilt: Some(TiltDescriptor {
                band_center: band.center,
                band_half_width: band.half_width,
                theta,
                l_param,
                kappa,
                n_carriers: carriers.len(),
                fallback_carrier: fallback,
                window,
            }),
            degenerate_ess: ess < ESS_FLOOR,
        },
        certificates,
    })
}

/// Frame indices inside the band; falls back to the single nearest node when
/// the band is narrower than the node spacing.
fn band_carriers(frame: &WaveExpansion, band: &BandQuery) -> (Vec<usize>, bool) {
    let carriers: Vec<usize> = frame
        .frequencies()
        .iter()
        .enumerate()
        .filter(|(_, &l)| (l - band.center).abs() <= band.half_width + 1e-12)
        .map(|(j, _)| j)
        .collect();
    if carriers.is_empty() {
        let nearest = frame
            .frequencies()
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (*a - band.center).abs().total_cmp(&(*b - band.center).abs())
            })
            .map(|(j, _)| j)
            .expect("frame is nonempty");
        (vec![nearest], true)
    } else {
        (carriers, false)
    }
}

/// Deterministic pure-wave certificate for one path.
#[derive(Debug, Clone)]
pub struct WaveCertificate {
    pub band_center: f64,
    pub band_half_width: f64,
    pub l_param: f64,
    /// `sum_J sqrt(w_j) xi_j`, the band coefficient in the pure-wave direction.
    pub band_amplitude: f64,
    /// The floor `10 L` the band amplitude must clear.
    pub amplitude_floor: f64,
    pub residual_sup: f64,
    pub residual_deriv_sup: f64,
    /// Band coefficient clears the floor.
    pub e1_amplitude: bool,
    /// Residual sup over `[0, T]` at most `L`.
    pub e2_residual: bool,
    /// Residual derivative sup at most `a L`.
    pub e3_residual_deriv: bool,
    /// `|F| > (cos(pi/4) - 1/2) * amplitude` throughout `S1`.
    pub s1_floor: bool,
    /// `|F'| > (sin(pi/4) - 1/2) * a * amplitude` throughout `S2`.
    pub s2_derivative_floor: bool,
    /// `sgn F(k pi / a) = (-1)^k` on the lattice.
    pub sign_alternation: bool,
    /// The window parameter the tilt was aiming for.
    pub eps_input: f64,
    /// Achieved window offset `|a - X| + half_width`.
    pub eps_effective: f64,
    /// Certified count window `[floor(aT/pi), floor(aT/pi) + 1]`: the lattice
    /// gaps force one zero each and the `S2` derivative floor forbids doubles,
    /// with at most one extra zero in the trailing partial interval.
    pub certified_window: (usize, usize),
    pub n_carriers: usize,
    pub fallback_carrier: bool,
}

impl WaveCertificate {
    /// All conditions hold: the zero structure of the path is certified.
    pub fn fired(&self) -> bool {
        self.e1_amplitude
            && self.e2_residual
            && self.e3_residual_deriv
            && self.s1_floor
            && self.s2_derivative_floor
            && self.sign_alternation
    }

    pub fn window_contains(&self, count: usize) -> bool {
        count >= self.certified_window.0 && count <= self.certified_window.1
    }
}

/// Certificate with the band implied by the usual scaling `w = a / (10 T)`.
pub fn wave_certificate(
    path: &PathRealization,
    a: f64,
    eps: f64,
    l_param: f64,
    t: f64,
) -> WaveCertificate {
    let band = BandQuery::new(a, a / (10.0 * t));
    wave_certificate_for_band(path, &band, a, eps, l_param, t)
}

/// Certificate against an explicit band (as used by the tilted sampler).
pub fn wave_certificate_for_band(
    path: &PathRealization,
    band: &BandQuery,
    x_target: f64,
    eps: f64,
    l_param: f64,
    t: f64,
) -> WaveCertificate {
    let a = band.center;
    assert!(a > 0.0 && t > 0.0);
    let frame = path.frame();
    let (carriers, fallback) = band_carriers(frame, band);
    let w_band: f64 = carriers.iter().map(|&j| frame.weights()[j]).sum();
    let band_amplitude: f64 = carriers
        .iter()
        .map(|&j| frame.sqrt_weights()[j] * path.coeffs()[j][0])
        .sum();

    // residual G = F - xi_1 f1hat, the projection complement of the pure-wave
    // direction; evaluated through the carrier kernel
    let residual = |x: f64| -> f64 {
        let f1: f64 = carriers
            .iter()
            .map(|&j| frame.weights()[j] * (frame.frequencies()[j] * x).cos())
            .sum();
        path.value(x) - band_amplitude * f1 / w_band
    };
    let residual_deriv = |x: f64| -> f64 {
        let f1d: f64 = carriers
            .iter()
            .map(|&j| {
                let l = frame.frequencies()[j];
                -frame.weights()[j] * l * (l * x).sin()
            })
            .sum();
        path.derivative(x) - band_amplitude * f1d / w_band
    };

    let sigma = frame.max_frequency().max(a);
    let step = std::f64::consts::PI / (40.0 * sigma);
    let n = ((t / step).ceil() as usize).max(1);
    let h = t / n as f64;
    let mut residual_sup = 0.0f64;
    let mut residual_deriv_sup = 0.0f64;
    for i in 0..=n {
        let x = i as f64 * h;
        residual_sup = residual_sup.max(residual(x).abs());
        residual_deriv_sup = residual_deriv_sup.max(residual_deriv(x).abs());
    }

    let amplitude_floor = 10.0 * l_param;
    let e1 = band_amplitude >= amplitude_floor - 1e-9;
    let e2 = residual_sup <= l_param + 1e-12;
    let e3 = residual_deriv_sup <= a * l_param + 1e-12;

    // S1 = lattice +- pi/(4a); S2 = the complementary quarter-to-three-quarter
    // intervals; 17 probe points per interval
    let quarter = std::f64::consts::PI / (4.0 * a);
    let pitch = std::f64::consts::PI / a;
    let lattice_count = (a * t / std::f64::consts::PI).floor() as usize;
    let s1_level = (std::f64::consts::FRAC_PI_4.cos() - 0.5) * band_amplitude;
    let s2_level = (std::f64::consts::FRAC_PI_4.sin() - 0.5) * a * band_amplitude;
    let mut s1 = true;
    let mut s2 = true;
    let probes = 17;
    for k in 0..=(lattice_count + 1) {
        let center = k as f64 * pitch;
        for i in 0..probes {
            let frac = i as f64 / (probes - 1) as f64;
            let x1 = center - quarter + 2.0 * quarter * frac;
            if (0.0..=t).contains(&x1) && path.value(x1).abs() <= s1_level {
                s1 = false;
            }
            let x2 = center + quarter + 2.0 * quarter * frac;
            if (0.0..=t).contains(&x2) && path.derivative(x2).abs() <= s2_level {
                s2 = false;
            }
        }
    }

    let mut alternation = true;
    for k in 0..=lattice_count {
        let x = k as f64 * pitch;
        let v = path.value(x);
        let expected = if k % 2 == 0 { 1.0 } else { -1.0 };
        if v.abs() < 1e-12 || v.signum() != expected {
            alternation = false;
            break;
        }
    }

    WaveCertificate {
        band_center: a,
        band_half_width: band.half_width,
        l_param,
        band_amplitude,
        amplitude_floor,
        residual_sup,
        residual_deriv_sup,
        e1_amplitude: e1,
        e2_residual: e2,
        e3_residual_deriv: e3,
        s1_floor: s1,
        s2_derivative_floor: s2,
        sign_alternation: alternation,
        eps_input: eps,
        eps_effective: (a - x_target).abs() + band.half_width,
        certified_window: (lattice_count, lattice_count + 1),
        n_carriers: carriers.len(),
        fallback_carrier: fallback,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayRegime {
    /// `log p` is better explained as linear in `T`.
    ExponentialInT,
    /// `log p` is better explained as linear in `T^2`.
    GaussianInT2,
}

/// Regression of `log p_hat` against `T` and against `T^2`.
#[derive(Debug, Clone)]
pub struct DecayFit {
    pub n_points: usize,
    pub linear_slope: f64,
    pub linear_r2: f64,
    pub quadratic_coeff: f64,
    pub quadratic_r2: f64,
    pub regime: DecayRegime,
}

/// Classifies the decay regime of a sequence of estimates at increasing `T`.
pub fn decay_fit(estimates: &[TailEstimate]) -> Result<DecayFit, TailError> {
    let pts: Vec<(f64, f64)> = estimates
        .iter()
        .filter(|e| e.log_p.is_finite())
        .map(|e| (e.t_horizon, e.log_p))
        .collect();
    if pts.len() < 3 {
        return Err(TailError::InsufficientData(pts.len()));
    }
    let ts: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let t2s: Vec<f64> = pts.iter().map(|p| p.0 * p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (_, slope, r2_lin) = linear_fit(&ts, &ys);
    let (_, coeff, r2_quad) = linear_fit(&t2s, &ys);
    Ok(DecayFit {
        n_points: pts.len(),
        linear_slope: slope,
        linear_r2: r2_lin,
        quadratic_coeff: coeff,
        quadratic_r2: r2_quad,
        regime: if r2_lin >= r2_quad {
            DecayRegime::ExponentialInT
        } else {
            DecayRegime::GaussianInT2
        },
    })
}
