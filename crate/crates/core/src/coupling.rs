//! Spectral-gap coupling: translate a measure supported on `±[B, A]` down to
//! the origin and couple the two processes.
//!
//! `build_nu` translates each positive-side object at frequency `lambda` to
//! `A - lambda` (mirrored), producing a measure `nu` supported on
//! `[B - A, A - B]`. For a path `F` on a `mu`-frame, `couple` constructs
//!
//! * `H` on the same frame with coefficient pairs rotated by a quarter turn,
//!   `(xi, eta) -> (-eta, xi)` — an orthogonal map, so `H` has the law of `F`;
//! * `G` on the translated frequencies `A - lambda_j` with the same weights
//!   and coefficients `(xi, -eta)`.
//!
//! Per frequency the trigonometric identity
//! `cos(At)(xi cos lt + eta sin lt) + sin(At)(-eta cos lt + xi sin lt)
//!   = xi cos((A-l)t) - eta sin((A-l)t)`
//! makes `G(x) = cos(Ax) F(x) + sin(Ax) H(x)` exact, hence
//! `G(k pi / A) = (-1)^k F(k pi / A)` on the lattice and
//! `N_F(T) >= floor(A T / pi) - N_G(T)` whenever no zero sits on the lattice.

use std::sync::Arc;

use thiserror::Error;

use crate::measure::{Atom, DensityPiece, SpectralMeasure};
use crate::sampler::{PathRealization, WaveExpansion};
use crate::zeros::{count_zeros, default_grid_step};

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("frame frequency {frequency} exceeds the support edge {edge}")]
    FrequencyOutOfBand { frequency: f64, edge: f64 },
}

/// The translated measure `nu(S) = mu_+(S + A) + mu_-(S - A)`.
///
/// Positive-side atoms at `lambda` become atoms at `A - lambda` (an atom at
/// `A` collapses to a zero atom with both sides' mass); pieces `[l, u]` become
/// `[A - u, A - l]` with the same per-side density. Total mass is preserved
/// exactly and the result is supported on `[B - A, A - B]`.
pub fn build_nu(mu: &SpectralMeasure) -> SpectralMeasure {
    let (_, a_edge) = mu.support_bounds();
    let mut atoms: Vec<Atom> = Vec::new();
    if let Some(z) = mu.zero_atom() {
        if a_edge <= 1e-15 {
            // a pure point mass at the origin is a fixed point
            atoms.push(Atom { frequency: 0.0, mass: z });
        } else {
            // the zero atom sits at distance A from the edge, half per side
            atoms.push(Atom { frequency: a_edge, mass: z / 2.0 });
        }
    }
    for atom in mu.atoms() {
        let shifted = a_edge - atom.frequency;
        if shifted.abs() <= 1e-15 {
            atoms.push(Atom { frequency: 0.0, mass: 2.0 * atom.mass });
        } else {
            atoms.push(Atom { frequency: shifted, mass: atom.mass });
        }
    }
    let pieces: Vec<DensityPiece> = mu
        .pieces()
        .iter()
        .map(|p| DensityPiece { lo: a_edge - p.hi, hi: a_edge - p.lo, density: p.density })
        .collect();
    SpectralMeasure::new(atoms, pieces).expect("translation preserves mass and disjointness")
}

/// The coupled triple `(F, H, G)` sharing one coefficient draw.
#[derive(Debug, Clone)]
pub struct CouplingTriple {
    pub f_path: PathRealization,
    pub h_path: PathRealization,
    pub g_path: PathRealization,
    /// The translation frequency `A` (support edge of the `mu`-frame).
    pub translation: f64,
}

/// Builds `H` and `G` from a path on a `mu`-frame.
///
/// Coincident translated frequencies (symmetric discretizations) are merged
/// with weight-proportional mixing, which keeps the pointwise identity exact;
/// a frequency collapsing to 0 keeps only its cosine coefficient active
/// (`sin(0 t) = 0` contributes nothing) but the inert value is retained by
/// the mixing so nothing is lost from the identity.
pub fn couple(f_path: &PathRealization) -> Result<CouplingTriple, CouplingError> {
    let frame = f_path.frame();
    let (_, a_edge) = frame.source().support_bounds();
    for &l in frame.frequencies() {
        if l > a_edge + 1e-12 {
            return Err(CouplingError::FrequencyOutOfBand { frequency: l, edge: a_edge });
        }
    }

    let quarter_turn: Vec<[f64; 2]> = f_path.coeffs().iter().map(|c| [-c[1], c[0]]).collect();
    let h_tilt = f_path
        .tilt()
        .map(|tilt| tilt.iter().map(|t| [-t[1], t[0]]).collect::<Vec<_>>());
    let h_path = PathRealization::new(Arc::clone(frame), quarter_turn, h_tilt);

    // translated entries, sorted by the new frequency (reverse of lambda)
    struct Entry {
        freq: f64,
        weight: f64,
        coeff: [f64; 2],
        tilt: Option<[f64; 2]>,
    }
    let mut entries: Vec<Entry> = Vec::with_capacity(frame.len());
    for j in (0..frame.len()).rev() {
        let lambda = frame.frequencies()[j];
        let mut freq = a_edge - lambda;
        if freq.abs() <= 1e-12 {
            freq = 0.0;
        }
        let c = f_path.coeffs()[j];
        entries.push(Entry {
            freq,
            weight: frame.weights()[j],
            coeff: [c[0], -c[1]],
            tilt: f_path.tilt().map(|t| [t[j][0], -t[j][1]]),
        });
    }

    let mut freqs: Vec<f64> = Vec::with_capacity(entries.len());
    let mut weights: Vec<f64> = Vec::with_capacity(entries.len());
    let mut coeffs: Vec<[f64; 2]> = Vec::with_capacity(entries.len());
    let mut tilts: Vec<[f64; 2]> = Vec::with_capacity(entries.len());
    let mut any_tilt = false;
    for e in entries {
        if let (Some(last), Some(w)) = (freqs.last(), weights.last().copied()) {
            if (e.freq - last).abs() <= 1e-12 {
                // sqrt(w1) c1 + sqrt(w2) c2 = sqrt(w1 + w2) mixed
                let total = w + e.weight;
                let mix = |a: f64, b: f64| (w.sqrt() * a + e.weight.sqrt() * b) / total.sqrt();
                let c = coeffs.last_mut().unwrap();
                *c = [mix(c[0], e.coeff[0]), mix(c[1], e.coeff[1])];
                let t = tilts.last_mut().unwrap();
                let et = e.tilt.unwrap_or([0.0, 0.0]);
                *t = [mix(t[0], et[0]), mix(t[1], et[1])];
                *weights.last_mut().unwrap() = total;
                continue;
            }
        }
        freqs.push(e.freq);
        weights.push(e.weight);
        coeffs.push(e.coeff);
        any_tilt |= e.tilt.is_some();
        tilts.push(e.tilt.unwrap_or([0.0, 0.0]));
    }

    let nu = build_nu(frame.source());
    let g_frame = Arc::new(
        WaveExpansion::new(freqs, weights, nu).expect("translated frame stays inside nu support"),
    );
    let g_path = PathRealization::new(g_frame, coeffs, if any_tilt { Some(tilts) } else { None });

    Ok(CouplingTriple {
        f_path: f_path.clone(),
        h_path,
        g_path,
        translation: a_edge,
    })
}

/// Verification report for one triple.
#[derive(Debug, Clone)]
pub struct CouplingReport {
    /// Worst `|G(x) - cos(Ax) F(x) - sin(Ax) H(x)|` on the check grid.
    pub identity_residual: f64,
    /// Worst `|G(k pi / A) - (-1)^k F(k pi / A)|` on the lattice.
    pub lattice_residual: f64,
    pub n_f: usize,
    pub n_g: usize,
    /// `floor(A T / pi)`.
    pub lattice_count: usize,
    pub identity_ok: bool,
    pub lattice_ok: bool,
    /// `N_F >= floor(AT/pi) - N_G`.
    pub inequality_ok: bool,
    /// A lattice point with `|F| < 1e-12` was seen; the sample should be
    /// redrawn rather than judged (zeros on the lattice are measure-zero).
    pub degenerate_lattice: bool,
}

impl CouplingReport {
    pub fn all_ok(&self) -> bool {
        self.identity_ok && self.lattice_ok && self.inequality_ok
    }

    pub fn inequality_slack(&self) -> i64 {
        self.n_f as i64 + self.n_g as i64 - self.lattice_count as i64
    }
}

/// Checks the pointwise identity on a 1000-point grid of `[0, T]`, the sign
/// lattice relation, and the zero-count inequality.
pub fn verify_coupling(triple: &CouplingTriple, t: f64) -> CouplingReport {
    let a = triple.translation;
    assert!(a > 0.0, "coupling needs a positive translation frequency");
    let grid_points = 1000;
    let mut identity_residual = 0.0f64;
    for i in 0..=grid_points {
        let x = t * i as f64 / grid_points as f64;
        let combined =
            (a * x).cos() * triple.f_path.value(x) + (a * x).sin() * triple.h_path.value(x);
        identity_residual = identity_residual.max((triple.g_path.value(x) - combined).abs());
    }

    let lattice_count = (a * t / std::f64::consts::PI).floor() as usize;
    let mut lattice_residual = 0.0f64;
    let mut degenerate_lattice = false;
    for k in 0..=lattice_count {
        let x = k as f64 * std::f64::consts::PI / a;
        let f = triple.f_path.value(x);
        if f.abs() < 1e-12 {
            degenerate_lattice = true;
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        lattice_residual = lattice_residual.max((triple.g_path.value(x) - sign * f).abs());
    }

    let n_f = count_zeros(&triple.f_path, t, default_grid_step(triple.f_path.frame()))
        .expect("default step is admissible")
        .count;
    let n_g = count_zeros(&triple.g_path, t, default_grid_step(triple.g_path.frame()))
        .expect("default step is admissible")
        .count;

    CouplingReport {
        identity_residual,
        lattice_residual,
        n_f,
        n_g,
        lattice_count,
        identity_ok: identity_residual < 1e-9,
        lattice_ok: lattice_residual < 1e-9,
        inequality_ok: n_f + n_g >= lattice_count,
        degenerate_lattice,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::BandQuery;
    use crate::sampler::{sample_path, stream_rng};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn uniform12() -> SpectralMeasure {
        SpectralMeasure::uniform_band(1.0, 2.0)
    }

    #[test]
    fn nu_of_uniform_band_closes_the_gap() {
        let nu = build_nu(&uniform12());
        assert_eq!(nu.support_bounds(), (0.0, 1.0));
        assert_abs_diff_eq!(nu.total_mass(), 1.0, epsilon = 1e-12);
        assert_eq!(nu.pieces().len(), 1);
        assert_eq!((nu.pieces()[0].lo, nu.pieces()[0].hi), (0.0, 1.0));
        assert_abs_diff_eq!(nu.pieces()[0].density, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn nu_of_pure_tone_is_point_mass_at_zero() {
        let nu = build_nu(&SpectralMeasure::pure_tone(2.0));
        assert_eq!(nu.support_bounds(), (0.0, 0.0));
        assert_eq!(nu.zero_atom(), Some(1.0));
        // degenerate case is a fixed point of the translation
        let nu2 = build_nu(&nu);
        assert_eq!(nu2.zero_atom(), Some(1.0));
    }

    #[test]
    fn nu_translates_atoms_one_by_one() {
        let mu = SpectralMeasure::new(
            vec![
                Atom { frequency: 1.0, mass: 0.25 },
                Atom { frequency: 2.0, mass: 0.25 },
            ],
            vec![],
        )
        .unwrap();
        let nu = build_nu(&mu);
        assert_eq!(nu.zero_atom(), Some(0.5));
        assert_eq!(nu.atoms().len(), 1);
        assert_eq!(nu.atoms()[0].frequency, 1.0);
        assert_eq!(nu.atoms()[0].mass, 0.25);
    }

    #[test]
    fn tone_at_edge_couples_to_a_constant() {
        let frame = Arc::new(WaveExpansion::discretize(&SpectralMeasure::pure_tone(2.0), 1));
        let xi = 1.3;
        let f = PathRealization::new(frame, vec![[xi, 0.7]], None);
        let triple = couple(&f).unwrap();
        for x in [0.0, 0.4, 2.0, 9.3] {
            // cos^2 + sin^2 collapses the pair to the constant xi
            assert_abs_diff_eq!(triple.g_path.value(x), xi, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_wave_couples_to_shifted_cosine() {
        let mu = SpectralMeasure::normalized(
            vec![
                Atom { frequency: 1.5, mass: 0.4 },
                Atom { frequency: 2.0, mass: 0.1 },
            ],
            vec![],
        )
        .unwrap();
        let frame = Arc::new(WaveExpansion::discretize(&mu, 2));
        // put all amplitude on the 1.5 component
        let f = PathRealization::new(frame, vec![[1.0, 0.0], [0.0, 0.0]], None);
        let triple = couple(&f).unwrap();
        let sw = 0.8f64.sqrt();
        for i in 0..100 {
            let x = 0.3 * i as f64;
            assert_abs_diff_eq!(triple.g_path.value(x), sw * (0.5 * x).cos(), epsilon = 1e-12);
        }
    }

    #[test]
    fn quarter_turn_preserves_the_law() {
        // the coefficient map of H is orthogonal per pair, so exact samples map
        // to exact samples; check the empirical kernel of H against mu's
        let mu = uniform12();
        let frame = Arc::new(WaveExpansion::discretize(&mu, 64));
        let n = 10_000;
        let lags = [0.0, 1.0, 2.0];
        let mut acc = [0.0f64; 3];
        let mut var0 = 0.0f64;
        for i in 0..n {
            let f = sample_path(&frame, &mut stream_rng(52, i as u64));
            let triple = couple(&f).unwrap();
            let h0 = triple.h_path.value(0.0);
            var0 += h0 * h0;
            for (k, lag) in lags.iter().enumerate() {
                acc[k] += h0 * triple.h_path.value(*lag);
            }
        }
        var0 /= n as f64;
        assert!((var0 - 1.0).abs() < 0.02, "Var[H(0)] = {var0}");
        for (k, lag) in lags.iter().enumerate() {
            let emp = acc[k] / n as f64;
            let expect = mu.covariance(*lag);
            assert!((emp - expect).abs() < 0.03, "lag {lag}: {emp} vs {expect}");
        }
    }

    #[test]
    fn verify_coupling_on_gap_measure() {
        let frame = Arc::new(WaveExpansion::discretize(&uniform12(), 128));
        for seed in 0..20 {
            let f = sample_path(&frame, &mut stream_rng(53, seed));
            let triple = couple(&f).unwrap();
            let report = verify_coupling(&triple, 50.0);
            assert!(report.identity_ok, "identity residual {}", report.identity_residual);
            assert!(report.lattice_ok, "lattice residual {}", report.lattice_residual);
            assert!(report.inequality_ok, "N_F {} N_G {} floor {}", report.n_f, report.n_g, report.lattice_count);
        }
    }

    #[test]
    fn pure_tone_saturates_the_zero_inequality() {
        let frame = Arc::new(WaveExpansion::discretize(&SpectralMeasure::pure_tone(2.0), 1));
        let t = 40.0;
        for seed in 0..50 {
            let f = sample_path(&frame, &mut stream_rng(54, seed));
            let triple = couple(&f).unwrap();
            let report = verify_coupling(&triple, t);
            // G is a nonzero constant a.s., so N_G = 0 and N_F >= floor(AT/pi)
            assert_eq!(report.n_g, 0);
            assert!(report.n_f >= report.lattice_count);
        }
    }

    #[test]
    fn tilt_transforms_keep_likelihood_ratio() {
        let mu = uniform12();
        let frame = Arc::new(WaveExpansion::discretize(&mu, 16));
        let band = BandQuery { center: 1.5, half_width: 0.2 };
        let shifts: Vec<[f64; 2]> = frame
            .frequencies()
            .iter()
            .map(|&l| if (l - band.center).abs() <= band.half_width { [0.7, 0.0] } else { [0.0, 0.0] })
            .collect();
        let f = crate::sampler::sample_path_tilted(&frame, &mut stream_rng(55, 0), &shifts);
        let triple = couple(&f).unwrap();
        // the rotations are orthogonal coordinate maps applied to both the
        // sample and the shift, so the log likelihood ratio is unchanged
        assert_abs_diff_eq!(
            triple.h_path.log_likelihood_ratio(),
            f.log_likelihood_ratio(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            triple.g_path.log_likelihood_ratio(),
            f.log_likelihood_ratio(),
            epsilon = 1e-12
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn coupling_identity_residual_stays_tiny(
            seed in 0u64..10_000,
            n_freq in 1usize..256,
            lo in 0.5f64..2.0,
            width in 0.1f64..2.0,
        ) {
            let mu = SpectralMeasure::uniform_band(lo, lo + width);
            let frame = Arc::new(WaveExpansion::discretize(&mu, n_freq));
            let f = sample_path(&frame, &mut stream_rng(56, seed));
            let triple = couple(&f).unwrap();
            let a = triple.translation;
            for i in 0..50 {
                let x = 0.37 * i as f64;
                let combined = (a * x).cos() * triple.f_path.value(x)
                    + (a * x).sin() * triple.h_path.value(x);
                prop_assert!((triple.g_path.value(x) - combined).abs() < 1e-9);
            }
        }
    }
}
