//! Symmetric, compactly supported spectral measures.
//!
//! A measure is stored by its positive half: point masses (atoms) at
//! frequencies `lambda > 0`, an optional atom at `lambda = 0`, and
//! piecewise-constant density pieces on `[lo, hi]` with `0 <= lo < hi`.
//! The measure itself is the mirror-symmetric extension: every positive-side
//! object is paired with its reflection, and the total mass over the whole
//! line is normalized to 1 so that the covariance kernel satisfies `k(0) = 1`.
//!
//! Atom masses and piece densities are per positive side; the zero atom, if
//! present, carries its full mass. All functionals below (moments, kernel,
//! band masses) account for the mirror copy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for the normalization invariant `mass(R) = 1`.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Below this |t| the kernel piece contribution switches to a Taylor series
/// to avoid cancellation in `(sin(u t) - sin(l t)) / t`.
const KERNEL_SERIES_CUTOFF: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("measure has no atoms and no density pieces")]
    Empty,
    #[error("total mass over R is {total}, not 1 (within {MASS_TOLERANCE:e}); load with normalize=true to rescale")]
    NotNormalized { total: f64 },
    #[error("atom at frequency {frequency} is invalid (need finite frequency >= 0 and mass > 0)")]
    InvalidAtom { frequency: f64 },
    #[error("density piece [{lo}, {hi}] with density {density} is invalid (need 0 <= lo < hi and density > 0)")]
    InvalidPiece { lo: f64, hi: f64, density: f64 },
    #[error("density pieces [{lo_a}, {hi_a}] and [{lo_b}, {hi_b}] overlap")]
    OverlappingPieces { lo_a: f64, hi_a: f64, lo_b: f64, hi_b: f64 },
    #[error("atom at frequency {frequency} lies in the interior of a density piece")]
    AtomInsidePiece { frequency: f64 },
    #[error("band around {center} carries no spectral mass")]
    EmptyBand { center: f64 },
    #[error("measure JSON is malformed: {0}")]
    Parse(String),
}

/// Point mass at `frequency >= 0`; `mass` counts one side only for
/// `frequency > 0` and the full mass for `frequency = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    #[serde(rename = "lambda")]
    pub frequency: f64,
    pub mass: f64,
}

/// Constant density `density` on `[lo, hi]` on the positive half-line,
/// mirrored on the negative side with the same density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityPiece {
    pub lo: f64,
    pub hi: f64,
    pub density: f64,
}

impl DensityPiece {
    fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Mass of one side of the piece.
    fn side_mass(&self) -> f64 {
        self.density * self.width()
    }
}

/// A frequency band `[center - half_width, center + half_width]` on the
/// positive half-line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandQuery {
    pub center: f64,
    pub half_width: f64,
}

impl BandQuery {
    pub fn new(center: f64, half_width: f64) -> Self {
        assert!(half_width > 0.0, "band half-width must be positive");
        Self { center, half_width }
    }

    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }
}

/// Symmetric compactly supported spectral measure, stored by its positive half.
///
/// Immutable after construction; shares freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeasure {
    /// Mass at frequency 0 (total, not per side).
    zero_atom: Option<f64>,
    /// Atoms at strictly positive frequencies, sorted, per-side masses.
    atoms: Vec<Atom>,
    /// Disjoint density pieces, sorted by `lo`, per-side densities.
    pieces: Vec<DensityPiece>,
}

/// On-disk JSON schema for a measure.
///
/// `{"atoms":[{"lambda":1.0,"mass":0.5}],
///   "pieces":[{"lo":1.0,"hi":2.0,"density":0.25}],
///   "normalize":false}`
///
/// Masses and densities are per positive side (mirror copies are implied);
/// an atom with `lambda = 0` carries its full mass. With `normalize=true`
/// the loader rescales to total mass 1, otherwise a mass defect is an error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureSchema {
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub pieces: Vec<DensityPiece>,
    #[serde(default)]
    pub normalize: bool,
}

impl SpectralMeasure {
    /// Builds a measure and validates every structural invariant:
    /// positive masses/densities, disjoint pieces, atoms outside piece
    /// interiors, and total mass 1 within [`MASS_TOLERANCE`].
    pub fn new(atoms: Vec<Atom>, pieces: Vec<DensityPiece>) -> Result<Self, MeasureError> {
        let mut zero_mass = 0.0f64;
        let mut pos_atoms: Vec<Atom> = Vec::new();
        for a in atoms {
            if !a.frequency.is_finite() || !a.mass.is_finite() || a.frequency < 0.0 || a.mass <= 0.0 {
                return Err(MeasureError::InvalidAtom { frequency: a.frequency });
            }
            if a.frequency == 0.0 {
                zero_mass += a.mass;
            } else {
                pos_atoms.push(a);
            }
        }
        pos_atoms.sort_by(|x, y| x.frequency.total_cmp(&y.frequency));
        // merge coincident atoms
        let mut merged: Vec<Atom> = Vec::with_capacity(pos_atoms.len());
        for a in pos_atoms {
            match merged.last_mut() {
                Some(prev) if (prev.frequency - a.frequency).abs() <= 1e-12 => prev.mass += a.mass,
                _ => merged.push(a),
            }
        }

        let mut pieces = pieces;
        for p in &pieces {
            let ok = p.lo.is_finite()
                && p.hi.is_finite()
                && p.density.is_finite()
                && p.lo >= 0.0
                && p.lo < p.hi
                && p.density > 0.0;
            if !ok {
                return Err(MeasureError::InvalidPiece { lo: p.lo, hi: p.hi, density: p.density });
            }
        }
        pieces.sort_by(|x, y| x.lo.total_cmp(&y.lo));
        for w in pieces.windows(2) {
            if w[1].lo < w[0].hi {
                return Err(MeasureError::OverlappingPieces {
                    lo_a: w[0].lo,
                    hi_a: w[0].hi,
                    lo_b: w[1].lo,
                    hi_b: w[1].hi,
                });
            }
        }
        for a in &merged {
            for p in &pieces {
                if a.frequency > p.lo && a.frequency < p.hi {
                    return Err(MeasureError::AtomInsidePiece { frequency: a.frequency });
                }
            }
        }

        let measure = Self {
            zero_atom: if zero_mass > 0.0 { Some(zero_mass) } else { None },
            atoms: merged,
            pieces,
        };
        if measure.zero_atom.is_none() && measure.atoms.is_empty() && measure.pieces.is_empty() {
            return Err(MeasureError::Empty);
        }
        let total = measure.total_mass();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(MeasureError::NotNormalized { total });
        }
        Ok(measure)
    }

    /// Like [`SpectralMeasure::new`] but rescales all masses and densities so
    /// the total mass becomes exactly 1 first.
    pub fn normalized(atoms: Vec<Atom>, pieces: Vec<DensityPiece>) -> Result<Self, MeasureError> {
        let mut total = 0.0;
        for a in &atoms {
            total += if a.frequency == 0.0 { a.mass } else { 2.0 * a.mass };
        }
        for p in &pieces {
            total += 2.0 * p.density * (p.hi - p.lo);
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(MeasureError::Empty);
        }
        let atoms = atoms
            .into_iter()
            .map(|a| Atom { frequency: a.frequency, mass: a.mass / total })
            .collect();
        let pieces = pieces
            .into_iter()
            .map(|p| DensityPiece { lo: p.lo, hi: p.hi, density: p.density / total })
            .collect();
        Self::new(atoms, pieces)
    }

    /// The pure tone `(delta_lambda + delta_{-lambda}) / 2`.
    pub fn pure_tone(lambda: f64) -> Self {
        Self::new(vec![Atom { frequency: lambda, mass: 0.5 }], vec![])
            .expect("pure tone is a valid normalized measure")
    }

    /// Uniform density on `±[lo, hi]` with total mass 1.
    pub fn uniform_band(lo: f64, hi: f64) -> Self {
        let density = 0.5 / (hi - lo);
        Self::new(vec![], vec![DensityPiece { lo, hi, density }])
            .expect("uniform band is a valid normalized measure")
    }

    pub fn from_schema(schema: MeasureSchema) -> Result<Self, MeasureError> {
        if schema.normalize {
            Self::normalized(schema.atoms, schema.pieces)
        } else {
            Self::new(schema.atoms, schema.pieces)
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self, MeasureError> {
        let schema: MeasureSchema =
            serde_json::from_str(s).map_err(|e| MeasureError::Parse(e.to_string()))?;
        Self::from_schema(schema)
    }

    pub fn to_schema(&self) -> MeasureSchema {
        let mut atoms = Vec::new();
        if let Some(z) = self.zero_atom {
            atoms.push(Atom { frequency: 0.0, mass: z });
        }
        atoms.extend_from_slice(&self.atoms);
        MeasureSchema { atoms, pieces: self.pieces.clone(), normalize: false }
    }

    pub fn zero_atom(&self) -> Option<f64> {
        self.zero_atom
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn pieces(&self) -> &[DensityPiece] {
        &self.pieces
    }

    /// Total mass over the whole line (positive side doubled, zero atom once).
    pub fn total_mass(&self) -> f64 {
        let mut total = self.zero_atom.unwrap_or(0.0);
        for a in &self.atoms {
            total += 2.0 * a.mass;
        }
        for p in &self.pieces {
            total += 2.0 * p.side_mass();
        }
        total
    }

    /// `integral lambda^p d mu(lambda)` in closed form; `p` must be even.
    ///
    /// Compact support makes every moment finite; `moment(0) = 1` by
    /// normalization.
    pub fn moment(&self, p: u32) -> f64 {
        assert!(p % 2 == 0, "odd moments vanish by symmetry; p must be even");
        if p == 0 {
            return self.total_mass();
        }
        let mut m = 0.0;
        for a in &self.atoms {
            m += 2.0 * a.mass * a.frequency.powi(p as i32);
        }
        let q = p as i32 + 1;
        for piece in &self.pieces {
            m += 2.0 * piece.density * (piece.hi.powi(q) - piece.lo.powi(q)) / q as f64;
        }
        m
    }

    /// Covariance kernel `k(t) = integral cos(lambda t) d mu(lambda)`.
    ///
    /// Atoms contribute `2 m cos(lambda t)`; a piece `[l, u]` with per-side
    /// density `d` contributes `2 d (sin(u t) - sin(l t)) / t`, evaluated by a
    /// 3-term Taylor series for very small `|t|`.
    pub fn covariance(&self, t: f64) -> f64 {
        let mut k = self.zero_atom.unwrap_or(0.0);
        for a in &self.atoms {
            k += 2.0 * a.mass * (a.frequency * t).cos();
        }
        for p in &self.pieces {
            k += if t.abs() < KERNEL_SERIES_CUTOFF {
                let (l, u) = (p.lo, p.hi);
                let t2 = t * t;
                2.0 * p.density
                    * ((u - l) - t2 * (u.powi(3) - l.powi(3)) / 6.0
                        + t2 * t2 * (u.powi(5) - l.powi(5)) / 120.0)
            } else {
                2.0 * p.density * ((p.hi * t).sin() - (p.lo * t).sin()) / t
            };
        }
        k
    }

    /// Support bracket `(B, A)`: the largest `B` and smallest `A` with
    /// `sprt(mu) ⊆ [-A, -B] ∪ [B, A]`. `B = 0` when mass reaches the origin.
    pub fn support_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        if self.zero_atom.is_some() {
            lo = 0.0;
        }
        for a in &self.atoms {
            lo = lo.min(a.frequency);
            hi = hi.max(a.frequency);
        }
        for p in &self.pieces {
            lo = lo.min(p.lo);
            hi = hi.max(p.hi);
        }
        (lo.min(hi), hi)
    }

    /// Mass of the positive-side band `[center - w, center + w]`.
    ///
    /// Atoms on the boundary are included; the zero atom counts when the band
    /// reaches 0. The negative mirror is not counted.
    pub fn band_mass(&self, band: &BandQuery) -> f64 {
        self.positive_interval_mass(band.lo(), band.hi())
    }

    fn positive_interval_mass(&self, lo: f64, hi: f64) -> f64 {
        if hi < 0.0 || hi < lo {
            return 0.0;
        }
        let mut mass = 0.0;
        if lo <= 0.0 {
            mass += self.zero_atom.unwrap_or(0.0);
        }
        for a in &self.atoms {
            if a.frequency >= lo && a.frequency <= hi {
                mass += a.mass;
            }
        }
        let lo = lo.max(0.0);
        for p in &self.pieces {
            let overlap = p.hi.min(hi) - p.lo.max(lo);
            if overlap > 0.0 {
                mass += p.density * overlap;
            }
        }
        mass
    }

    /// Picks a heavy band of half-width `x / (10 T)` inside `(x - eps, x + eps)`.
    ///
    /// Candidate centers are the midpoints of an equal partition of the
    /// interval (cells no wider than the band), plus any atoms in the interval
    /// and `x` itself; the band with maximal positive-side mass wins, ties
    /// broken towards `x`. By pigeonhole the winner carries at least
    /// `half_width / (2 eps)` of the interval's positive-side mass whenever
    /// `half_width <= eps`.
    pub fn select_heavy_band(
        &self,
        x: f64,
        eps: f64,
        t_horizon: f64,
    ) -> Result<BandQuery, MeasureError> {
        assert!(x > 0.0 && eps > 0.0 && t_horizon > 0.0);
        let interval_mass = self.positive_interval_mass(x - eps, x + eps);
        if interval_mass <= 0.0 {
            return Err(MeasureError::EmptyBand { center: x });
        }
        let w = x / (10.0 * t_horizon);
        let cells = ((eps / w).ceil() as usize).max(1);
        let cell_width = 2.0 * eps / cells as f64;
        let mut candidates: Vec<f64> = (0..cells)
            .map(|i| x - eps + (i as f64 + 0.5) * cell_width)
            .collect();
        candidates.push(x);
        for a in &self.atoms {
            if a.frequency > x - eps && a.frequency < x + eps {
                candidates.push(a.frequency);
            }
        }
        let mut best: Option<(f64, f64)> = None; // (center, mass)
        for &c in &candidates {
            let mass = self.band_mass(&BandQuery { center: c, half_width: w });
            let better = match best {
                None => true,
                Some((bc, bm)) => {
                    mass > bm + 1e-15
                        || ((mass - bm).abs() <= 1e-15
                            && ((c - x).abs() < (bc - x).abs()
                                || ((c - x).abs() == (bc - x).abs() && c < bc)))
                }
            };
            if better {
                best = Some((c, mass));
            }
        }
        let (center, mass) = best.expect("candidate list is never empty");
        if mass <= 0.0 {
            return Err(MeasureError::EmptyBand { center: x });
        }
        Ok(BandQuery { center, half_width: w })
    }
}
