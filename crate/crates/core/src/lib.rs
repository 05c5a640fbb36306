//! Simulation and zero statistics of stationary Gaussian processes (SGPs)
//! whose spectral measure is symmetric and compactly supported.
//!
//! The crate is organised around the pipeline
//!
//! 1. [`measure`] — spectral measures (atoms + piecewise-constant densities)
//!    and their analytic functionals (moments, covariance kernel, band masses);
//! 2. [`sampler`] — discretisation into a finite random-wave model and path
//!    sampling, plus an exact finite-dimensional Gaussian oracle;
//! 3. [`zeros`] — counting real zeros on `[0, T]` and Kac–Rice comparisons;
//! 4. [`analytic`] — the entire extension of a path: Jensen circle averages,
//!    argument-principle disc counts, growth certificates and the averaged
//!    Jensen upper bound on the zero count;
//! 5. [`coupling`] — the spectral-gap translation `mu -> nu` and the coupled
//!    triple `(F, G, H)` with `G(x) = cos(Ax) F(x) + sin(Ax) H(x)`;
//! 6. [`tails`] — naive and exponentially tilted Monte Carlo estimators of
//!    overcrowding/undercrowding probabilities, pure-wave certificates and
//!    decay-regime fits.

pub mod analytic;
pub mod coupling;
pub mod measure;
pub mod sampler;
pub mod stats;
pub mod tails;
pub mod zeros;

pub use measure::{BandQuery, SpectralMeasure};
pub use sampler::{PathRealization, WaveExpansion};
