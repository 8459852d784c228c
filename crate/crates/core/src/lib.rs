//! Constructive Walsh–Fourier divergence toolkit.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectral`] and [`point`] hold exact integers stored by their binary
//!   spectrum and points of `[0, 1)` with finite binary expansions.
//! * [`sequence`] classifies index sequences (nested / separated spectra).
//! * [`walsh`] evaluates Walsh functions, runs the fast Walsh–Hadamard
//!   transform and builds Dirichlet kernels.
//! * [`orlicz`] builds piecewise-linear growth functions and their
//!   transforms (interpolants, N-function repair, Young conjugates).
//! * [`witness`] builds the divergence polynomials, their exceptional sets
//!   and the truncated multi-level witness.
//!
//! Numeric code is generic over [`Scalar`] / [`Real`]; the aliases below
//! fix the instantiations used throughout the tooling.

pub mod error;
pub mod expfloat;
pub mod orlicz;
pub mod point;
pub mod scalar;
pub mod sequence;
pub mod spectral;
pub mod walsh;
pub mod witness;

pub use error::{Error, Result};
pub use expfloat::ExpFloat;
pub use point::DyadicPoint;
pub use scalar::{Real, Scalar};
pub use spectral::SpectralNat;

/// Exact rational scalar used for norms, measures and exact cut values.
pub type Rational = num_rational::Ratio<i128>;

/// Integer-valued grid (Dirichlet kernels, sign functions, products).
pub type IntGrid = walsh::StepFunction<i64>;
/// Float-valued grid.
pub type FloatGrid = walsh::StepFunction<f64>;
/// Exact rational grid.
pub type RationalGrid = walsh::StepFunction<Rational>;

/// Growth function with exponent-coded abscissae (knots far beyond `f64`).
pub type Phi = orlicz::PiecewiseConvex<ExpFloat>;
/// Growth function with exact rational knots and slopes.
pub type RationalPhi = orlicz::PiecewiseConvex<Rational>;
/// Growth function over plain floats.
pub type FloatPhi = orlicz::PiecewiseConvex<f64>;
