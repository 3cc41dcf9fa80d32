//! Recovery of discrete-valued sparse vectors from underdetermined noisy
//! linear measurements `y = A x + n`, where the nonzero entries of `x` are
//! drawn from `{-1, +1}` and the number of nonzeros `s` is known.
//!
//! The crate provides:
//!
//! * the ternary signal model and the quantizers that map real vectors back
//!   to the alphabet ([`signal`]),
//! * partial-unitary measurement ensembles `A = U C` and the AWGN channel
//!   ([`measurement`]),
//! * the estimation kernels shared by the algorithms: unbiased linear MMSE,
//!   ternary soft feedback, Gaussian extrinsic combining, and thresholding
//!   operators ([`estimators`]),
//! * complete recovery algorithms: IMS/Q, TSR/Q, the baselines IHT/Q, IST/Q,
//!   OMP/Q, an exhaustive ML search, and genie-aided IMS variants
//!   ([`algorithms`]),
//! * a seeded Monte Carlo harness that sweeps noise levels, aggregates
//!   symbol error rates with confidence intervals, and emits CSV/SVG
//!   ([`harness`]).

pub use nalgebra;

pub mod algorithms;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod measurement;
pub mod oracles;
pub mod signal;
pub mod verify;

pub use error::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;

/// Variances fed into the MMSE step and genie substitutions are floored at
/// this value so the error-variance ratio stays defined when a posterior
/// variance collapses to zero.
pub const VARIANCE_FLOOR: f64 = 1e-12;
