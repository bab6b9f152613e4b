//! Two-cell cooperative ("virtual MIMO") link analysis and optimization.
//!
//! Two base stations that share channel state and user data over a backhaul
//! behave like a single multi-antenna receiver (uplink) or transmitter
//! (downlink). This crate models that virtual channel and provides:
//!
//! - mutual information and MMSE matrices for Gaussian and finite-alphabet
//!   inputs (closed forms, Gauss-Hermite quadrature, seeded Monte Carlo),
//! - information-rate gradients with respect to the power/precoding matrix,
//! - uplink power allocation under per-user caps (waterfilling behaviour for
//!   Gaussian inputs, mercury/waterfilling fixed points for discrete inputs),
//! - downlink precoder design: fixed-point iteration, low-SNR principal-mode
//!   allocation, and high-SNR minimum-distance maximization,
//! - a deterministic two-base-station cooperation protocol simulator.
//!
//! All numerics are generic over the scalar type through [`Real`]; the crate
//! root exports `f64` aliases which the CLI and most tests use.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

pub mod channel;
pub mod constellation;
pub mod coopsim;
pub mod infotheory;
pub mod integrate;
pub mod power;
pub mod precoder;

/// Scalar trait bound for all numeric code in this crate: a real field with
/// the usual transcendental functions plus conversion from literals.
pub trait Real:
    nalgebra::RealField + num_traits::FromPrimitive + num_traits::ToPrimitive + Copy
{
}

impl<T> Real for T where
    T: nalgebra::RealField + num_traits::FromPrimitive + num_traits::ToPrimitive + Copy
{
}

/// Shorthand for converting an `f64` literal into the working scalar type.
#[inline]
pub fn r<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal must be representable in the scalar type")
}

/// Complex scalar over the working real type.
pub type Cx<T> = Complex<T>;
/// Dynamically sized complex matrix.
pub type CMat<T> = DMatrix<Complex<T>>;
/// Dynamically sized complex column vector.
pub type CVec<T> = DVector<Complex<T>>;

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("Gaussian inputs cannot be enumerated as a finite alphabet")]
    GaussianNotEnumerable,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("determinant is not finite")]
    NonFiniteDeterminant,
    #[error("posterior weights degenerated to zero despite stabilization")]
    DegeneratePosterior,
    #[error("integrator budget too small: {0}")]
    IntegratorBudgetTooSmall(String),
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("a user power is zero; the mmse/cov fixed-point form does not apply")]
    ZeroPowerCase,
    #[error("fixed-point update is identically zero")]
    ZeroUpdate,
    #[error("minimum distance is zero; the precoder maps two symbols together")]
    ZeroDmin,
    #[error("unsupported input combination: {0}")]
    UnsupportedInputs(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invariant violated: {0}")]
    InvariantViolated(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

// Concrete aliases used by the CLI and most downstream code.
pub type Constellation64 = constellation::Constellation<f64>;
pub type JointAlphabet64 = constellation::JointAlphabet<f64>;
pub type VirtualChannel64 = channel::VirtualChannel<f64>;
pub type PowerAllocation64 = channel::PowerAllocation<f64>;
pub type EffectiveChannel64 = channel::EffectiveChannel<f64>;
pub type MiEstimate64 = infotheory::MiEstimate<f64>;
pub type MmseReport64 = infotheory::MmseReport<f64>;
pub type PowerSolution64 = power::PowerSolution<f64>;
pub type PrecoderMatrix64 = precoder::PrecoderMatrix<f64>;
pub type CMat64 = CMat<f64>;
pub type CVec64 = CVec<f64>;
pub type Cx64 = Cx<f64>;
