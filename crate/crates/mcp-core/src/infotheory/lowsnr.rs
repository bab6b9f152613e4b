//! Low-SNR Taylor expansions of the MMSE matrix and the mutual information.
//!
//! With `A = H P` (snr factored out) and unit-covariance, proper inputs:
//!
//! - `E(snr)    ≈ I - A^H A · snr`
//! - `MMSE(snr) ≈ Tr{A A^H} - Tr{(A A^H)^2} · snr`
//! - `I(snr)    ≈ Tr{A A^H} · snr - Tr{(A A^H)^2} · snr^2 / 2`
//!
//! The first-order MI coefficient depends only on the input covariance, so
//! it is shared by every unit-energy signaling scheme. The first-order MMSE
//! coefficient additionally requires a proper (rotationally invariant)
//! constellation; real alphabets such as BPSK double it.

use crate::channel::VirtualChannel;
use crate::{CMat, Cx, Real, Result};

use super::identity_c;

/// Matrix and scalar expansion coefficients around snr = 0.
#[derive(Debug, Clone)]
pub struct MmseExpansion<T: Real> {
    /// Zeroth-order error covariance (identity for unit-energy inputs).
    pub zeroth: CMat<T>,
    /// First-order matrix coefficient: `E ≈ zeroth + first * snr`.
    pub first: CMat<T>,
    /// `MMSE(snr) ≈ scalar.0 - scalar.1 * snr`.
    pub scalar: (T, T),
}

/// Expansion of the error covariance and the scalar MMSE.
pub fn lowsnr_mmse_expansion<T: Real>(
    vc: &VirtualChannel<T>,
    p: &CMat<T>,
) -> Result<MmseExpansion<T>> {
    let a = vc.h() * p;
    let aa = &a * a.adjoint();
    let c0 = aa.trace().re;
    let c1 = (&aa * &aa).trace().re;
    Ok(MmseExpansion {
        zeroth: identity_c(p.ncols()),
        first: -(a.adjoint() * &a),
        scalar: (c0, c1),
    })
}

/// Evaluate the matrix expansion at a given snr.
pub fn eval_mmse_expansion<T: Real>(exp: &MmseExpansion<T>, snr: T) -> CMat<T> {
    &exp.zeroth + &exp.first * Cx::new(snr, T::zero())
}

/// First and second MI coefficients: `I ≈ c0 * snr - c1 * snr^2 / 2`.
pub fn lowsnr_mi_expansion<T: Real>(vc: &VirtualChannel<T>, p: &CMat<T>) -> Result<(T, T)> {
    let exp = lowsnr_mmse_expansion(vc, p)?;
    Ok(exp.scalar)
}
