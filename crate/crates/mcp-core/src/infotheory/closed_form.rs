//! Closed forms for BPSK (and QPSK, by doubling) over the scalar channel
//! `y = sqrt(snr) x + n`, `n ~ CN(0, 1)`.
//!
//! Only the real part of `y` carries information; with `zeta = Re(y)` and
//! `x = 1`, `zeta ~ N(sqrt(snr), 1/2)` and the conditional mean is
//! `tanh(2 sqrt(snr) zeta)`. The integrals are evaluated by Gauss-Hermite
//! quadrature after centering the Gaussian weight.
//!
//! The mutual information is `I(snr) = 2 snr - E[ln cosh(2 sqrt(snr) zeta)]`
//! nats, which satisfies `dI/dsnr = mmse(snr)` and saturates at `ln 2`.

use crate::integrate::GaussHermiteRule;
use crate::Real;

use super::ln_cosh;

/// Node count used by the convenience wrappers.
pub const DEFAULT_SISO_NODES: usize = 96;

/// Per-symbol estimation error of BPSK, in `[0, 1]`.
pub fn bpsk_siso_mmse<T: Real>(snr: T) -> T {
    bpsk_siso_mmse_with_nodes(snr, DEFAULT_SISO_NODES)
}

pub fn bpsk_siso_mmse_with_nodes<T: Real>(snr: T, nodes: usize) -> T {
    assert!(snr >= T::zero(), "snr must be nonnegative");
    let rule = GaussHermiteRule::<T>::new(nodes).expect("valid node count");
    let s = snr.sqrt();
    let inv_sqrt_pi = T::pi().sqrt().recip();
    let mut acc = T::zero();
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * ((s + s) * (t + s)).tanh();
    }
    (T::one() - inv_sqrt_pi * acc).clamp(T::zero(), T::one())
}

/// Mutual information of BPSK in nats, in `[0, ln 2]`.
pub fn bpsk_siso_mi<T: Real>(snr: T) -> T {
    bpsk_siso_mi_with_nodes(snr, DEFAULT_SISO_NODES)
}

pub fn bpsk_siso_mi_with_nodes<T: Real>(snr: T, nodes: usize) -> T {
    assert!(snr >= T::zero(), "snr must be nonnegative");
    let rule = GaussHermiteRule::<T>::new(nodes).expect("valid node count");
    let s = snr.sqrt();
    let inv_sqrt_pi = T::pi().sqrt().recip();
    let mut acc = T::zero();
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * ln_cosh((s + s) * (t + s));
    }
    (snr + snr - inv_sqrt_pi * acc).clamp(T::zero(), T::ln_2())
}

/// QPSK doubles the BPSK values at the same per-component snr: the real and
/// imaginary axes carry two independent binary channels.
pub fn qpsk_siso_mmse<T: Real>(snr: T) -> T {
    let m = bpsk_siso_mmse(snr);
    m + m
}

pub fn qpsk_siso_mi<T: Real>(snr: T) -> T {
    let m = bpsk_siso_mi(snr);
    m + m
}
