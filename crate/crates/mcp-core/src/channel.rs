//! The virtual network MIMO model: channel matrix, power matrix, effective
//! channel and noisy output sampling.
//!
//! Gains are stored row-major as `[h11, h12, h21, h22]` and the received
//! vector is `y = sqrt(snr) * H * P * x + n`. The SNR is folded into the
//! effective channel `G = sqrt(snr) * H * P` everywhere so Gaussian and
//! discrete formulas share one convention. Noise is circularly symmetric
//! complex Gaussian with total variance 1 per complex dimension (0.5 per
//! real part).

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{r, CMat, CVec, Cx, Error, Real, Result};

/// The n-by-n complex gain matrix plus the received signal-to-noise ratio.
#[derive(Debug, Clone)]
pub struct VirtualChannel<T: Real> {
    h: CMat<T>,
    snr: T,
}

impl<T: Real> VirtualChannel<T> {
    pub fn new(h: CMat<T>, snr: T) -> Result<Self> {
        if h.nrows() == 0 || h.nrows() != h.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "channel matrix must be square and nonempty, got {}x{}",
                h.nrows(),
                h.ncols()
            )));
        }
        if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("channel entries must be finite".into()));
        }
        if !(snr >= T::zero()) || !snr.is_finite() {
            return Err(Error::InvalidParameter("snr must be finite and >= 0".into()));
        }
        Ok(Self { h, snr })
    }

    /// Build from row-major `(re, im)` interleaved entries.
    pub fn from_row_major(n: usize, entries: &[T], snr: T) -> Result<Self> {
        if entries.len() != 2 * n * n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} interleaved reals for a {n}x{n} matrix, got {}",
                2 * n * n,
                entries.len()
            )));
        }
        let h = DMatrix::from_fn(n, n, |i, j| {
            let k = 2 * (i * n + j);
            Cx::new(entries[k], entries[k + 1])
        });
        Self::new(h, snr)
    }

    pub fn h(&self) -> &CMat<T> {
        &self.h
    }

    pub fn snr(&self) -> T {
        self.snr
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    pub fn with_snr(&self, snr: T) -> Result<Self> {
        Self::new(self.h.clone(), snr)
    }

    /// `H^H * H`, the Gram matrix that appears in every gradient formula.
    pub fn gram(&self) -> CMat<T> {
        self.h.adjoint() * &self.h
    }
}

/// Per-user transmit powers `P_i` with caps `Q_i`; the diagonal amplitude
/// matrix is `diag(sqrt(P_1), ..., sqrt(P_n))`.
#[derive(Debug, Clone)]
pub struct PowerAllocation<T: Real> {
    powers: Vec<T>,
    caps: Vec<T>,
}

impl<T: Real> PowerAllocation<T> {
    pub fn new(powers: Vec<T>, caps: Vec<T>) -> Result<Self> {
        if powers.len() != caps.len() || powers.is_empty() {
            return Err(Error::DimensionMismatch(
                "powers and caps must have equal nonzero length".into(),
            ));
        }
        for (&p, &q) in powers.iter().zip(&caps) {
            if !(p >= T::zero()) || !(q >= T::zero()) {
                return Err(Error::InvalidParameter("powers and caps must be >= 0".into()));
            }
            if p > q + r(1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "power {p:?} exceeds cap {q:?}"
                )));
            }
        }
        Ok(Self { powers, caps })
    }

    /// Allocation pinned at the caps.
    pub fn at_caps(caps: Vec<T>) -> Result<Self> {
        Self::new(caps.clone(), caps)
    }

    pub fn powers(&self) -> &[T] {
        &self.powers
    }

    pub fn caps(&self) -> &[T] {
        &self.caps
    }

    pub fn users(&self) -> usize {
        self.powers.len()
    }

    /// Per-user amplitudes `sqrt(P_i)`.
    pub fn amplitude_vec(&self) -> Vec<T> {
        self.powers.iter().map(|p| p.sqrt()).collect()
    }

    /// The diagonal amplitude matrix `diag(sqrt(P_i))`.
    pub fn amplitudes(&self) -> CMat<T> {
        let n = self.users();
        let mut m = CMat::<T>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Cx::new(self.powers[i].sqrt(), T::zero());
        }
        m
    }

    pub fn active_caps(&self, tol: T) -> Vec<bool> {
        self.powers
            .iter()
            .zip(&self.caps)
            .map(|(&p, &q)| (q - p).abs() <= tol)
            .collect()
    }
}

/// The effective channel `G = sqrt(snr) * H * P`.
#[derive(Debug, Clone)]
pub struct EffectiveChannel<T: Real> {
    g: CMat<T>,
}

impl<T: Real> EffectiveChannel<T> {
    pub fn from_matrix(g: CMat<T>) -> Self {
        Self { g }
    }

    pub fn g(&self) -> &CMat<T> {
        &self.g
    }

    pub fn n_rx(&self) -> usize {
        self.g.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.g.ncols()
    }
}

/// Form the effective channel for a power or precoding matrix `P`.
pub fn effective<T: Real>(vc: &VirtualChannel<T>, p: &CMat<T>) -> Result<EffectiveChannel<T>> {
    if p.nrows() != vc.n() {
        return Err(Error::DimensionMismatch(format!(
            "P has {} rows, channel expects {}",
            p.nrows(),
            vc.n()
        )));
    }
    let scale = Cx::new(vc.snr().sqrt(), T::zero());
    Ok(EffectiveChannel {
        g: (vc.h() * p) * scale,
    })
}

/// Draw `y = G x + n` with `n ~ CN(0, I)`; deterministic for a fixed RNG
/// stream.
pub fn sample_output<T, R>(g: &EffectiveChannel<T>, x: &CVec<T>, rng: &mut R) -> CVec<T>
where
    T: Real,
    R: Rng + ?Sized,
    StandardNormal: Distribution<T>,
{
    assert_eq!(
        x.len(),
        g.n_tx(),
        "input vector length must match the effective channel columns"
    );
    let mut y = g.g() * x;
    let s = r::<T>(0.5).sqrt();
    for i in 0..y.len() {
        let re: T = rng.sample(StandardNormal);
        let im: T = rng.sample(StandardNormal);
        y[i] += Cx::new(re * s, im * s);
    }
    y
}

/// Draw one complex standard-normal vector (unit total variance per entry).
pub fn sample_noise<T, R>(dim: usize, rng: &mut R) -> CVec<T>
where
    T: Real,
    R: Rng + ?Sized,
    StandardNormal: Distribution<T>,
{
    let s = r::<T>(0.5).sqrt();
    CVec::from_fn(dim, |_, _| {
        let re: T = rng.sample(StandardNormal);
        let im: T = rng.sample(StandardNormal);
        Cx::new(re * s, im * s)
    })
}
