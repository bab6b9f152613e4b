//! Mutual information, MMSE matrices and their gradients for the virtual
//! MIMO channel `y = G x + n`, `G = sqrt(snr) H P`, `n ~ CN(0, I)`.
//!
//! Mutual information is kept in nats internally; [`MiEstimate`] carries the
//! bits conversion for reporting. Deterministic quadrature results have zero
//! standard error; Monte Carlo estimates carry the sample standard error.
//!
//! Gradient convention: [`mi_gradient`] returns `snr * H^H H P E`. The
//! derivative of the mutual information along a real perturbation `dP` of a
//! real parameter is `2 * Re<mi_gradient, dP>` (Frobenius inner product);
//! finite-difference checks must apply that factor of two.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::{effective, EffectiveChannel, VirtualChannel};
use crate::constellation::{enumerate_joint, Constellation, JointAlphabet};
use crate::integrate::Integrator;
use crate::{r, CMat, CVec, Cx, Error, Real, Result};

mod closed_form;
mod discrete;
mod lowsnr;
mod rates;

pub use closed_form::{
    bpsk_siso_mi, bpsk_siso_mi_with_nodes, bpsk_siso_mmse, bpsk_siso_mmse_with_nodes,
    qpsk_siso_mi, qpsk_siso_mmse, DEFAULT_SISO_NODES,
};
pub use discrete::{mi_discrete, mi_discrete_for_g, mmse_matrix, mmse_matrix_for_g};
pub use lowsnr::{eval_mmse_expansion, lowsnr_mi_expansion, lowsnr_mmse_expansion, MmseExpansion};
pub use rates::{rate_region_bounds, RateRegionBounds};

/// A mutual-information value in nats with its bits conversion and the
/// standard error of the estimate (zero for deterministic methods).
#[derive(Debug, Clone, Copy)]
pub struct MiEstimate<T: Real> {
    pub nats: T,
    pub bits: T,
    /// Standard error of `nats` (0 for closed forms and quadrature).
    pub std_error: T,
}

impl<T: Real> MiEstimate<T> {
    pub fn from_nats(nats: T, std_error: T) -> Self {
        Self {
            nats,
            bits: nats / T::ln_2(),
            std_error,
        }
    }

    pub fn std_error_bits(&self) -> T {
        self.std_error / T::ln_2()
    }
}

/// How an [`MmseReport`] was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmseMethod {
    ClosedFormGaussian,
    Quadrature,
    MonteCarlo,
}

/// The error-covariance matrix `E = E[(x - x̂)(x - x̂)^H]` of the conditional
/// mean estimator, symmetrized, with per-user diagonal and cross terms.
#[derive(Debug, Clone)]
pub struct MmseReport<T: Real> {
    e: CMat<T>,
    per_user_mmse: Vec<T>,
    cross_cov: Vec<Cx<T>>,
    method: MmseMethod,
    samples_or_nodes: usize,
    per_user_std_error: Vec<T>,
}

impl<T: Real> MmseReport<T> {
    /// Symmetrize and package an estimated error covariance.
    pub fn new(e_raw: CMat<T>, method: MmseMethod, samples_or_nodes: usize, se: Vec<T>) -> Self {
        let half = Cx::new(r(0.5), T::zero());
        let e = (&e_raw + e_raw.adjoint()) * half;
        let n = e.nrows();
        let per_user_mmse = (0..n).map(|i| e[(i, i)].re).collect();
        let mut cross_cov = Vec::with_capacity(n * n - n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    cross_cov.push(e[(i, j)]);
                }
            }
        }
        let per_user_std_error = if se.len() == n { se } else { vec![T::zero(); n] };
        Self {
            e,
            per_user_mmse,
            cross_cov,
            method,
            samples_or_nodes,
            per_user_std_error,
        }
    }

    pub fn e(&self) -> &CMat<T> {
        &self.e
    }

    /// Diagonal entries: the per-user estimation errors.
    pub fn per_user_mmse(&self) -> &[T] {
        &self.per_user_mmse
    }

    /// Off-diagonal error cross-covariances, row-major without the diagonal.
    pub fn cross_cov(&self) -> &[Cx<T>] {
        &self.cross_cov
    }

    pub fn method(&self) -> MmseMethod {
        self.method
    }

    pub fn samples_or_nodes(&self) -> usize {
        self.samples_or_nodes
    }

    pub fn per_user_std_error(&self) -> &[T] {
        &self.per_user_std_error
    }

    pub fn n(&self) -> usize {
        self.e.nrows()
    }
}

/// `I(x; y) = ln det(I + G G^H)` for Gaussian inputs with unit covariance.
pub fn mi_gaussian<T: Real>(vc: &VirtualChannel<T>, p: &CMat<T>) -> Result<MiEstimate<T>> {
    let g = effective(vc, p)?;
    mi_gaussian_for_g(g.g())
}

/// Gaussian mutual information for an arbitrary (possibly row-restricted)
/// effective channel.
pub fn mi_gaussian_for_g<T: Real>(g: &CMat<T>) -> Result<MiEstimate<T>> {
    let gram = g * g.adjoint();
    let eig = gram.symmetric_eigen();
    let mut nats = T::zero();
    for &lambda in eig.eigenvalues.iter() {
        if !lambda.is_finite() {
            return Err(Error::NonFiniteDeterminant);
        }
        // eigenvalues of G G^H are >= 0 up to roundoff
        nats += (lambda.max(-r::<T>(1e-14))).ln_1p();
    }
    if !nats.is_finite() {
        return Err(Error::NonFiniteDeterminant);
    }
    Ok(MiEstimate::from_nats(nats, T::zero()))
}

/// Closed-form Gaussian error covariance `E = (I + G^H G)^{-1}`.
pub fn gaussian_mmse_matrix<T: Real>(
    vc: &VirtualChannel<T>,
    p: &CMat<T>,
) -> Result<MmseReport<T>> {
    let g = effective(vc, p)?;
    let n = g.n_tx();
    let m = CMat::<T>::identity(n, n) + g.g().adjoint() * g.g();
    let e = m.try_inverse().ok_or(Error::SingularMatrix)?;
    Ok(MmseReport::new(e, MmseMethod::ClosedFormGaussian, 0, vec![T::zero(); n]))
}

/// Posterior-mean estimate `E[x | y]` for a finite alphabet under the
/// Gaussian likelihood `exp(-|y - G x|^2)`, stabilized by max-exponent
/// subtraction.
pub fn conditional_mean<T: Real>(
    y: &CVec<T>,
    g: &EffectiveChannel<T>,
    alphabet: &JointAlphabet<T>,
) -> Result<CVec<T>> {
    if y.len() != g.n_rx() {
        return Err(Error::DimensionMismatch(format!(
            "y has {} entries, channel has {} outputs",
            y.len(),
            g.n_rx()
        )));
    }
    let exponents: Vec<T> = alphabet
        .vectors()
        .iter()
        .map(|v| -(y - g.g() * v).norm_squared())
        .collect();
    let max = exponents
        .iter()
        .copied()
        .fold(T::min_value().unwrap_or_else(|| -r::<T>(1e300)), T::max);
    let mut den = T::zero();
    let mut num = CVec::<T>::zeros(alphabet.users());
    for ((v, &p), &e) in alphabet
        .vectors()
        .iter()
        .zip(alphabet.priors())
        .zip(&exponents)
    {
        let w = p * (e - max).exp();
        den += w;
        num += v * Cx::new(w, T::zero());
    }
    if !(den > T::zero()) || !den.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    Ok(num / Cx::new(den, T::zero()))
}

/// Wiener-filter (linear MMSE) estimate `x̂ = G^H (I + G G^H)^{-1} y`.
pub fn lmmse_estimate<T: Real>(
    y: &CVec<T>,
    vc: &VirtualChannel<T>,
    p: &CMat<T>,
) -> Result<CVec<T>> {
    let g = effective(vc, p)?;
    if y.len() != g.n_rx() {
        return Err(Error::DimensionMismatch(format!(
            "y has {} entries, channel has {} outputs",
            y.len(),
            g.n_rx()
        )));
    }
    let nr = g.n_rx();
    let m = CMat::<T>::identity(nr, nr) + g.g() * g.g().adjoint();
    let inv = m.try_inverse().ok_or(Error::SingularMatrix)?;
    Ok(g.g().adjoint() * inv * y)
}

/// `snr * H^H H P E`: the mutual-information gradient with respect to `P`.
///
/// See the module docs for the factor-of-two convention relating this matrix
/// to real-parameter derivatives.
pub fn mi_gradient<T: Real>(
    vc: &VirtualChannel<T>,
    p: &CMat<T>,
    mmse: &MmseReport<T>,
) -> Result<CMat<T>> {
    if p.nrows() != vc.n() || mmse.n() != p.ncols() {
        return Err(Error::DimensionMismatch(
            "gradient needs P and E computed for the same channel".into(),
        ));
    }
    let scale = Cx::new(vc.snr(), T::zero());
    Ok((vc.gram() * p * mmse.e()) * scale)
}

/// `MMSE(snr) = Tr{ H P E (H P)^H }`, the quantity whose value equals the
/// derivative of the mutual information with respect to snr.
pub fn total_channel_mmse<T: Real>(
    vc: &VirtualChannel<T>,
    p: &CMat<T>,
    mmse: &MmseReport<T>,
) -> Result<T> {
    if p.nrows() != vc.n() || mmse.n() != p.ncols() {
        return Err(Error::DimensionMismatch(
            "trace form needs P and E for the same channel".into(),
        ));
    }
    let a = vc.h() * p;
    Ok((&a * mmse.e() * a.adjoint()).trace().re)
}

/// Dispatch on the input model: closed form for all-Gaussian inputs,
/// enumerated-alphabet estimation for all-finite inputs.
pub fn mmse_for_inputs<T>(
    vc: &VirtualChannel<T>,
    p: &CMat<T>,
    inputs: &[Constellation<T>],
    integ: &Integrator,
) -> Result<MmseReport<T>>
where
    T: Real + Send + Sync,
    StandardNormal: Distribution<T>,
{
    match classify_inputs(inputs)? {
        InputModel::Gaussian => gaussian_mmse_matrix(vc, p),
        InputModel::Finite => {
            let alphabet = enumerate_joint(inputs)?;
            mmse_matrix(vc, p, &alphabet, integ)
        }
    }
}

/// Dispatch on the input model for mutual information.
pub fn mi_for_inputs<T>(
    vc: &VirtualChannel<T>,
    p: &CMat<T>,
    inputs: &[Constellation<T>],
    integ: &Integrator,
) -> Result<MiEstimate<T>>
where
    T: Real + Send + Sync,
    StandardNormal: Distribution<T>,
{
    match classify_inputs(inputs)? {
        InputModel::Gaussian => mi_gaussian(vc, p),
        InputModel::Finite => {
            let alphabet = enumerate_joint(inputs)?;
            mi_discrete(vc, p, &alphabet, integ)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum InputModel {
    Gaussian,
    Finite,
}

pub(crate) fn classify_inputs<T: Real>(inputs: &[Constellation<T>]) -> Result<InputModel> {
    if inputs.is_empty() {
        return Err(Error::InvalidParameter("no input constellations".into()));
    }
    let finite = inputs.iter().filter(|c| c.is_finite()).count();
    if finite == 0 {
        Ok(InputModel::Gaussian)
    } else if finite == inputs.len() {
        Ok(InputModel::Finite)
    } else {
        Err(Error::UnsupportedInputs(
            "mixed Gaussian and finite inputs are not supported".into(),
        ))
    }
}

/// Numerically stable `ln cosh`.
pub(crate) fn ln_cosh<T: Real>(z: T) -> T {
    let a = z.abs();
    a + (-(a + a)).exp().ln_1p() - T::ln_2()
}

pub(crate) fn identity_c<T: Real>(n: usize) -> CMat<T> {
    DMatrix::identity(n, n)
}
