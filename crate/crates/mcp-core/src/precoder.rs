//! Downlink precoder design under a trace constraint.
//!
//! Three solvers cover the operating regimes:
//!
//! - [`solve_precoder_iterative`]: damped fixed-point iteration of
//!   `P ∝ H^H H P E` with trace renormalization each step (the stationarity
//!   structure of the rate objective),
//! - [`low_snr_optimal_precoder`]: the trace budget rides the principal
//!   eigenvectors of `H^H H` (ties split equally),
//! - [`optimize_precoder_high_snr`]: subgradient ascent on the minimum
//!   receive-lattice distance with multi-restart, optionally softmin-smoothed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::VirtualChannel;
use crate::constellation::{ordered_pairs, Constellation, JointAlphabet};
use crate::infotheory::{mmse_for_inputs, MmseReport};
use crate::integrate::Integrator;
use crate::{r, CMat, CVec, Cx, Error, Real, Result};

/// Trace tolerance enforced on every iterate.
pub const TRACE_TOL: f64 = 1e-9;

/// A full complex precoding matrix with its trace budget `Tr{P P^H}`.
#[derive(Debug, Clone)]
pub struct PrecoderMatrix<T: Real> {
    p: CMat<T>,
    trace_budget: T,
}

impl<T: Real> PrecoderMatrix<T> {
    pub fn new(p: CMat<T>, trace_budget: T) -> Result<Self> {
        if !(trace_budget > T::zero()) {
            return Err(Error::InvalidParameter("trace budget must be > 0".into()));
        }
        let tr = frob_sq(&p);
        if tr > trace_budget + r(TRACE_TOL) {
            return Err(Error::InvalidParameter(format!(
                "Tr{{P P^H}} = {tr:?} exceeds the budget {trace_budget:?}"
            )));
        }
        Ok(Self { p, trace_budget })
    }

    /// Scale an arbitrary nonzero matrix onto the trace-budget sphere.
    pub fn normalized(p: CMat<T>, trace_budget: T) -> Result<Self> {
        let tr = frob_sq(&p);
        if !(tr > T::zero()) {
            return Err(Error::ZeroUpdate);
        }
        let scale = (trace_budget / tr).sqrt();
        Ok(Self {
            p: p * Cx::new(scale, T::zero()),
            trace_budget,
        })
    }

    pub fn matrix(&self) -> &CMat<T> {
        &self.p
    }

    pub fn trace_budget(&self) -> T {
        self.trace_budget
    }

    pub fn trace(&self) -> T {
        frob_sq(&self.p)
    }
}

fn frob_sq<T: Real>(p: &CMat<T>) -> T {
    p.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

/// One step of the stationarity fixed point: `H^H H P E`, normalized to the
/// trace budget.
pub fn fixed_point_step<T: Real>(
    vc: &VirtualChannel<T>,
    p: &PrecoderMatrix<T>,
    e: &MmseReport<T>,
) -> Result<PrecoderMatrix<T>> {
    if e.n() != p.matrix().ncols() || p.matrix().nrows() != vc.n() {
        return Err(Error::DimensionMismatch(
            "fixed-point step needs matching channel, precoder and E".into(),
        ));
    }
    let update = vc.gram() * p.matrix() * e.e();
    PrecoderMatrix::normalized(update, p.trace_budget())
}

/// SVD factors of a precoder related to the channel and error-covariance
/// eigenbases.
#[derive(Debug, Clone)]
pub struct PrecoderDecomposition<T: Real> {
    /// Left factor (unitary).
    pub u: CMat<T>,
    /// Nonnegative singular values.
    pub d: Vec<T>,
    /// Right factor (unitary rotation); `P = U diag(d) R^H`.
    pub rot: CMat<T>,
    /// Permutation matching the rotation columns to the error-covariance
    /// eigenvectors.
    pub permutation: Vec<usize>,
    /// Column-space distance between `U` and the channel right singular
    /// vectors, after the best permutation and phase alignment.
    pub channel_mode_mismatch: T,
    /// Same for `R` against the error-covariance eigenvectors.
    pub error_mode_mismatch: T,
}

/// Decompose `P = U diag(d) R^H` and report how its factors align with the
/// channel right singular vectors and the eigenvectors of `E`.
pub fn decompose<T: Real>(
    p: &PrecoderMatrix<T>,
    vc: &VirtualChannel<T>,
    e: &MmseReport<T>,
) -> Result<PrecoderDecomposition<T>> {
    let (u, d, rot) = sorted_svd(p.matrix())?;
    let v_h = channel_right_vectors(vc)?;
    let (_, channel_mismatch) = best_column_match(&u, &v_h);
    let u_e = e.e().clone().symmetric_eigen().eigenvectors;
    let (perm, error_mismatch) = best_column_match(&rot, &u_e);
    Ok(PrecoderDecomposition {
        u,
        d,
        rot,
        permutation: perm,
        channel_mode_mismatch: channel_mismatch,
        error_mode_mismatch: error_mismatch,
    })
}

/// Right singular vectors of the channel matrix.
pub fn channel_right_vectors<T: Real>(vc: &VirtualChannel<T>) -> Result<CMat<T>> {
    let (_, _, v) = sorted_svd(vc.h())?;
    Ok(v)
}

/// SVD with singular values sorted descending; returns `(U, sigma, V)` with
/// `M = U diag(sigma) V^H`.
fn sorted_svd<T: Real>(m: &CMat<T>) -> Result<(CMat<T>, Vec<T>, CMat<T>)> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.ok_or(Error::SingularMatrix)?;
    let vt = svd.v_t.ok_or(Error::SingularMatrix)?;
    let sigma: Vec<T> = svd.singular_values.iter().copied().collect();
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).expect("finite singular values"));
    let n = m.nrows();
    let mut us = CMat::<T>::zeros(n, order.len());
    let mut vs = CMat::<T>::zeros(m.ncols(), order.len());
    let v = vt.adjoint();
    let mut d = Vec::with_capacity(order.len());
    for (col, &k) in order.iter().enumerate() {
        us.set_column(col, &u.column(k));
        vs.set_column(col, &v.column(k));
        d.push(sigma[k]);
    }
    Ok((us, d, vs))
}

/// Best column pairing between two unitary bases, ignoring per-column phase.
/// Cost per pair is `1 - |<a_i, b_j>|`; returns the permutation (index into
/// `b` for each column of `a`) and the total residual.
fn best_column_match<T: Real>(a: &CMat<T>, b: &CMat<T>) -> (Vec<usize>, T) {
    let n = a.ncols().min(b.ncols());
    let mut cost = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut dot = Cx::new(T::zero(), T::zero());
            for k in 0..a.nrows().min(b.nrows()) {
                dot += b[(k, j)].conj() * a[(k, i)];
            }
            cost[i][j] = T::one() - dot.norm_sqr().sqrt();
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut best: Option<(Vec<usize>, T)> = None;
    permute(&mut order, 0, &mut |perm: &[usize]| {
        let total = perm
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (i, &j)| acc + cost[i][j]);
        match &best {
            Some((_, t)) if *t <= total => {}
            _ => best = Some((perm.to_vec(), total)),
        }
    });
    best.unwrap_or((Vec::new(), T::zero()))
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Minimum receive-lattice distance `min_{i != j} |H P (x_i - x_j)|`.
///
/// Uses `H P` without the snr factor; the high-SNR bound carries the snr
/// dependence explicitly.
pub fn d_min<T: Real>(
    vc: &VirtualChannel<T>,
    p: &CMat<T>,
    alphabet: &JointAlphabet<T>,
) -> Result<T> {
    let a = vc.h() * p;
    let images: Vec<CVec<T>> = alphabet.vectors().iter().map(|v| &a * v).collect();
    let pairs = ordered_pairs(alphabet)?;
    let mut best = T::max_value().unwrap_or_else(|| r::<T>(1e300));
    for (i, j) in pairs {
        let d = (&images[i] - &images[j]).norm();
        if d < best {
            best = d;
        }
    }
    Ok(best)
}

/// High-SNR rate bound
/// `ln M - e^{-d^2 s/4} / (M d s) * (sqrt(pi) - (4.37 + 2 sqrt(pi)) / (d^2 s))`
/// in nats, with `d` the minimum distance and `s` the snr.
pub fn high_snr_bound<T: Real>(
    vc: &VirtualChannel<T>,
    p: &CMat<T>,
    alphabet: &JointAlphabet<T>,
    snr: T,
) -> Result<T> {
    if !(snr > T::zero()) {
        return Err(Error::InvalidParameter("the bound needs snr > 0".into()));
    }
    let d = d_min(vc, p, alphabet)?;
    if !(d > T::zero()) {
        return Err(Error::ZeroDmin);
    }
    let m = r::<T>(alphabet.m() as f64);
    let d2s = d * d * snr;
    let sqrt_pi = T::pi().sqrt();
    let correction = (r::<T>(4.37) + sqrt_pi + sqrt_pi) / d2s;
    Ok(m.ln() - (-d2s / r(4.0)).exp() / (m * d * snr) * (sqrt_pi - correction))
}

/// Parameters of the high-SNR distance maximizer.
#[derive(Debug, Clone)]
pub struct HighSnrParams<T: Real> {
    pub snr: T,
    pub restarts: usize,
    pub step: T,
    pub max_iters: usize,
    pub tol: T,
    /// Softmin sharpness; 0 selects the exact active-set subgradient.
    pub beta: T,
    pub trace_budget: T,
    pub seed: u64,
}

impl<T: Real> Default for HighSnrParams<T> {
    fn default() -> Self {
        Self {
            snr: r(10.0),
            restarts: 8,
            step: r(0.08),
            max_iters: 4000,
            tol: r(1e-10),
            beta: T::zero(),
            trace_budget: T::one(),
            seed: 0x5eed,
        }
    }
}

/// One recorded iterate of the high-SNR optimizer.
#[derive(Debug, Clone, Serialize)]
pub struct HighSnrIterate<T: Real> {
    pub restart: usize,
    pub iter: usize,
    pub d_min: T,
    pub trace: T,
}

/// Result of the high-SNR optimization.
#[derive(Debug, Clone)]
pub struct HighSnrResult<T: Real> {
    pub precoder: PrecoderMatrix<T>,
    pub d_min: T,
    pub bound_nats: T,
    /// True when the optimizer improved on its best initialization.
    pub improved: bool,
    pub trace: Vec<HighSnrIterate<T>>,
}

/// Maximize the minimum distance (equivalently the high-SNR bound) over the
/// trace sphere by projected subgradient ascent with restarts.
pub fn optimize_precoder_high_snr<T>(
    vc: &VirtualChannel<T>,
    alphabet: &JointAlphabet<T>,
    params: &HighSnrParams<T>,
) -> Result<HighSnrResult<T>>
where
    T: Real + Send + Sync,
    StandardNormal: Distribution<T>,
{
    if params.restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be >= 1".into()));
    }
    let n = vc.n();
    let budget = params.trace_budget;
    let pairs = ordered_pairs(alphabet)?;
    let diffs: Vec<CVec<T>> = pairs
        .iter()
        .map(|&(i, j)| alphabet.vectors()[i].clone() - &alphabet.vectors()[j])
        .collect();

    let v_h = channel_right_vectors(vc)?;
    let init_scale = (budget / r::<T>(n as f64)).sqrt();
    let heuristic_init = &v_h * Cx::new(init_scale, T::zero());

    let runs: Vec<(CMat<T>, T, Vec<HighSnrIterate<T>>)> = (0..params.restarts)
        .into_par_iter()
        .map(|restart| {
            let p0 = if restart == 0 {
                heuristic_init.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    params.seed ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                );
                CMat::from_fn(n, n, |_, _| {
                    Cx::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
                })
            };
            ascend_d_min(vc, &diffs, p0, budget, params, restart)
        })
        .collect();

    let init_d = {
        let p = PrecoderMatrix::normalized(heuristic_init.clone(), budget)?;
        d_min_for_diffs(vc, p.matrix(), &diffs)
    };

    let mut best: Option<(CMat<T>, T)> = None;
    let mut trace = Vec::new();
    for (p, d, t) in runs {
        trace.extend(t);
        match &best {
            Some((_, db)) if *db >= d => {}
            _ => best = Some((p, d)),
        }
    }
    let (p_best, d_best) = best.expect("at least one restart");
    let precoder = PrecoderMatrix::normalized(p_best, budget)?;
    let bound = high_snr_bound(vc, precoder.matrix(), alphabet, params.snr)?;
    Ok(HighSnrResult {
        d_min: d_best,
        bound_nats: bound,
        improved: d_best > init_d + r(1e-12),
        precoder,
        trace,
    })
}

fn d_min_for_diffs<T: Real>(vc: &VirtualChannel<T>, p: &CMat<T>, diffs: &[CVec<T>]) -> T {
    let a = vc.h() * p;
    diffs
        .iter()
        .map(|d| (&a * d).norm())
        .fold(T::max_value().unwrap_or_else(|| r::<T>(1e300)), T::min)
}

fn ascend_d_min<T: Real>(
    vc: &VirtualChannel<T>,
    diffs: &[CVec<T>],
    p0: CMat<T>,
    budget: T,
    params: &HighSnrParams<T>,
    restart: usize,
) -> (CMat<T>, T, Vec<HighSnrIterate<T>>) {
    let gram = vc.gram();
    let renorm = |m: CMat<T>| -> CMat<T> {
        let tr = frob_sq(&m);
        m * Cx::new((budget / tr).sqrt(), T::zero())
    };
    let mut p = renorm(p0);
    let mut best_p = p.clone();
    let mut best_d = d_min_for_diffs(vc, &p, diffs);
    let mut trace = Vec::new();
    let active_tol = r::<T>(1e-9);
    let record_every = (params.max_iters / 16).max(1);

    for k in 1..=params.max_iters {
        let a = vc.h() * &p;
        let dists: Vec<T> = diffs.iter().map(|d| (&a * d).norm()).collect();
        let dmin = dists
            .iter()
            .copied()
            .fold(T::max_value().unwrap_or_else(|| r::<T>(1e300)), T::min);
        if dmin > best_d {
            best_d = dmin;
            best_p = p.clone();
        }
        if k % record_every == 0 {
            trace.push(HighSnrIterate {
                restart,
                iter: k,
                d_min: dmin,
                trace: frob_sq(&p),
            });
        }
        // ascent direction: weighted combination of H^H H P delta delta^H
        // over the (near-)active pairs
        let mut dir = CMat::<T>::zeros(p.nrows(), p.ncols());
        let mut total_w = T::zero();
        for (d, &dist) in diffs.iter().zip(&dists) {
            let w = if params.beta > T::zero() {
                (-params.beta * (dist - dmin)).exp()
            } else if dist <= dmin + active_tol {
                T::one()
            } else {
                continue;
            };
            total_w += w;
            let pd = &p * d;
            let scale = Cx::new(w / dist.max(r(1e-30)), T::zero());
            // H^H H (P d) d^H, accumulated column by column
            let lead = &gram * pd * scale;
            for col in 0..p.ncols() {
                let c = d[col].conj();
                for row in 0..p.nrows() {
                    dir[(row, col)] += lead[row] * c;
                }
            }
        }
        if total_w == T::zero() {
            break;
        }
        let dir_norm = frob_sq(&dir).sqrt();
        if dir_norm <= params.tol {
            break;
        }
        let eta = params.step * budget.sqrt() / r::<T>(k as f64).sqrt();
        let next = renorm(&p + dir * Cx::new(eta / dir_norm, T::zero()));
        let moved = (&next - &p).norm();
        p = next;
        if moved <= params.tol {
            break;
        }
    }
    (best_p, best_d, trace)
}

/// First-order-optimal precoder as snr -> 0: pour the whole budget onto the
/// principal eigenvector(s) of `H^H H`, splitting equally across ties.
pub fn low_snr_optimal_precoder<T: Real>(
    vc: &VirtualChannel<T>,
    trace_budget: T,
) -> Result<PrecoderMatrix<T>> {
    if !(trace_budget > T::zero()) {
        return Err(Error::InvalidParameter("trace budget must be > 0".into()));
    }
    let eig = vc.gram().symmetric_eigen();
    let n = vc.n();
    let max_ev = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(T::min_value().unwrap_or_else(|| -r::<T>(1e300)), T::max);
    let tie_tol = r::<T>(1e-9) * (T::one() + max_ev.abs());
    let tied: Vec<usize> = (0..n)
        .filter(|&i| max_ev - eig.eigenvalues[i] <= tie_tol)
        .collect();
    let per_mode = trace_budget / r::<T>(tied.len() as f64);
    let mut z = CMat::<T>::zeros(n, n);
    for &i in &tied {
        z[(i, i)] = Cx::new(per_mode.sqrt(), T::zero());
    }
    let p = eig.eigenvectors * z;
    PrecoderMatrix::new(p, trace_budget)
}

/// Parameters of the damped fixed-point precoder iteration.
#[derive(Debug, Clone)]
pub struct PrecoderSolveParams<T: Real> {
    pub step_rule: crate::power::StepRule<T>,
    /// Mixing weight on the stationarity term.
    pub lambda: T,
    pub max_iters: usize,
    pub tol: T,
    pub integrator: Integrator,
    pub trace_budget: T,
}

impl<T: Real> Default for PrecoderSolveParams<T> {
    fn default() -> Self {
        Self {
            step_rule: crate::power::StepRule::Constant(T::one()),
            lambda: T::one(),
            max_iters: 300,
            tol: r(1e-9),
            integrator: Integrator::GaussHermite { nodes: 16 },
            trace_budget: T::one(),
        }
    }
}

/// Converged precoder with the per-base-station transmit weights.
#[derive(Debug, Clone)]
pub struct PrecoderSolution<T: Real> {
    pub precoder: PrecoderMatrix<T>,
    /// Row `b` holds base station `b`'s complex weight on each user symbol;
    /// the superposed transmission reproduces `y = H P x`.
    pub transmit_weights: CMat<T>,
    pub iterations: usize,
    pub residual: T,
    pub converged: bool,
}

/// Damped, trace-renormalized iteration of the stationarity map
/// `P <- renorm(P + alpha_k lambda H^H H P E(P))`, initialized from the
/// channel right singular vectors unless an explicit start is given.
pub fn solve_precoder_iterative<T>(
    vc: &VirtualChannel<T>,
    p_init: Option<&PrecoderMatrix<T>>,
    inputs: &[Constellation<T>],
    params: &PrecoderSolveParams<T>,
) -> Result<PrecoderSolution<T>>
where
    T: Real + Send + Sync,
    StandardNormal: Distribution<T>,
{
    params.integrator.validate()?;
    if params.max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
    }
    let n = vc.n();
    let budget = params.trace_budget;
    let mut p = match p_init {
        Some(p0) => PrecoderMatrix::normalized(p0.matrix().clone(), budget)?,
        None => {
            let v_h = channel_right_vectors(vc)?;
            let scale = (budget / r::<T>(n as f64)).sqrt();
            PrecoderMatrix::normalized(v_h * Cx::new(scale, T::zero()), budget)?
        }
    };
    let mut iterations = 0;
    let mut converged = false;
    let mut residual = T::zero();
    for k in 1..=params.max_iters {
        iterations = k;
        let e = mmse_for_inputs(vc, p.matrix(), inputs, &params.integrator)?;
        let update = vc.gram() * p.matrix() * e.e();
        let alpha = params.step_rule.at(k) * params.lambda;
        let raw = p.matrix() + update * Cx::new(alpha, T::zero());
        let next = PrecoderMatrix::normalized(raw, budget)?;
        residual = (next.matrix() - p.matrix()).norm();
        p = next;
        if residual <= params.tol {
            converged = true;
            break;
        }
    }
    let transmit_weights = p.matrix().clone();
    Ok(PrecoderSolution {
        precoder: p,
        transmit_weights,
        iterations,
        residual,
        converged,
    })
}

/// The cross-transmission coefficients exchanged between the base stations
/// before iterating: entries `(2,1)` and `(1,2)` of `H V_H diag(d)`, i.e.
/// each station's weight on the other station's user under the SVD
/// initialization with per-mode amplitudes `d`.
pub fn svd_cross_terms<T: Real>(vc: &VirtualChannel<T>, d: &[T]) -> Result<(Cx<T>, Cx<T>)> {
    if d.len() != vc.n() || vc.n() < 2 {
        return Err(Error::DimensionMismatch(
            "cross terms need one amplitude per user on a >= 2 user channel".into(),
        ));
    }
    let v_h = channel_right_vectors(vc)?;
    let mut dm = CMat::<T>::zeros(vc.n(), vc.n());
    for i in 0..vc.n() {
        dm[(i, i)] = Cx::new(d[i], T::zero());
    }
    let w = vc.h() * v_h * dm;
    Ok((w[(1, 0)], w[(0, 1)]))
}

/// Gaussian waterfilling over the diagonal modes, solved independently by
/// bisection on the water level. Used as an oracle for the fixed-point
/// iteration on diagonal channels.
pub fn gaussian_waterfilling_powers<T: Real>(gains_sq: &[T], snr: T, budget: T) -> Vec<T> {
    let alloc = |mu: T| -> T {
        gains_sq
            .iter()
            .map(|&g2| {
                if g2 > T::zero() {
                    (mu - (snr * g2).recip()).max(T::zero())
                } else {
                    T::zero()
                }
            })
            .fold(T::zero(), |a, b| a + b)
    };
    let mut lo = T::zero();
    let mut hi = T::one();
    while alloc(hi) < budget {
        hi = hi + hi;
    }
    for _ in 0..200 {
        let mid = (lo + hi) / r(2.0);
        if alloc(mid) < budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = (lo + hi) / r(2.0);
    gains_sq
        .iter()
        .map(|&g2| {
            if g2 > T::zero() {
                (mu - (snr * g2).recip()).max(T::zero())
            } else {
                T::zero()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::enumerate_joint;
    use crate::infotheory::gaussian_mmse_matrix;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn vc(entries: &[f64], n: usize, snr: f64) -> VirtualChannel<f64> {
        let inter: Vec<f64> = entries.iter().flat_map(|&x| [x, 0.0]).collect();
        VirtualChannel::from_row_major(n, &inter, snr).unwrap()
    }

    fn bpsk2() -> JointAlphabet<f64> {
        let b = Constellation::<f64>::bpsk();
        enumerate_joint(&[b.clone(), b]).unwrap()
    }

    fn paper_channel() -> VirtualChannel<f64> {
        vc(&[3f64.sqrt(), 0.0, 0.0, 1.0], 2, 10.0)
    }

    fn mat(entries: &[f64]) -> CMat<f64> {
        CMat::from_row_slice(
            2,
            2,
            &entries.iter().map(|&x| Cx::new(x, 0.0)).collect::<Vec<_>>(),
        )
    }

    #[test]
    fn d_min_reference_values() {
        let alphabet = bpsk2();
        let channel = paper_channel();
        let s2 = 0.5f64.sqrt();
        let p_tpc = mat(&[s2, 0.0, 0.0, 1.5f64.sqrt()]);
        let p_star = mat(&[s2, s2, -s2, s2]);
        let p_utpc = CMat::<f64>::identity(2, 2);
        assert_relative_eq!(
            d_min(&channel, &p_tpc, &alphabet).unwrap(),
            6f64.sqrt(),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            d_min(&channel, &p_star, &alphabet).unwrap(),
            8f64.sqrt(),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            d_min(&channel, &p_utpc, &alphabet).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        let eye = vc(&[1.0, 0.0, 0.0, 1.0], 2, 1.0);
        assert_relative_eq!(
            d_min(&eye, &CMat::<f64>::identity(2, 2), &alphabet).unwrap(),
            2.0,
            epsilon = 1e-12
        );
    }

    proptest! {
        #[test]
        fn d_min_is_absolutely_homogeneous(c in -3.0f64..3.0) {
            prop_assume!(c.abs() > 1e-6);
            let alphabet = bpsk2();
            let channel = paper_channel();
            let p = mat(&[0.3, -0.8, 0.5, 0.4]);
            let scaled = &p * Cx::new(c, 0.0);
            let d1 = d_min(&channel, &p, &alphabet).unwrap();
            let d2 = d_min(&channel, &scaled, &alphabet).unwrap();
            prop_assert!((d2 - c.abs() * d1).abs() < 1e-10);
        }

        #[test]
        fn decompose_reconstructs_random_precoders(seed in 0u64..500) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let raw = CMat::<f64>::from_fn(2, 2, |_, _| {
                Cx::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            prop_assume!(raw.norm() > 1e-3);
            let p = PrecoderMatrix::normalized(raw, 1.0).unwrap();
            let channel = paper_channel();
            let e = gaussian_mmse_matrix(&channel, p.matrix()).unwrap();
            let dec = decompose(&p, &channel, &e).unwrap();
            let mut d = CMat::<f64>::zeros(2, 2);
            for i in 0..2 { d[(i, i)] = Cx::new(dec.d[i], 0.0); }
            let rebuilt = &dec.u * d * dec.rot.adjoint();
            prop_assert!((rebuilt - p.matrix()).norm() < 1e-9);
        }
    }

    #[test]
    fn decompose_diagonal_identity_channel() {
        let channel = vc(&[1.0, 0.0, 0.0, 1.0], 2, 1.0);
        let p = PrecoderMatrix::new(mat(&[0.9, 0.0, 0.0, 0.3]), 1.0).unwrap();
        let e = gaussian_mmse_matrix(&channel, p.matrix()).unwrap();
        let dec = decompose(&p, &channel, &e).unwrap();
        // singular values sorted descending; matches |diag| up to permutation
        assert_relative_eq!(dec.d[0], 0.9, epsilon = 1e-12);
        assert_relative_eq!(dec.d[1], 0.3, epsilon = 1e-12);
        for c in 0..2 {
            let mut mags: Vec<f64> = (0..2).map(|r_| dec.u[(r_, c)].norm()).collect();
            mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert_relative_eq!(mags[0], 1.0, epsilon = 1e-9);
            assert!(mags[1].abs() < 1e-9);
        }
    }

    #[test]
    fn fixed_point_step_preserves_diagonality() {
        let channel = vc(&[1.0, 0.0, 0.0, 1.0], 2, 2.0);
        let p = PrecoderMatrix::normalized(mat(&[0.8, 0.0, 0.0, 0.6]), 1.0).unwrap();
        let e = gaussian_mmse_matrix(&channel, p.matrix()).unwrap();
        let next = fixed_point_step(&channel, &p, &e).unwrap();
        assert!(next.matrix()[(0, 1)].norm() < 1e-14);
        assert!(next.matrix()[(1, 0)].norm() < 1e-14);
        assert_relative_eq!(next.trace(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fixed_point_step_zero_channel_errors() {
        let channel = vc(&[0.0; 4], 2, 1.0);
        let p = PrecoderMatrix::normalized(CMat::<f64>::identity(2, 2), 1.0).unwrap();
        let e = gaussian_mmse_matrix(&channel, p.matrix()).unwrap();
        assert!(matches!(
            fixed_point_step(&channel, &p, &e),
            Err(Error::ZeroUpdate)
        ));
    }

    #[test]
    fn fixed_point_self_consistency_after_convergence() {
        let channel = vc(&[1.3, 0.4, -0.2, 0.9], 2, 1.5);
        let g = Constellation::<f64>::gaussian();
        let params = PrecoderSolveParams::default();
        let sol = solve_precoder_iterative(&channel, None, &[g.clone(), g], &params).unwrap();
        assert!(sol.converged, "residual {}", sol.residual);
        let e = gaussian_mmse_matrix(&channel, sol.precoder.matrix()).unwrap();
        let step = fixed_point_step(&channel, &sol.precoder, &e).unwrap();
        // the fixed point is phase-aligned with its own update
        let diff = (step.matrix() - sol.precoder.matrix()).norm()
            .min((step.matrix() + sol.precoder.matrix()).norm());
        assert!(diff / sol.precoder.matrix().norm() < 1e-5, "diff {diff}");
    }

    #[test]
    fn high_snr_bound_limits() {
        let channel = paper_channel();
        let alphabet = bpsk2();
        let p = mat(&[0.5f64.sqrt(), 0.5f64.sqrt(), -(0.5f64.sqrt()), 0.5f64.sqrt()]);
        let near = high_snr_bound(&channel, &p, &alphabet, 1e6).unwrap();
        assert_relative_eq!(near, (alphabet.m() as f64).ln(), epsilon = 1e-9);
        let b_star = high_snr_bound(&channel, &p, &alphabet, 10.0).unwrap();
        let p_tpc = mat(&[0.5f64.sqrt(), 0.0, 0.0, 1.5f64.sqrt()]);
        let b_tpc = high_snr_bound(&channel, &p_tpc, &alphabet, 10.0).unwrap();
        assert!(b_star > b_tpc);
    }

    #[test]
    fn high_snr_bound_monotone_in_distance() {
        // scan distances with d^2 snr past the turnover (root of the bound
        // derivative, ~6.55) but small enough that successive increments
        // stay resolvable in f64
        let alphabet = bpsk2();
        let channel = vc(&[1.0, 0.0, 0.0, 1.0], 2, 1.0);
        let snr = 1.0;
        let mut last = f64::MIN;
        for k in 0..=25 {
            let scale = 1.35 + 0.05 * k as f64; // d = 2 scale, d^2 snr in 7.3..27
            let p = CMat::<f64>::identity(2, 2) * Cx::new(scale, 0.0);
            let b = high_snr_bound(&channel, &p, &alphabet, snr).unwrap();
            assert!(b > last, "bound not increasing at scale {scale}");
            last = b;
        }
    }

    #[test]
    fn zero_d_min_is_reported() {
        let channel = vc(&[1.0, 0.0, 0.0, 1.0], 2, 1.0);
        let alphabet = bpsk2();
        // rank-one precoder mapping (1,-1) and (-1,1) to the same point
        let p = mat(&[0.5, 0.5, 0.5, 0.5]);
        assert!(matches!(
            high_snr_bound(&channel, &p, &alphabet, 10.0),
            Err(Error::ZeroDmin)
        ));
    }

    #[test]
    fn low_snr_precoder_picks_strongest_mode() {
        let channel = paper_channel();
        let p = low_snr_optimal_precoder(&channel, 1.0).unwrap();
        // all budget on the sqrt(3) mode: P = diag(1, 0) up to phase
        assert_relative_eq!(p.matrix()[(0, 0)].norm(), 1.0, epsilon = 1e-9);
        assert!(p.matrix()[(1, 1)].norm() < 1e-9);
        let (c0, _) = crate::infotheory::lowsnr_mi_expansion(&channel, p.matrix()).unwrap();
        assert_relative_eq!(c0, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn low_snr_precoder_splits_ties() {
        let channel = vc(&[1.0, 0.0, 0.0, 1.0], 2, 1.0);
        let p = low_snr_optimal_precoder(&channel, 1.0).unwrap();
        let (c0, _) = crate::infotheory::lowsnr_mi_expansion(&channel, p.matrix()).unwrap();
        assert_relative_eq!(c0, 1.0, epsilon = 1e-9);
        assert_relative_eq!(p.trace(), 1.0, epsilon = 1e-12);
        // equal split: both modes carry budget/2
        let (_, d, _) = sorted_svd(p.matrix()).unwrap();
        assert_relative_eq!(d[0], 0.5f64.sqrt(), epsilon = 1e-9);
        assert_relative_eq!(d[1], 0.5f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn iterative_solver_no_op_when_steps_vanish() {
        let channel = paper_channel();
        let b = Constellation::<f64>::bpsk();
        let init = PrecoderMatrix::normalized(mat(&[1.0, 0.2, -0.1, 0.8]), 1.0).unwrap();
        let params = PrecoderSolveParams {
            lambda: 1e-14,
            max_iters: 5,
            tol: 1e-16,
            ..Default::default()
        };
        let sol =
            solve_precoder_iterative(&channel, Some(&init), &[b.clone(), b], &params).unwrap();
        assert!((sol.precoder.matrix() - init.matrix()).norm() < 1e-10);
    }

    #[test]
    fn optimizer_reaches_reference_distance() {
        // diag(sqrt(3), 1) channel, binary pairs, budget 2: optimum sqrt(8)
        let channel = paper_channel();
        let alphabet = bpsk2();
        let params = HighSnrParams {
            trace_budget: 2.0,
            ..Default::default()
        };
        let result = optimize_precoder_high_snr(&channel, &alphabet, &params).unwrap();
        assert!(
            result.d_min >= 8f64.sqrt() - 1e-3,
            "optimizer reached only {} (< {})",
            result.d_min,
            8f64.sqrt() - 1e-3
        );
        let p = result.precoder.matrix();
        let off = p[(0, 1)].norm() + p[(1, 0)].norm();
        assert!(off > 0.1, "optimum must be non-diagonal, got off-mass {off}");
        assert!((result.precoder.trace() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn cross_terms_match_direct_entries() {
        let channel = paper_channel();
        let d = [0.7f64, 0.4];
        let (to_bs2, to_bs1) = svd_cross_terms(&channel, &d).unwrap();
        let v_h = channel_right_vectors(&channel).unwrap();
        let mut dm = CMat::<f64>::zeros(2, 2);
        dm[(0, 0)] = Cx::new(d[0], 0.0);
        dm[(1, 1)] = Cx::new(d[1], 0.0);
        let w = channel.h() * v_h * dm;
        assert_eq!(to_bs2, w[(1, 0)]);
        assert_eq!(to_bs1, w[(0, 1)]);
    }

    #[test]
    fn waterfilling_oracle_matches_closed_form_two_modes() {
        // both modes active: P_i = mu - 1/(snr g_i^2), sum = budget
        let gains = [2.0f64, 0.5];
        let snr = 3.0;
        let budget = 1.0;
        let p = gaussian_waterfilling_powers(&gains, snr, budget);
        let mu = (budget + 1.0 / (snr * gains[0]) + 1.0 / (snr * gains[1])) / 2.0;
        assert_relative_eq!(p[0], mu - 1.0 / (snr * gains[0]), epsilon = 1e-9);
        assert_relative_eq!(p[1], mu - 1.0 / (snr * gains[1]), epsilon = 1e-9);
    }
}
