//! Uplink power allocation under per-user caps.
//!
//! For Gaussian inputs the mutual information increases in every user's
//! power, so the caps are optimal and [`solve_power_gaussian`] returns them
//! directly. For finite alphabets the stationarity conditions couple the
//! amplitudes to the error covariance,
//!
//! `lambda_i * sqrt(P_i) = [H^H H diag(sqrt(P)) E]_{ii}`,
//!
//! and [`solve_power_iterative`] walks feasible iterates until they hold.
//! The default update is projected gradient ascent on the amplitudes; the
//! damped update `a <- clip(alpha_k (a + lambda g))` is available as
//! [`UpdateRule::Damped`] (it only admits the cap solution as a fixed point
//! for suitable constant steps, so it is not the default).

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::channel::{PowerAllocation, VirtualChannel};
use crate::constellation::Constellation;
use crate::infotheory::{mmse_for_inputs, MmseReport};
use crate::integrate::Integrator;
use crate::{r, Cx, Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule<T: Real> {
    Constant(T),
    /// `alpha_k = alpha0 / k`.
    Diminishing(T),
}

impl<T: Real> StepRule<T> {
    pub fn at(&self, k: usize) -> T {
        match *self {
            StepRule::Constant(a) => a,
            StepRule::Diminishing(a0) => a0 / r(k as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateRule<T: Real> {
    /// `a <- clip(a + alpha_k * dI/da)`, the ascent that the stationarity
    /// conditions describe.
    ProjectedGradient,
    /// `a <- clip(alpha_k * a + alpha_k * lambda * g)` with `g` the
    /// stationarity right-hand side.
    Damped { lambda: T },
}

#[derive(Debug, Clone)]
pub struct PowerSolveParams<T: Real> {
    pub step_rule: StepRule<T>,
    pub update_rule: UpdateRule<T>,
    pub max_iters: usize,
    pub tol: T,
    pub integrator: Integrator,
}

impl<T: Real> Default for PowerSolveParams<T> {
    fn default() -> Self {
        Self {
            step_rule: StepRule::Diminishing(r(0.5)),
            update_rule: UpdateRule::ProjectedGradient,
            max_iters: 400,
            tol: r(1e-6),
            integrator: Integrator::GaussHermite { nodes: 16 },
        }
    }
}

impl<T: Real> PowerSolveParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidParameter("tol must be > 0".into()));
        }
        self.integrator.validate()
    }
}

/// Solver output; serialized as JSON by the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct PowerSolution<T: Real> {
    pub powers: Vec<T>,
    pub multipliers: Vec<T>,
    pub iterations: usize,
    pub residual: T,
    pub active_caps: Vec<bool>,
    pub converged: bool,
}

/// Gaussian inputs: the objective increases in each power, so the caps bind.
///
/// A zero channel leaves the objective constant; the cap point is still
/// returned as the documented tie-break.
pub fn solve_power_gaussian<T: Real>(vc: &VirtualChannel<T>, caps: &[T]) -> Result<PowerSolution<T>> {
    if caps.len() != vc.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} caps for a {}-user channel",
            caps.len(),
            vc.n()
        )));
    }
    if caps.iter().any(|q| !(*q >= T::zero())) {
        return Err(Error::InvalidParameter("caps must be >= 0".into()));
    }
    let alloc = PowerAllocation::at_caps(caps.to_vec())?;
    let e = crate::infotheory::gaussian_mmse_matrix(vc, &alloc.amplitudes())?;
    let g = stationarity_rhs(vc, &alloc, &e);
    let multipliers = caps
        .iter()
        .zip(&g)
        .map(|(&q, &gi)| {
            if q > T::zero() {
                gi.max(T::zero()) / q.sqrt()
            } else {
                T::zero()
            }
        })
        .collect();
    Ok(PowerSolution {
        powers: caps.to_vec(),
        multipliers,
        iterations: 0,
        residual: T::zero(),
        active_caps: vec![true; caps.len()],
        converged: true,
    })
}

/// Right-hand sides `g_i = Re[H^H H diag(sqrt(P)) E]_{ii}` of the
/// stationarity conditions.
fn stationarity_rhs<T: Real>(
    vc: &VirtualChannel<T>,
    alloc: &PowerAllocation<T>,
    e: &MmseReport<T>,
) -> Vec<T> {
    let m = vc.gram() * alloc.amplitudes() * e.e();
    (0..alloc.users()).map(|i| m[(i, i)].re).collect()
}

/// Residuals of `lambda_i sqrt(P_i) = g_i`, exactly in the printed form.
pub fn kkt_residual<T: Real>(
    vc: &VirtualChannel<T>,
    alloc: &PowerAllocation<T>,
    e: &MmseReport<T>,
    lambda: &[T],
) -> Result<Vec<T>> {
    if lambda.len() != alloc.users() || alloc.users() != vc.n() || e.n() != vc.n() {
        return Err(Error::DimensionMismatch(
            "kkt residual needs matching channel, allocation, E and lambda sizes".into(),
        ));
    }
    let g = stationarity_rhs(vc, alloc, e);
    Ok(alloc
        .powers()
        .iter()
        .zip(lambda)
        .zip(&g)
        .map(|((&p, &l), &gi)| l * p.sqrt() - gi)
        .collect())
}

/// Multipliers and optimality residual consistent with complementary
/// slackness at a final iterate.
fn finalize_kkt<T: Real>(
    caps: &[T],
    powers: &[T],
    g: &[T],
    tol: T,
) -> (Vec<T>, Vec<bool>, T) {
    let n = caps.len();
    let mut lambda = vec![T::zero(); n];
    let mut active = vec![false; n];
    let mut residual = T::zero();
    for i in 0..n {
        let p = powers[i];
        let q = caps[i];
        let ri = if p >= q - tol && q > T::zero() {
            // cap active: gradient must point outward, multiplier absorbs it
            active[i] = true;
            lambda[i] = g[i].max(T::zero()) / q.sqrt();
            (-g[i]).max(T::zero())
        } else if p <= tol {
            // lower bound active: gradient must not be improving
            g[i].max(T::zero())
        } else {
            // interior: stationarity requires g_i = 0
            g[i].abs()
        };
        residual = residual.max(ri);
    }
    (lambda, active, residual)
}

/// Iterative cap-constrained power allocation for arbitrary inputs.
///
/// Works in amplitude coordinates, recomputes the error covariance every
/// iteration, projects into `[0, sqrt(Q_i)]` after each step, and stops when
/// the power vector moves less than `tol`.
pub fn solve_power_iterative<T>(
    vc: &VirtualChannel<T>,
    caps: &[T],
    inputs: &[Constellation<T>],
    params: &PowerSolveParams<T>,
) -> Result<PowerSolution<T>>
where
    T: Real + Send + Sync,
    StandardNormal: Distribution<T>,
{
    params.validate()?;
    if caps.len() != vc.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} caps for a {}-user channel",
            caps.len(),
            vc.n()
        )));
    }
    let n = caps.len();
    let root_caps: Vec<T> = caps.iter().map(|q| q.sqrt()).collect();
    // start at half power: strictly feasible, cap-reachable in a few steps
    let mut amps: Vec<T> = caps.iter().map(|&q| (q / r(2.0)).sqrt()).collect();
    let mut iterations = 0;
    let mut converged = false;
    let mut g = vec![T::zero(); n];
    // gradient scale fixed at the first iterate so the step size is
    // invariant to the channel magnitude
    let mut grad_scale = T::one();

    for k in 1..=params.max_iters {
        iterations = k;
        let alloc = alloc_from_amps(&amps, caps)?;
        let e = mmse_for_inputs(vc, &alloc.amplitudes(), inputs, &params.integrator)?;
        g = stationarity_rhs(vc, &alloc, &e);
        let alpha = params.step_rule.at(k);
        let mut next = amps.clone();
        match params.update_rule {
            UpdateRule::ProjectedGradient => {
                // dI/da_i = 2 snr g_i under the gradient convention
                let two_snr = vc.snr() + vc.snr();
                if k == 1 {
                    let g0 = g
                        .iter()
                        .fold(T::zero(), |acc, &gi| acc.max((two_snr * gi).abs()));
                    grad_scale = g0.max(r(1e-12)).recip();
                }
                for i in 0..n {
                    next[i] = (amps[i] + alpha * grad_scale * two_snr * g[i])
                        .clamp(T::zero(), root_caps[i]);
                }
            }
            UpdateRule::Damped { lambda } => {
                for i in 0..n {
                    next[i] = (alpha * (amps[i] + lambda * g[i])).clamp(T::zero(), root_caps[i]);
                }
            }
        }
        let mut delta = T::zero();
        for i in 0..n {
            debug_assert!(
                next[i] >= T::zero() && next[i] <= root_caps[i] + r(1e-12),
                "iterate left the feasible box"
            );
            delta = delta.max((next[i] * next[i] - amps[i] * amps[i]).abs());
        }
        amps = next;
        if delta <= params.tol {
            converged = true;
            // refresh the stationarity data at the accepted iterate
            let alloc = alloc_from_amps(&amps, caps)?;
            let e = mmse_for_inputs(vc, &alloc.amplitudes(), inputs, &params.integrator)?;
            g = stationarity_rhs(vc, &alloc, &e);
            break;
        }
    }

    let powers: Vec<T> = amps.iter().map(|&a| a * a).collect();
    let (multipliers, active_caps, residual) = finalize_kkt(caps, &powers, &g, r(1e-9));
    Ok(PowerSolution {
        powers,
        multipliers,
        iterations,
        residual,
        active_caps,
        converged,
    })
}

fn alloc_from_amps<T: Real>(amps: &[T], caps: &[T]) -> Result<PowerAllocation<T>> {
    PowerAllocation::new(
        amps.iter()
            .zip(caps)
            .map(|(&a, &q)| (a * a).min(q))
            .collect(),
        caps.to_vec(),
    )
}

/// The two right-hand-side terms of the interior fixed point in its
/// mercury/waterfilling form, per user: the own-link mmse term
/// `c_i sqrt(P_i) E_ii / lambda_i` and the cross-covariance term
/// `d_i sqrt(P_j) E_ji / lambda_i`. At a stationary interior point their sum
/// reproduces `sqrt(P_i)`.
#[derive(Debug, Clone)]
pub struct MercuryTerms<T: Real> {
    pub mmse_terms: Vec<T>,
    pub cov_terms: Vec<T>,
}

pub fn mercury_waterfilling_terms<T: Real>(
    vc: &VirtualChannel<T>,
    alloc: &PowerAllocation<T>,
    e: &MmseReport<T>,
    lambda: &[T],
) -> Result<MercuryTerms<T>> {
    let n = alloc.users();
    if lambda.len() != n || vc.n() != n || e.n() != n {
        return Err(Error::DimensionMismatch(
            "mercury terms need matching sizes".into(),
        ));
    }
    if alloc.powers().iter().any(|&p| p <= T::zero()) {
        return Err(Error::ZeroPowerCase);
    }
    let gram = vc.gram();
    let amps = alloc.amplitude_vec();
    let mut mmse_terms = Vec::with_capacity(n);
    let mut cov_terms = Vec::with_capacity(n);
    for i in 0..n {
        let li = lambda[i];
        if li == T::zero() {
            return Err(Error::InvalidParameter(
                "mercury form needs nonzero multipliers".into(),
            ));
        }
        let own = (gram[(i, i)] * Cx::new(amps[i], T::zero()) * e.e()[(i, i)]).re / li;
        let mut cross = T::zero();
        for j in 0..n {
            if j != i {
                cross += (gram[(i, j)] * Cx::new(amps[j], T::zero()) * e.e()[(j, i)]).re / li;
            }
        }
        mmse_terms.push(own);
        cov_terms.push(cross);
    }
    Ok(MercuryTerms { mmse_terms, cov_terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infotheory::gaussian_mmse_matrix;
    use approx::assert_relative_eq;

    fn vc(entries: &[f64], n: usize, snr: f64) -> VirtualChannel<f64> {
        let inter: Vec<f64> = entries.iter().flat_map(|&x| [x, 0.0]).collect();
        VirtualChannel::from_row_major(n, &inter, snr).unwrap()
    }

    #[test]
    fn gaussian_solution_is_the_caps() {
        let channel = vc(&[1.0, 0.4, 0.2, 0.8], 2, 1.0);
        for caps in [[1.0, 1.0], [2.0, 0.5]] {
            let sol = solve_power_gaussian(&channel, &caps).unwrap();
            assert_eq!(sol.powers, caps.to_vec());
            assert!(sol.active_caps.iter().all(|&b| b));
            assert!(sol.multipliers.iter().all(|&l| l >= 0.0));
        }
    }

    #[test]
    fn zero_channel_returns_caps_by_convention() {
        let channel = vc(&[0.0, 0.0, 0.0, 0.0], 2, 1.0);
        let sol = solve_power_gaussian(&channel, &[1.0, 2.0]).unwrap();
        assert_eq!(sol.powers, vec![1.0, 2.0]);
        assert!(sol.multipliers.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn kkt_residual_vanishes_with_gaussian_e_at_caps() {
        let channel = vc(&[1.1, 0.3, -0.2, 0.9], 2, 1.7);
        let alloc = PowerAllocation::at_caps(vec![1.0, 1.0]).unwrap();
        let e = gaussian_mmse_matrix(&channel, &alloc.amplitudes()).unwrap();
        let g = stationarity_rhs(&channel, &alloc, &e);
        let lambda: Vec<f64> = g
            .iter()
            .zip(alloc.powers())
            .map(|(&gi, &p)| gi / p.sqrt())
            .collect();
        let res = kkt_residual(&channel, &alloc, &e, &lambda).unwrap();
        assert!(res.iter().all(|r| r.abs() < 1e-10));
    }

    #[test]
    fn kkt_residual_zero_channel() {
        let channel = vc(&[0.0; 4], 2, 1.0);
        let alloc = PowerAllocation::at_caps(vec![1.0, 4.0]).unwrap();
        let e = gaussian_mmse_matrix(&channel, &alloc.amplitudes()).unwrap();
        let lambda = vec![0.7, 0.3];
        let res = kkt_residual(&channel, &alloc, &e, &lambda).unwrap();
        assert_relative_eq!(res[0], 0.7);
        assert_relative_eq!(res[1], 0.3 * 2.0);
    }

    #[test]
    fn tdm_case_keeps_active_user_at_cap() {
        let channel = vc(&[1.0, 0.5, 0.5, 1.0], 2, 1.0);
        let g = Constellation::<f64>::gaussian();
        let params = PowerSolveParams::default();
        let sol = solve_power_iterative(&channel, &[0.0, 1.0], &[g.clone(), g], &params).unwrap();
        assert!(sol.powers[0].abs() < 1e-12);
        assert!((sol.powers[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gaussian_iteration_converges_to_caps() {
        let channel = vc(&[1.0, -0.4, 0.3, 0.9], 2, 2.0);
        let g = Constellation::<f64>::gaussian();
        let params = PowerSolveParams::default();
        let sol = solve_power_iterative(&channel, &[1.0, 1.0], &[g.clone(), g], &params).unwrap();
        assert!(sol.converged);
        assert!((sol.powers[0] - 1.0).abs() < 1e-6, "P1 = {}", sol.powers[0]);
        assert!((sol.powers[1] - 1.0).abs() < 1e-6, "P2 = {}", sol.powers[1]);
        assert!(sol.residual < 1e-6 || sol.active_caps.iter().all(|&b| b));
    }

    #[test]
    fn damped_rule_with_constant_step_reaches_caps() {
        let channel = vc(&[1.0, 0.0, 0.0, 1.0], 2, 1.0);
        let g = Constellation::<f64>::gaussian();
        let params = PowerSolveParams {
            step_rule: StepRule::Constant(0.5),
            update_rule: UpdateRule::Damped { lambda: 10.0 },
            ..Default::default()
        };
        let sol = solve_power_iterative(&channel, &[1.0, 1.0], &[g.clone(), g], &params).unwrap();
        assert!((sol.powers[0] - 1.0).abs() < 1e-6);
        assert!((sol.powers[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn symmetric_channel_gives_symmetric_mercury_terms() {
        let channel = vc(&[0.8, 0.8, 0.8, 0.8], 2, 1.0);
        let alloc = PowerAllocation::at_caps(vec![1.0, 1.0]).unwrap();
        let b = Constellation::<f64>::bpsk();
        let e = mmse_for_inputs(
            &channel,
            &alloc.amplitudes(),
            &[b.clone(), b],
            &Integrator::GaussHermite { nodes: 24 },
        )
        .unwrap();
        let terms = mercury_waterfilling_terms(&channel, &alloc, &e, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(terms.mmse_terms[0], terms.mmse_terms[1], epsilon = 1e-10);
        assert_relative_eq!(terms.cov_terms[0], terms.cov_terms[1], epsilon = 1e-10);
    }

    #[test]
    fn mercury_terms_reject_zero_power() {
        let channel = vc(&[1.0, 0.0, 0.0, 1.0], 2, 1.0);
        let alloc = PowerAllocation::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        let e = gaussian_mmse_matrix(&channel, &alloc.amplitudes()).unwrap();
        assert!(matches!(
            mercury_waterfilling_terms(&channel, &alloc, &e, &[1.0, 1.0]),
            Err(Error::ZeroPowerCase)
        ));
    }

    #[test]
    fn mercury_cross_terms_vanish_for_diagonal_channels() {
        let channel = vc(&[1.0, 0.0, 0.0, 0.7], 2, 30.0);
        let alloc = PowerAllocation::at_caps(vec![1.0, 1.0]).unwrap();
        let b = Constellation::<f64>::bpsk();
        let e = mmse_for_inputs(
            &channel,
            &alloc.amplitudes(),
            &[b.clone(), b],
            &Integrator::GaussHermite { nodes: 24 },
        )
        .unwrap();
        let terms = mercury_waterfilling_terms(&channel, &alloc, &e, &[1.0, 1.0]).unwrap();
        assert!(terms.cov_terms.iter().all(|c| c.abs() < 1e-12));
        // the error cross-covariance itself also dies off at high snr
        assert!(e.cross_cov().iter().all(|z| z.norm() < 1e-6));
    }
}
