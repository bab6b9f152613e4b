//! Mutual information and MMSE matrices for finite input alphabets.
//!
//! Both estimators share one identity: conditioning on the transmitted
//! symbol `x`, the channel output is `y = Gx + n`, so expectations over `y`
//! become expectations over the noise for each alphabet point. Quadrature
//! tensorizes Gauss-Hermite over the real noise dimensions (feasible for up
//! to two complex receive dimensions); Monte Carlo draws the `(x, n)`
//! mixture from deterministic substreams.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::channel::{effective, VirtualChannel};
use crate::constellation::JointAlphabet;
use crate::integrate::{
    complex_normal, for_each_noise_node, substream_seeds, GaussHermiteRule, Integrator, MC_CHUNKS,
};
use crate::{r, CMat, CVec, Cx, Error, Real, Result};

use super::{MiEstimate, MmseMethod, MmseReport};

/// Largest receive dimension the tensorized quadrature will attempt.
const MAX_QUAD_COMPLEX_DIMS: usize = 2;

/// `E = E[x x^H] - E_y[x̂ x̂^H]` over the joint alphabet.
pub fn mmse_matrix<T>(
    vc: &VirtualChannel<T>,
    p: &CMat<T>,
    alphabet: &JointAlphabet<T>,
    integ: &Integrator,
) -> Result<MmseReport<T>>
where
    T: Real + Send + Sync,
    StandardNormal: Distribution<T>,
{
    let g = effective(vc, p)?;
    mmse_matrix_for_g(g.g(), alphabet, integ)
}

/// [`mmse_matrix`] for an arbitrary effective channel matrix.
pub fn mmse_matrix_for_g<T>(
    g: &CMat<T>,
    alphabet: &JointAlphabet<T>,
    integ: &Integrator,
) -> Result<MmseReport<T>>
where
    T: Real + Send + Sync,
    StandardNormal: Distribution<T>,
{
    integ.validate()?;
    check_dims(g, alphabet)?;
    let exx = alphabet.second_moment();
    let n = alphabet.users();
    let gv: Vec<CVec<T>> = alphabet.vectors().iter().map(|v| g * v).collect();

    match *integ {
        Integrator::GaussHermite { nodes } => {
            let dims = g.nrows();
            quad_dims_ok(dims)?;
            let rule = GaussHermiteRule::<T>::new(nodes)?;
            let mut second = CMat::<T>::zeros(n, n);
            for (k, &pk) in alphabet.priors().iter().enumerate() {
                for_each_noise_node(&rule, dims, |noise, w| {
                    let y = &gv[k] + noise;
                    let xhat = posterior_mean(&y, &gv, alphabet);
                    let scale = Cx::new(pk * w, T::zero());
                    accumulate_outer(&mut second, &xhat, scale);
                });
            }
            let e = exx - second;
            Ok(MmseReport::new(e, MmseMethod::Quadrature, nodes, vec![T::zero(); n]))
        }
        Integrator::MonteCarlo { samples, seed } => {
            let dims = g.nrows();
            let cdf = prior_cdf(alphabet.priors());
            let seeds = substream_seeds(seed, MC_CHUNKS);
            let base = samples / MC_CHUNKS;
            let rem = samples % MC_CHUNKS;
            let partials: Vec<(CMat<T>, Vec<T>, usize)> = seeds
                .par_iter()
                .enumerate()
                .map(|(c, &s)| {
                    let count = base + usize::from(c < rem);
                    let mut rng = rand::SeedableRng::seed_from_u64(s);
                    let mut second = CMat::<T>::zeros(n, n);
                    let mut diag_sq = vec![T::zero(); n];
                    for _ in 0..count {
                        let k = draw_index(&cdf, &mut rng);
                        let noise = complex_normal::<T>(dims, &mut rng);
                        let y = &gv[k] + noise;
                        let xhat = posterior_mean(&y, &gv, alphabet);
                        accumulate_outer(&mut second, &xhat, Cx::new(T::one(), T::zero()));
                        for i in 0..n {
                            let m = xhat[i].norm_sqr();
                            diag_sq[i] += m * m;
                        }
                    }
                    (second, diag_sq, count)
                })
                .collect();
            let mut second = CMat::<T>::zeros(n, n);
            let mut diag_sq = vec![T::zero(); n];
            let mut count = 0usize;
            for (s, d, c) in partials {
                second += s;
                for i in 0..n {
                    diag_sq[i] += d[i];
                }
                count += c;
            }
            let inv_n = r::<T>((count as f64).recip());
            let second = second * Cx::new(inv_n, T::zero());
            let se: Vec<T> = (0..n)
                .map(|i| {
                    let mean = second[(i, i)].re;
                    let var = (diag_sq[i] * inv_n - mean * mean).max(T::zero());
                    (var * inv_n).sqrt()
                })
                .collect();
            let e = exx - second;
            Ok(MmseReport::new(e, MmseMethod::MonteCarlo, count, se))
        }
    }
}

/// `I(x; y)` in nats for a finite alphabet.
pub fn mi_discrete<T>(
    vc: &VirtualChannel<T>,
    p: &CMat<T>,
    alphabet: &JointAlphabet<T>,
    integ: &Integrator,
) -> Result<MiEstimate<T>>
where
    T: Real + Send + Sync,
    StandardNormal: Distribution<T>,
{
    let g = effective(vc, p)?;
    mi_discrete_for_g(g.g(), alphabet, integ)
}

/// [`mi_discrete`] for an arbitrary (possibly row-restricted) channel.
///
/// Realizes `I = -E_{x,n}[ ln Σ_{x'} p(x') exp(|n|^2 - |G(x - x') + n|^2) ]`,
/// which reduces to `ln M - E[ln Σ exp(...)]` under uniform priors. Each
/// log-sum-exp subtracts its maximum exponent before exponentiating.
pub fn mi_discrete_for_g<T>(
    g: &CMat<T>,
    alphabet: &JointAlphabet<T>,
    integ: &Integrator,
) -> Result<MiEstimate<T>>
where
    T: Real + Send + Sync,
    StandardNormal: Distribution<T>,
{
    integ.validate()?;
    check_dims(g, alphabet)?;
    let gv: Vec<CVec<T>> = alphabet.vectors().iter().map(|v| g * v).collect();
    let m = alphabet.m();
    // Pair geometry: delta_{kj} = G(v_k - v_j) and its squared norm.
    let pair = |k: usize| -> (Vec<CVec<T>>, Vec<T>) {
        let mut deltas = Vec::with_capacity(m);
        let mut c = Vec::with_capacity(m);
        for j in 0..m {
            let d = &gv[k] - &gv[j];
            c.push(-d.norm_squared());
            deltas.push(d);
        }
        (deltas, c)
    };

    match *integ {
        Integrator::GaussHermite { nodes } => {
            let dims = g.nrows();
            quad_dims_ok(dims)?;
            let rule = GaussHermiteRule::<T>::new(nodes)?;
            let priors = alphabet.priors();
            let per_symbol: Vec<T> = (0..m)
                .into_par_iter()
                .map(|k| {
                    let (deltas, c) = pair(k);
                    let mut acc = T::zero();
                    let mut expo = vec![T::zero(); m];
                    for_each_noise_node(&rule, dims, |noise, w| {
                        acc += w * neg_log_posterior_evidence(&deltas, &c, priors, noise, &mut expo);
                    });
                    acc
                })
                .collect();
            let nats = per_symbol
                .iter()
                .zip(priors)
                .fold(T::zero(), |s, (&v, &p)| s + p * v);
            Ok(MiEstimate::from_nats(nats, T::zero()))
        }
        Integrator::MonteCarlo { samples, seed } => {
            let dims = g.nrows();
            let cdf = prior_cdf(alphabet.priors());
            let priors = alphabet.priors().to_vec();
            let all: Vec<(Vec<CVec<T>>, Vec<T>)> = (0..m).map(pair).collect();
            let (mean, se) = crate::integrate::mc_scalar(samples, seed, |rng: &mut ChaCha8Rng| {
                let k = draw_index(&cdf, rng);
                let noise = complex_normal::<T>(dims, rng);
                let (deltas, c) = &all[k];
                let mut expo = vec![T::zero(); m];
                neg_log_posterior_evidence(deltas, c, &priors, &noise, &mut expo)
            });
            Ok(MiEstimate::from_nats(mean, se))
        }
    }
}

/// `-ln Σ_j p_j exp(t_j)` with `t_j = -|delta_j|^2 - 2 Re(delta_j^H n)`.
fn neg_log_posterior_evidence<T: Real>(
    deltas: &[CVec<T>],
    c: &[T],
    priors: &[T],
    noise: &CVec<T>,
    expo: &mut [T],
) -> T {
    let mut max = T::min_value().unwrap_or_else(|| -r::<T>(1e300));
    for ((d, &cj), e) in deltas.iter().zip(c).zip(expo.iter_mut()) {
        let mut dot = T::zero();
        for (a, b) in d.iter().zip(noise.iter()) {
            dot += a.re * b.re + a.im * b.im;
        }
        let t = cj - (dot + dot);
        *e = t;
        if t > max {
            max = t;
        }
    }
    let mut sum = T::zero();
    for (&t, &p) in expo.iter().zip(priors) {
        sum += p * (t - max).exp();
    }
    -(max + sum.ln())
}

/// Stabilized posterior mean given precomputed alphabet images `gv`.
fn posterior_mean<T: Real>(y: &CVec<T>, gv: &[CVec<T>], alphabet: &JointAlphabet<T>) -> CVec<T> {
    let mut max = T::min_value().unwrap_or_else(|| -r::<T>(1e300));
    let mut expo = Vec::with_capacity(gv.len());
    for img in gv {
        let e = -(y - img).norm_squared();
        if e > max {
            max = e;
        }
        expo.push(e);
    }
    let mut den = T::zero();
    let mut num = CVec::<T>::zeros(alphabet.users());
    for ((v, &p), &e) in alphabet
        .vectors()
        .iter()
        .zip(alphabet.priors())
        .zip(&expo)
    {
        let w = p * (e - max).exp();
        den += w;
        num += v * Cx::new(w, T::zero());
    }
    num / Cx::new(den, T::zero())
}

fn accumulate_outer<T: Real>(acc: &mut CMat<T>, x: &CVec<T>, scale: Cx<T>) {
    let n = x.len();
    for i in 0..n {
        let xi = x[i] * scale;
        for j in 0..n {
            acc[(i, j)] += xi * x[j].conj();
        }
    }
}

fn prior_cdf<T: Real>(priors: &[T]) -> Vec<f64> {
    let mut acc = 0.0;
    priors
        .iter()
        .map(|p| {
            acc += p.to_f64().unwrap_or(0.0);
            acc
        })
        .collect()
}

fn draw_index(cdf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn check_dims<T: Real>(g: &CMat<T>, alphabet: &JointAlphabet<T>) -> Result<()> {
    if g.ncols() != alphabet.users() {
        return Err(Error::DimensionMismatch(format!(
            "channel has {} inputs but alphabet has {} users",
            g.ncols(),
            alphabet.users()
        )));
    }
    Ok(())
}

fn quad_dims_ok(dims: usize) -> Result<()> {
    if dims > MAX_QUAD_COMPLEX_DIMS {
        return Err(Error::IntegratorBudgetTooSmall(format!(
            "tensorized quadrature supports at most {MAX_QUAD_COMPLEX_DIMS} complex receive \
             dimensions (got {dims}); use Monte Carlo"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{enumerate_joint, Constellation};
    use approx::assert_relative_eq;

    fn vc(entries: &[f64], n: usize, snr: f64) -> VirtualChannel<f64> {
        let inter: Vec<f64> = entries.iter().flat_map(|&x| [x, 0.0]).collect();
        VirtualChannel::from_row_major(n, &inter, snr).unwrap()
    }

    fn bpsk2() -> JointAlphabet<f64> {
        let b = Constellation::<f64>::bpsk();
        enumerate_joint(&[b.clone(), b]).unwrap()
    }

    #[test]
    fn zero_snr_mi_is_zero() {
        let channel = vc(&[1.0, 0.0, 0.0, 1.0], 2, 0.0);
        let alphabet = bpsk2();
        let integ = Integrator::GaussHermite { nodes: 16 };
        let mi = mi_discrete(&channel, &CMat::<f64>::identity(2, 2), &alphabet, &integ).unwrap();
        assert!(mi.nats.abs() < 1e-12);
    }

    #[test]
    fn zero_snr_mmse_is_input_covariance() {
        let channel = vc(&[1.0, 1.0, 1.0, 1.0], 2, 0.0);
        let alphabet = bpsk2();
        let integ = Integrator::GaussHermite { nodes: 16 };
        let report =
            mmse_matrix(&channel, &CMat::<f64>::identity(2, 2), &alphabet, &integ).unwrap();
        assert_relative_eq!(report.per_user_mmse()[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(report.per_user_mmse()[1], 1.0, epsilon = 1e-12);
        assert!(report.cross_cov().iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn no_interference_bpsk_reaches_two_bits() {
        let snr = 10f64.powf(2.0); // 20 dB
        let channel = vc(&[1.0, 0.0, 0.0, 1.0], 2, snr);
        let alphabet = bpsk2();
        let integ = Integrator::GaussHermite { nodes: 32 };
        let mi = mi_discrete(&channel, &CMat::<f64>::identity(2, 2), &alphabet, &integ).unwrap();
        assert!((mi.bits - 2.0).abs() < 0.02, "got {} bits", mi.bits);
    }

    #[test]
    fn interference_bpsk_saturates_at_one_and_a_half_bits() {
        let snr = 10f64.powf(2.0);
        let channel = vc(&[1.0, 1.0, 1.0, 1.0], 2, snr);
        let alphabet = bpsk2();
        let integ = Integrator::GaussHermite { nodes: 32 };
        let mi = mi_discrete(&channel, &CMat::<f64>::identity(2, 2), &alphabet, &integ).unwrap();
        assert!((mi.bits - 1.5).abs() < 0.02, "got {} bits", mi.bits);
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature() {
        let channel = vc(&[1.0, 0.4, -0.2, 0.9], 2, 1.5);
        let alphabet = bpsk2();
        let p = CMat::<f64>::identity(2, 2);
        let quad = mi_discrete(
            &channel,
            &p,
            &alphabet,
            &Integrator::GaussHermite { nodes: 32 },
        )
        .unwrap();
        let mc = mi_discrete(
            &channel,
            &p,
            &alphabet,
            &Integrator::MonteCarlo {
                samples: 200_000,
                seed: 11,
            },
        )
        .unwrap();
        assert!(
            (quad.nats - mc.nats).abs() < 4.0 * mc.std_error + 5e-3,
            "quad {} vs mc {} (se {})",
            quad.nats,
            mc.nats,
            mc.std_error
        );
    }

    #[test]
    fn monte_carlo_is_deterministic_per_seed() {
        let channel = vc(&[1.0, 1.0, 1.0, 1.0], 2, 1.0);
        let alphabet = bpsk2();
        let p = CMat::<f64>::identity(2, 2);
        let integ = Integrator::MonteCarlo {
            samples: 20_000,
            seed: 3,
        };
        let a = mi_discrete(&channel, &p, &alphabet, &integ).unwrap();
        let b = mi_discrete(&channel, &p, &alphabet, &integ).unwrap();
        assert_eq!(a.nats, b.nats);
        assert_eq!(a.std_error, b.std_error);
    }

    #[test]
    fn quadrature_rejects_three_receive_dims() {
        let channel = vc(&[1.0; 9], 3, 1.0);
        let b = Constellation::<f64>::bpsk();
        let alphabet = enumerate_joint(&[b.clone(), b.clone(), b]).unwrap();
        let res = mi_discrete(
            &channel,
            &CMat::<f64>::identity(3, 3),
            &alphabet,
            &Integrator::GaussHermite { nodes: 16 },
        );
        assert!(matches!(res, Err(Error::IntegratorBudgetTooSmall(_))));
    }

    #[test]
    fn mi_bounded_by_alphabet_entropy() {
        let channel = vc(&[1.3, 0.7, 0.2, 1.1], 2, 4.0);
        let alphabet = bpsk2();
        let mi = mi_discrete(
            &channel,
            &CMat::<f64>::identity(2, 2),
            &alphabet,
            &Integrator::GaussHermite { nodes: 32 },
        )
        .unwrap();
        assert!(mi.bits <= 2.0 + 1e-9);
        assert!(mi.nats >= 0.0);
    }
}
