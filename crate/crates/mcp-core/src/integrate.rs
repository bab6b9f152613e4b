//! Expectation machinery over the complex Gaussian noise.
//!
//! Two backends share one [`Integrator`] description: tensorized
//! Gauss-Hermite quadrature (deterministic, used for up to two complex
//! receive dimensions) and chunked, seeded Monte Carlo whose results are
//! independent of how the chunks are scheduled.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::{channel::sample_noise, r, CVec, Error, Real, Result};

/// Minimum node count per real dimension.
pub const MIN_NODES: usize = 8;
/// Minimum Monte Carlo sample count.
pub const MIN_SAMPLES: usize = 1_000;
/// Number of deterministic RNG substreams a Monte Carlo run is split into.
pub const MC_CHUNKS: usize = 64;

/// How expectations over the noise (and input mixture) are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integrator {
    /// Tensorized Gauss-Hermite rule with this many nodes per real dimension.
    GaussHermite { nodes: usize },
    /// Seeded Monte Carlo.
    MonteCarlo { samples: usize, seed: u64 },
}

impl Integrator {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Integrator::GaussHermite { nodes } if nodes < MIN_NODES => Err(
                Error::IntegratorBudgetTooSmall(format!("need >= {MIN_NODES} nodes, got {nodes}")),
            ),
            Integrator::MonteCarlo { samples, .. } if samples < MIN_SAMPLES => {
                Err(Error::IntegratorBudgetTooSmall(format!(
                    "need >= {MIN_SAMPLES} samples, got {samples}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Budget figure reported alongside results.
    pub fn budget(&self) -> usize {
        match *self {
            Integrator::GaussHermite { nodes } => nodes,
            Integrator::MonteCarlo { samples, .. } => samples,
        }
    }
}

/// Nodes and weights for `\int f(t) e^{-t^2} dt ≈ Σ w_i f(t_i)`.
#[derive(Debug, Clone)]
pub struct GaussHermiteRule<T: Real> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> GaussHermiteRule<T> {
    /// Golub-Welsch: eigen-decompose the symmetric tridiagonal Jacobi matrix
    /// of the (physicists') Hermite recurrence. Nodes are the eigenvalues,
    /// weights come from the first eigenvector components.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::IntegratorBudgetTooSmall(
                "Gauss-Hermite rule needs at least 2 nodes".into(),
            ));
        }
        let mut j = DMatrix::<T>::zeros(n, n);
        for k in 1..n {
            let b = (r::<T>(k as f64) / r(2.0)).sqrt();
            j[(k - 1, k)] = b;
            j[(k, k - 1)] = b;
        }
        let eig = j.symmetric_eigen();
        let sqrt_pi = T::pi().sqrt();
        let mut pairs: Vec<(T, T)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], sqrt_pi * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite nodes"));
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Visit every tensor node of the complex-noise quadrature over `dims`
/// complex dimensions. The callback receives the noise vector and the
/// normalized weight; summing `w * f(n)` over all visits yields
/// `E[f(n)]` for `n ~ CN(0, I)`.
pub fn for_each_noise_node<T: Real>(
    rule: &GaussHermiteRule<T>,
    dims: usize,
    mut visit: impl FnMut(&CVec<T>, T),
) {
    let n = rule.len();
    let real_dims = 2 * dims;
    let norm = T::pi().powi(-(dims as i32));
    let mut idx = vec![0usize; real_dims];
    let mut noise = CVec::<T>::zeros(dims);
    loop {
        let mut w = norm;
        for (d, &k) in idx.iter().enumerate() {
            w *= rule.weights[k];
            if d % 2 == 0 {
                noise[d / 2].re = rule.nodes[k];
            } else {
                noise[d / 2].im = rule.nodes[k];
            }
        }
        visit(&noise, w);
        let mut d = real_dims;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < n {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Deterministic per-chunk seeds derived from the base seed (splitmix64).
pub fn substream_seeds(seed: u64, chunks: usize) -> Vec<u64> {
    (0..chunks as u64)
        .map(|c| {
            let mut z = seed.wrapping_add(c.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^ (z >> 31)
        })
        .collect()
}

/// Chunked Monte Carlo mean and standard error of a scalar statistic.
///
/// The sample stream is split into [`MC_CHUNKS`] independent substreams with
/// seeds derived from `seed`, so the result does not depend on how many
/// worker threads execute the chunks.
pub fn mc_scalar<T, F>(samples: usize, seed: u64, f: F) -> (T, T)
where
    T: Real + Send + Sync,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
    StandardNormal: Distribution<T>,
{
    let seeds = substream_seeds(seed, MC_CHUNKS);
    let base = samples / MC_CHUNKS;
    let rem = samples % MC_CHUNKS;
    let partials: Vec<(T, T, usize)> = seeds
        .par_iter()
        .enumerate()
        .map(|(c, &s)| {
            let count = base + usize::from(c < rem);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let mut sum = T::zero();
            let mut sumsq = T::zero();
            for _ in 0..count {
                let v = f(&mut rng);
                sum += v;
                sumsq += v * v;
            }
            (sum, sumsq, count)
        })
        .collect();
    let mut sum = T::zero();
    let mut sumsq = T::zero();
    let mut count = 0usize;
    for (s, sq, c) in partials {
        sum += s;
        sumsq += sq;
        count += c;
    }
    let n = r::<T>(count as f64);
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(T::zero());
    let se = (var / n).sqrt();
    (mean, se)
}

/// Convenience: draw a complex standard normal vector.
pub fn complex_normal<T>(dim: usize, rng: &mut ChaCha8Rng) -> CVec<T>
where
    T: Real,
    StandardNormal: Distribution<T>,
{
    sample_noise(dim, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rule_weights_sum_to_sqrt_pi() {
        for n in [8usize, 16, 32, 64, 96] {
            let rule = GaussHermiteRule::<f64>::new(n).unwrap();
            let total: f64 = rule.weights.iter().sum();
            assert_relative_eq!(total, std::f64::consts::PI.sqrt(), max_relative = 1e-12);
        }
    }

    #[test]
    fn rule_integrates_moments() {
        // with weight e^{-t^2}: E[t^2] = sqrt(pi)/2, E[t^4] = 3 sqrt(pi)/4
        let rule = GaussHermiteRule::<f64>::new(32).unwrap();
        let m2: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&t, &w)| w * t * t)
            .sum();
        let m4: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&t, &w)| w * t * t * t * t)
            .sum();
        let sp = std::f64::consts::PI.sqrt();
        assert_relative_eq!(m2, sp / 2.0, max_relative = 1e-12);
        assert_relative_eq!(m4, 3.0 * sp / 4.0, max_relative = 1e-12);
    }

    #[test]
    fn noise_nodes_give_unit_variance() {
        // E[|n_j|^2] = 1 for each complex dimension
        let rule = GaussHermiteRule::<f64>::new(16).unwrap();
        let mut e0 = 0.0;
        let mut e1 = 0.0;
        let mut total_w = 0.0;
        for_each_noise_node(&rule, 2, |n, w| {
            e0 += w * n[0].norm_sqr();
            e1 += w * n[1].norm_sqr();
            total_w += w;
        });
        assert_relative_eq!(total_w, 1.0, max_relative = 1e-12);
        assert_relative_eq!(e0, 1.0, max_relative = 1e-12);
        assert_relative_eq!(e1, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn budget_validation() {
        assert!(Integrator::GaussHermite { nodes: 4 }.validate().is_err());
        assert!(Integrator::MonteCarlo { samples: 10, seed: 0 }.validate().is_err());
        assert!(Integrator::GaussHermite { nodes: 32 }.validate().is_ok());
    }

    #[test]
    fn mc_mean_is_partition_independent_and_seeded() {
        let f = |rng: &mut ChaCha8Rng| complex_normal::<f64>(1, rng)[0].norm_sqr();
        let (m1, se1) = mc_scalar(50_000, 9, f);
        let (m2, _) = mc_scalar(50_000, 9, f);
        assert_eq!(m1, m2, "same seed must give bit-identical results");
        assert!((m1 - 1.0).abs() < 4.0 * se1 + 0.01);
    }
}
