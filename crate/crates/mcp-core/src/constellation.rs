//! Input alphabets and their joint enumeration.
//!
//! A [`Constellation`] is either the Gaussian marker (continuous inputs, unit
//! energy) or a finite point set with priors. [`enumerate_joint`] builds the
//! cross product over all users in a fixed lexicographic order so every
//! integrator and distance computation sees the same symbol ordering.

use crate::{r, Cx, CVec, Error, Real, Result};

/// Prior mass must sum to one within this tolerance.
const PRIOR_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstellationKind {
    /// Continuous circularly symmetric Gaussian input, unit energy.
    Gaussian,
    Bpsk,
    Qpsk,
    CustomFinite,
}

/// A single user's input alphabet.
#[derive(Debug, Clone)]
pub struct Constellation<T: Real> {
    kind: ConstellationKind,
    points: Vec<Cx<T>>,
    priors: Vec<T>,
    per_symbol_energy: T,
}

impl<T: Real> Constellation<T> {
    /// Antipodal binary alphabet `{+1, -1}`, uniform priors, energy 1.
    pub fn bpsk() -> Self {
        let one = T::one();
        Self {
            kind: ConstellationKind::Bpsk,
            points: vec![Cx::new(one, T::zero()), Cx::new(-one, T::zero())],
            priors: vec![r(0.5), r(0.5)],
            per_symbol_energy: one,
        }
    }

    /// Quaternary alphabet `{1+j, 1-j, -1-j, -1+j}`, uniform priors, energy 2.
    ///
    /// The natural point set is kept at energy 2; use [`Self::normalized`]
    /// for a unit-energy variant.
    pub fn qpsk() -> Self {
        let one = T::one();
        Self {
            kind: ConstellationKind::Qpsk,
            points: vec![
                Cx::new(one, one),
                Cx::new(one, -one),
                Cx::new(-one, -one),
                Cx::new(-one, one),
            ],
            priors: vec![r(0.25); 4],
            per_symbol_energy: r(2.0),
        }
    }

    /// Marker for continuous Gaussian inputs with unit energy.
    pub fn gaussian() -> Self {
        Self {
            kind: ConstellationKind::Gaussian,
            points: Vec::new(),
            priors: Vec::new(),
            per_symbol_energy: T::one(),
        }
    }

    /// Arbitrary finite alphabet. Priors must be nonnegative and sum to one.
    pub fn custom(points: Vec<Cx<T>>, priors: Vec<T>) -> Result<Self> {
        if points.is_empty() || points.len() != priors.len() {
            return Err(Error::InvalidParameter(
                "custom constellation needs matching, nonempty points and priors".into(),
            ));
        }
        let mut sum = T::zero();
        for &p in &priors {
            if p < T::zero() {
                return Err(Error::InvalidParameter("negative prior".into()));
            }
            sum += p;
        }
        let tol = r::<T>(PRIOR_SUM_TOL).max(T::default_epsilon() * r(16.0));
        if (sum - T::one()).abs() > tol {
            return Err(Error::InvalidParameter(format!(
                "priors must sum to 1 (got {sum:?})"
            )));
        }
        let energy = points
            .iter()
            .zip(&priors)
            .fold(T::zero(), |acc, (pt, &pr)| acc + pr * pt.norm_sqr());
        Ok(Self {
            kind: ConstellationKind::CustomFinite,
            points,
            priors,
            per_symbol_energy: energy,
        })
    }

    /// Rescale a finite alphabet to unit per-symbol energy.
    ///
    /// The result is reported as [`ConstellationKind::CustomFinite`] because
    /// the rescaled points no longer match the named point sets.
    pub fn normalized(&self) -> Result<Self> {
        if !self.is_finite() {
            return Err(Error::GaussianNotEnumerable);
        }
        if self.per_symbol_energy <= T::zero() {
            return Err(Error::InvalidParameter(
                "cannot normalize a zero-energy alphabet".into(),
            ));
        }
        let scale = self.per_symbol_energy.sqrt().recip();
        let points = self
            .points
            .iter()
            .map(|p| p * Cx::new(scale, T::zero()))
            .collect();
        Self::custom(points, self.priors.clone())
    }

    pub fn kind(&self) -> ConstellationKind {
        self.kind
    }

    pub fn is_finite(&self) -> bool {
        self.kind != ConstellationKind::Gaussian
    }

    /// Number of points (0 for the Gaussian marker).
    pub fn cardinality(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Cx<T>] {
        &self.points
    }

    pub fn priors(&self) -> &[T] {
        &self.priors
    }

    pub fn per_symbol_energy(&self) -> T {
        self.per_symbol_energy
    }
}

/// All cross-product combinations of the per-user alphabets.
#[derive(Debug, Clone)]
pub struct JointAlphabet<T: Real> {
    users: usize,
    vectors: Vec<CVec<T>>,
    priors: Vec<T>,
    m: usize,
}

impl<T: Real> JointAlphabet<T> {
    pub fn users(&self) -> usize {
        self.users
    }

    pub fn vectors(&self) -> &[CVec<T>] {
        &self.vectors
    }

    /// Product prior of each joint symbol, in enumeration order.
    pub fn priors(&self) -> &[T] {
        &self.priors
    }

    /// Cardinality product M.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of ordered pairs with distinct symbols: M(M-1).
    pub fn ordered_pair_count(&self) -> usize {
        self.m * (self.m - 1)
    }

    /// Number of ordered pairs including equal symbols: M^2.
    pub fn permutation_count(&self) -> usize {
        self.m * self.m
    }

    /// Exact second-moment matrix `E[x x^H]` of the joint input.
    pub fn second_moment(&self) -> crate::CMat<T> {
        let n = self.users;
        let mut exx = crate::CMat::<T>::zeros(n, n);
        for (v, &p) in self.vectors.iter().zip(&self.priors) {
            let pc = Cx::new(p, T::zero());
            for i in 0..n {
                for j in 0..n {
                    exx[(i, j)] += v[i] * v[j].conj() * pc;
                }
            }
        }
        exx
    }
}

/// Enumerate the joint alphabet of all users.
///
/// Ordering is lexicographic: user 0 is the most significant index, and
/// within a user the points appear in their constellation order. The
/// ordering is stable across runs.
pub fn enumerate_joint<T: Real>(per_user: &[Constellation<T>]) -> Result<JointAlphabet<T>> {
    if per_user.is_empty() {
        return Err(Error::InvalidParameter("no users".into()));
    }
    if per_user.iter().any(|c| !c.is_finite()) {
        return Err(Error::GaussianNotEnumerable);
    }
    let users = per_user.len();
    let m: usize = per_user.iter().map(|c| c.cardinality()).product();
    let mut vectors = Vec::with_capacity(m);
    let mut priors = Vec::with_capacity(m);
    let mut idx = vec![0usize; users];
    loop {
        let mut v = CVec::<T>::zeros(users);
        let mut p = T::one();
        for (u, &k) in idx.iter().enumerate() {
            v[u] = per_user[u].points()[k];
            p *= per_user[u].priors()[k];
        }
        vectors.push(v);
        priors.push(p);
        // odometer increment, last user fastest
        let mut u = users;
        loop {
            if u == 0 {
                return Ok(JointAlphabet {
                    users,
                    vectors,
                    priors,
                    m,
                });
            }
            u -= 1;
            idx[u] += 1;
            if idx[u] < per_user[u].cardinality() {
                break;
            }
            idx[u] = 0;
        }
    }
}

/// All ordered pairs of distinct joint symbols, as index pairs `(i, j)`,
/// i-major then j, skipping `i == j`.
pub fn ordered_pairs<T: Real>(alphabet: &JointAlphabet<T>) -> Result<Vec<(usize, usize)>> {
    if alphabet.m() < 2 {
        return Err(Error::InvalidParameter(
            "need at least two joint symbols".into(),
        ));
    }
    let m = alphabet.m();
    let mut pairs = Vec::with_capacity(m * (m - 1));
    for i in 0..m {
        for j in 0..m {
            if i != j {
                pairs.push((i, j));
            }
        }
    }
    Ok(pairs)
}
