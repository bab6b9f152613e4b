//! Achievable-rate bounds for the two-receiver cooperative uplink.
//!
//! Per-user bounds condition on the other users' symbols and keep only that
//! user's receiver row; the translation invariance of the Gaussian noise
//! makes the conditional value independent of the fixed symbols, so each
//! bound reduces to a scalar channel through the matching diagonal entry of
//! the effective channel. Receiver-sum bounds restrict the output to one
//! row; the joint value uses the full matrix and dominates their minimum.

use rand_distr::{Distribution, StandardNormal};

use crate::channel::{effective, VirtualChannel};
use crate::constellation::{enumerate_joint, Constellation};
use crate::integrate::Integrator;
use crate::{r, CMat, Error, Real, Result};

use super::{
    classify_inputs, mi_discrete_for_g, mi_gaussian_for_g, InputModel, MiEstimate,
};

#[derive(Debug, Clone)]
pub struct RateRegionBounds<T: Real> {
    /// `I(x_i; y_i | x_others)` per user.
    pub per_user_bounds: Vec<MiEstimate<T>>,
    /// `I(x_1..x_n; y_j)` per receiver row.
    pub receiver_sum_bounds: Vec<MiEstimate<T>>,
    /// Minimum of the receiver sums: the single-receiver sum-rate bound.
    pub sum_min_bound: MiEstimate<T>,
    /// `I(x_1..x_n; y_1..y_n)` over the full virtual channel.
    pub joint: MiEstimate<T>,
}

impl<T: Real> RateRegionBounds<T> {
    pub fn r1_bound(&self) -> &MiEstimate<T> {
        &self.per_user_bounds[0]
    }

    pub fn r2_bound(&self) -> &MiEstimate<T> {
        &self.per_user_bounds[1]
    }
}

pub fn rate_region_bounds<T>(
    vc: &VirtualChannel<T>,
    p: &CMat<T>,
    inputs: &[Constellation<T>],
    integ: &Integrator,
) -> Result<RateRegionBounds<T>>
where
    T: Real + Send + Sync,
    StandardNormal: Distribution<T>,
{
    if inputs.len() != vc.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} constellations for a {}-user channel",
            inputs.len(),
            vc.n()
        )));
    }
    let model = classify_inputs(inputs)?;
    let g = effective(vc, p)?;
    let n = vc.n();

    let mut per_user_bounds = Vec::with_capacity(n);
    for i in 0..n {
        let scalar = CMat::<T>::from_element(1, 1, g.g()[(i, i)]);
        let mi = match model {
            InputModel::Gaussian => mi_gaussian_for_g(&scalar)?,
            InputModel::Finite => {
                let single = enumerate_joint(&[inputs[i].clone()])?;
                mi_discrete_for_g(&scalar, &single, integ)?
            }
        };
        per_user_bounds.push(mi);
    }

    let joint_alphabet = match model {
        InputModel::Finite => Some(enumerate_joint(inputs)?),
        InputModel::Gaussian => None,
    };

    let mut receiver_sum_bounds = Vec::with_capacity(n);
    for j in 0..n {
        let row = g.g().rows(j, 1).into_owned();
        let mi = match &joint_alphabet {
            None => mi_gaussian_for_g(&row)?,
            Some(alphabet) => mi_discrete_for_g(&row, alphabet, integ)?,
        };
        receiver_sum_bounds.push(mi);
    }

    let joint = match &joint_alphabet {
        None => mi_gaussian_for_g(g.g())?,
        Some(alphabet) => mi_discrete_for_g(g.g(), alphabet, integ)?,
    };

    let sum_min_bound = receiver_sum_bounds
        .iter()
        .copied()
        .min_by(|a, b| a.nats.partial_cmp(&b.nats).expect("finite MI"))
        .expect("at least one receiver");

    let slack = r::<T>(3.0) * (sum_min_bound.std_error + joint.std_error) + r(1e-9);
    if sum_min_bound.nats > joint.nats + slack {
        return Err(Error::InvariantViolated(format!(
            "single-receiver sum bound exceeds the joint mutual information: {:?} > {:?}",
            sum_min_bound.nats, joint.nats
        )));
    }

    Ok(RateRegionBounds {
        per_user_bounds,
        receiver_sum_bounds,
        sum_min_bound,
        joint,
    })
}
