//! Deterministic two-base-station cooperation sessions.
//!
//! Sessions are in-process and event-ordered: no sockets, no wall-clock
//! time. Message timestamps advance by the configured backhaul latency per
//! message, so a serialized transcript replays byte-identically for a fixed
//! configuration. Congestion is modeled on the planned exchange: each
//! message costs `per_message_cost + payload_size`, and the cluster falls
//! back to a pair of congestion notices whenever the total load exceeds
//! `bandwidth * threshold` (equality still cooperates).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::channel::{sample_noise, VirtualChannel};
use crate::constellation::{enumerate_joint, Constellation};
use crate::infotheory::{classify_inputs, conditional_mean, InputModel};
use crate::power::{solve_power_iterative, PowerSolution, PowerSolveParams};
use crate::precoder::{
    solve_precoder_iterative, svd_cross_terms, PrecoderSolution, PrecoderSolveParams,
};
use crate::{r, CMat, CVec, Cx, Error, Real, Result};

pub const TRANSCRIPT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BsId {
    Bs1,
    Bs2,
}

impl BsId {
    fn index(self) -> usize {
        match self {
            BsId::Bs1 => 0,
            BsId::Bs2 => 1,
        }
    }

    fn peer(self) -> BsId {
        match self {
            BsId::Bs1 => BsId::Bs2,
            BsId::Bs2 => BsId::Bs1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Role {
    Processor,
    Peer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MessageKind {
    CsiShare,
    DataShare,
    CongestionNotice,
    PowerFeedback,
    PrecoderShare,
    CrossTransmitShare,
}

/// Message payloads carry the actual values so transcripts are
/// self-contained; complex numbers serialize as `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Payload<T: Real> {
    Csi(Vec<[T; 2]>),
    Estimates(Vec<[T; 2]>),
    Powers(Vec<T>),
    Precoder { entries: Vec<[T; 2]>, trace_budget: T },
    CrossTerm([T; 2]),
    Notice,
}

impl<T: Real> Payload<T> {
    /// Abstract payload size in real scalars.
    pub fn size(&self) -> u64 {
        match self {
            Payload::Csi(v) | Payload::Estimates(v) => 2 * v.len() as u64,
            Payload::Powers(v) => v.len() as u64,
            Payload::Precoder { entries, .. } => 2 * entries.len() as u64 + 1,
            Payload::CrossTerm(_) => 2,
            Payload::Notice => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Message<T: Real> {
    pub from: BsId,
    pub to: BsId,
    pub kind: MessageKind,
    pub payload_size: u64,
    pub timestamp: T,
    pub payload: Payload<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transcript<T: Real> {
    pub schema_version: u32,
    pub messages: Vec<Message<T>>,
}

impl<T: Real + Serialize> Transcript<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serialization cannot fail")
    }
}

/// Backhaul capacity model.
#[derive(Debug, Clone, Copy)]
pub struct BackhaulLink<T: Real> {
    pub bandwidth: T,
    pub threshold: T,
    pub per_message_cost: T,
}

impl<T: Real> BackhaulLink<T> {
    pub fn new(bandwidth: T, threshold: T, per_message_cost: T) -> Result<Self> {
        if !(threshold > T::zero()) {
            return Err(Error::InvalidParameter("threshold must be > 0".into()));
        }
        if per_message_cost < T::zero() || bandwidth < T::zero() {
            return Err(Error::InvalidParameter(
                "bandwidth and per-message cost must be >= 0".into(),
            ));
        }
        Ok(Self {
            bandwidth,
            threshold,
            per_message_cost,
        })
    }

    /// Capacity available to one session's exchange.
    pub fn capacity(&self) -> T {
        self.bandwidth * self.threshold
    }
}

/// A base station's view during a session.
#[derive(Debug, Clone)]
pub struct BsNode<T: Real> {
    pub id: BsId,
    /// This station's row of the channel matrix.
    pub csi: CMat<T>,
    /// Local conditional-mean estimates of every user's symbol.
    pub decoded_estimates: CVec<T>,
    pub role: Role,
}

#[derive(Debug, Clone)]
pub struct SessionParams<T: Real> {
    /// Abstract processing resources per station; the better-equipped
    /// station processes, ties go to BS1.
    pub resources: [T; 2],
    /// Backhaul latency per message; affects timestamps only.
    pub latency: T,
    pub seed: u64,
    pub power: PowerSolveParams<T>,
    pub precoder: PrecoderSolveParams<T>,
}

impl<T: Real> Default for SessionParams<T> {
    fn default() -> Self {
        Self {
            resources: [T::one(), T::one()],
            latency: T::one(),
            seed: 1,
            power: PowerSolveParams::default(),
            precoder: PrecoderSolveParams::default(),
        }
    }
}

struct TranscriptBuilder<T: Real> {
    messages: Vec<Message<T>>,
    latency: T,
}

impl<T: Real> TranscriptBuilder<T> {
    fn new(latency: T) -> Self {
        Self {
            messages: Vec::new(),
            latency,
        }
    }

    fn push(&mut self, from: BsId, kind: MessageKind, payload: Payload<T>) {
        let timestamp = self.latency * r::<T>((self.messages.len() + 1) as f64);
        self.messages.push(Message {
            from,
            to: from.peer(),
            kind,
            payload_size: payload.size(),
            timestamp,
            payload,
        });
    }

    fn finish(self) -> Transcript<T> {
        Transcript {
            schema_version: TRANSCRIPT_SCHEMA_VERSION,
            messages: self.messages,
        }
    }
}

fn complex_vec_payload<T: Real>(v: &CVec<T>) -> Vec<[T; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn complex_mat_payload<T: Real>(m: &CMat<T>) -> Vec<[T; 2]> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push([m[(i, j)].re, m[(i, j)].im]);
        }
    }
    out
}

fn congestion_load<T: Real>(link: &BackhaulLink<T>, payloads: &[u64]) -> T {
    payloads.iter().fold(T::zero(), |acc, &s| {
        acc + link.per_message_cost + r::<T>(s as f64)
    })
}

fn processor_of<T: Real>(resources: &[T; 2]) -> BsId {
    if resources[0] >= resources[1] {
        BsId::Bs1
    } else {
        BsId::Bs2
    }
}

/// Sample one transmission and each station's local estimates of the users'
/// symbols, from the per-station (row-restricted) observation.
fn local_estimates<T>(
    vc: &VirtualChannel<T>,
    inputs: &[Constellation<T>],
    caps: &[T],
    seed: u64,
) -> Result<Vec<CVec<T>>>
where
    T: Real,
    StandardNormal: Distribution<T>,
{
    let n = vc.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = classify_inputs(inputs)?;
    let amps = CMat::<T>::from_fn(n, n, |i, j| {
        if i == j {
            Cx::new(caps[i].sqrt(), T::zero())
        } else {
            Cx::new(T::zero(), T::zero())
        }
    });
    let g_full = crate::channel::effective(vc, &amps)?;

    // draw the transmitted symbol vector
    let x: CVec<T> = match model {
        InputModel::Finite => {
            let alphabet = enumerate_joint(inputs)?;
            let mut acc = 0.0f64;
            let u: f64 = rand::Rng::gen(&mut rng);
            let mut pick = alphabet.m() - 1;
            for (k, p) in alphabet.priors().iter().enumerate() {
                acc += p.to_f64().unwrap_or(0.0);
                if u < acc {
                    pick = k;
                    break;
                }
            }
            alphabet.vectors()[pick].clone()
        }
        InputModel::Gaussian => {
            let s = r::<T>(0.5).sqrt();
            CVec::from_fn(n, |_, _| {
                let re: T = rng.sample(StandardNormal);
                let im: T = rng.sample(StandardNormal);
                Cx::new(re * s, im * s)
            })
        }
    };

    let mut out = Vec::with_capacity(n);
    for b in 0..n.min(2) {
        let row = g_full.g().rows(b, 1).into_owned();
        let noise = sample_noise::<T, _>(1, &mut rng);
        let y = &row * &x + noise;
        let est = match model {
            InputModel::Finite => {
                let alphabet = enumerate_joint(inputs)?;
                conditional_mean(
                    &y,
                    &crate::channel::EffectiveChannel::from_matrix(row),
                    &alphabet,
                )?
            }
            InputModel::Gaussian => {
                // Wiener filter on the row-restricted observation
                let nr = 1;
                let m = CMat::<T>::identity(nr, nr) + &row * row.adjoint();
                let inv = m.try_inverse().ok_or(Error::SingularMatrix)?;
                row.adjoint() * inv * y
            }
        };
        out.push(est);
    }
    Ok(out)
}

/// Run the uplink cooperation session; congestion yields a pair of notices
/// and no solution.
pub fn run_uplink_session<T>(
    vc: &VirtualChannel<T>,
    caps: &[T],
    inputs: &[Constellation<T>],
    link: &BackhaulLink<T>,
    params: &SessionParams<T>,
) -> Result<(Transcript<T>, Option<PowerSolution<T>>, [BsNode<T>; 2])>
where
    T: Real + Send + Sync,
    StandardNormal: Distribution<T>,
{
    if vc.n() < 2 {
        return Err(Error::DimensionMismatch(
            "sessions model a two-station cluster".into(),
        ));
    }
    let mut tb = TranscriptBuilder::new(params.latency);
    let estimates = local_estimates(vc, inputs, caps, params.seed)?;

    let mut nodes = [
        BsNode {
            id: BsId::Bs1,
            csi: vc.h().rows(0, 1).into_owned(),
            decoded_estimates: estimates[0].clone(),
            role: Role::Peer,
        },
        BsNode {
            id: BsId::Bs2,
            csi: vc.h().rows(1, 1).into_owned(),
            decoded_estimates: estimates[1].clone(),
            role: Role::Peer,
        },
    ];

    // planned full exchange: each station shares data and CSI
    let planned: Vec<Payload<T>> = vec![
        Payload::Estimates(complex_vec_payload(&nodes[0].decoded_estimates)),
        Payload::Csi(complex_mat_payload(&nodes[0].csi)),
        Payload::Estimates(complex_vec_payload(&nodes[1].decoded_estimates)),
        Payload::Csi(complex_mat_payload(&nodes[1].csi)),
    ];
    let load = congestion_load(link, &planned.iter().map(Payload::size).collect::<Vec<_>>());
    if load > link.capacity() {
        tb.push(BsId::Bs1, MessageKind::CongestionNotice, Payload::Notice);
        tb.push(BsId::Bs2, MessageKind::CongestionNotice, Payload::Notice);
        return Ok((tb.finish(), None, nodes));
    }

    let mut planned = planned.into_iter();
    tb.push(BsId::Bs1, MessageKind::DataShare, planned.next().unwrap());
    tb.push(BsId::Bs1, MessageKind::CsiShare, planned.next().unwrap());
    tb.push(BsId::Bs2, MessageKind::DataShare, planned.next().unwrap());
    tb.push(BsId::Bs2, MessageKind::CsiShare, planned.next().unwrap());

    let processor = processor_of(&params.resources);
    nodes[processor.index()].role = Role::Processor;

    let solution = solve_power_iterative(vc, caps, inputs, &params.power)?;
    tb.push(
        BsId::Bs1,
        MessageKind::PowerFeedback,
        Payload::Powers(solution.powers.clone()),
    );
    tb.push(
        BsId::Bs2,
        MessageKind::PowerFeedback,
        Payload::Powers(solution.powers.clone()),
    );
    Ok((tb.finish(), Some(solution), nodes))
}

/// Run the downlink cooperation session; both stations hold both users'
/// data, exchange the cross-transmission coefficients, and iterate the same
/// deterministic precoder solve.
pub fn run_downlink_session<T>(
    vc: &VirtualChannel<T>,
    inputs: &[Constellation<T>],
    link: &BackhaulLink<T>,
    params: &SessionParams<T>,
) -> Result<(Transcript<T>, Option<PrecoderSolution<T>>)>
where
    T: Real + Send + Sync + Serialize,
    StandardNormal: Distribution<T>,
{
    if vc.n() < 2 {
        return Err(Error::DimensionMismatch(
            "sessions model a two-station cluster".into(),
        ));
    }
    let mut tb = TranscriptBuilder::new(params.latency);
    let n = vc.n();
    let budget = params.precoder.trace_budget;
    let per_mode = (budget / r::<T>(n as f64)).sqrt();
    let d0 = vec![per_mode; n];
    let (to_bs2, to_bs1) = svd_cross_terms(vc, &d0)?;

    let cross_payloads = [
        Payload::CrossTerm([to_bs2.re, to_bs2.im]),
        Payload::CrossTerm([to_bs1.re, to_bs1.im]),
    ];
    // the precoder share is planned up front so the load check covers it
    let precoder_size = 2 * (n * n) as u64 + 1;
    let sizes: Vec<u64> = cross_payloads
        .iter()
        .map(Payload::size)
        .chain([precoder_size, precoder_size])
        .collect();
    let load = congestion_load(link, &sizes);
    if load > link.capacity() {
        tb.push(BsId::Bs1, MessageKind::CongestionNotice, Payload::Notice);
        tb.push(BsId::Bs2, MessageKind::CongestionNotice, Payload::Notice);
        return Ok((tb.finish(), None));
    }

    let [p1, p2] = cross_payloads;
    tb.push(BsId::Bs1, MessageKind::CrossTransmitShare, p1);
    tb.push(BsId::Bs2, MessageKind::CrossTransmitShare, p2);

    let solution = solve_precoder_iterative(vc, None, inputs, &params.precoder)?;
    let share = Payload::Precoder {
        entries: complex_mat_payload(solution.precoder.matrix()),
        trace_budget: solution.precoder.trace_budget(),
    };
    tb.push(BsId::Bs1, MessageKind::PrecoderShare, share.clone());
    tb.push(BsId::Bs2, MessageKind::PrecoderShare, share);
    Ok((tb.finish(), Some(solution)))
}
