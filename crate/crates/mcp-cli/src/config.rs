//! Experiment configuration: a single versioned TOML file.
//!
//! Schema (version 1):
//!
//! ```toml
//! version = 1
//! scenario = "name"          # free-form label
//! seed = 7                   # required for any Monte Carlo run
//!
//! [channel]
//! n = 2                      # array size (users == receivers)
//! preset = "identity"        # "identity" | "all_ones", or give entries
//! # entries = [re, im, re, im, ...]   # row-major, 2*n*n reals
//!
//! [[users]]                  # one per user; a single block is broadcast
//! kind = "bpsk"              # "bpsk" | "qpsk" | "gaussian" | "custom"
//! # points = [re, im, ...]   # custom only
//! # priors = [..]            # custom only
//! normalize_energy = false
//!
//! [snr]
//! db = [0.0, 5.0, 10.0]      # explicit grid, strictly increasing
//! # or: start_db / stop_db / count
//!
//! [integrator]
//! kind = "gauss_hermite"     # "gauss_hermite" | "monte_carlo"
//! nodes = 32
//! samples = 200000
//!
//! [power]                    # `mcp power` / uplink sim
//! caps = [1.0, 1.0]
//! step_rule = "diminishing"  # "diminishing" | "constant"
//! alpha0 = 0.5
//! update_rule = "projected_gradient"  # or "damped"
//! lambda = 1.0
//! max_iters = 400
//! tol = 1e-6
//!
//! [precoder]                 # `mcp precode` / downlink sim
//! mode = "solve"             # "solve" | "optimize" | "compare"
//! trace_budget = 1.0
//! snr_db = 10.0              # optimize: bound snr (linear = 10^(db/10))
//! restarts = 8
//! step = 0.08
//! max_iters = 2000
//! tol = 1e-9
//! beta = 0.0
//! # [[precoder.compare]]     # compare mode: named matrices
//! # name = "identity"
//! # entries = [re, im, ...]
//!
//! [sim]
//! mode = "uplink"            # "uplink" | "downlink"
//! bandwidth = 1000.0
//! threshold = 1.0
//! per_message_cost = 1.0
//! resources = [1.0, 1.0]
//! latency = 1.0
//!
//! [table2]
//! snr_db = 25.0
//! samples = 200000
//! sizes = [2, 3, 4]
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use mcp_core::constellation::Constellation;
use mcp_core::integrate::Integrator;
use mcp_core::power::{PowerSolveParams, StepRule, UpdateRule};
use mcp_core::precoder::{HighSnrParams, PrecoderSolveParams};
use mcp_core::{CMat64, Cx64, VirtualChannel64};
use serde::Deserialize;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    version: u32,
    scenario: Option<String>,
    seed: Option<u64>,
    channel: RawChannel,
    users: Vec<RawUser>,
    snr: Option<RawSnr>,
    integrator: Option<RawIntegrator>,
    power: Option<RawPower>,
    precoder: Option<RawPrecoder>,
    sim: Option<RawSim>,
    table2: Option<RawTable2>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    n: usize,
    preset: Option<String>,
    entries: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUser {
    kind: String,
    points: Option<Vec<f64>>,
    priors: Option<Vec<f64>>,
    #[serde(default)]
    normalize_energy: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSnr {
    db: Option<Vec<f64>>,
    start_db: Option<f64>,
    stop_db: Option<f64>,
    count: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    kind: String,
    nodes: Option<usize>,
    samples: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPower {
    caps: Vec<f64>,
    step_rule: Option<String>,
    alpha0: Option<f64>,
    update_rule: Option<String>,
    lambda: Option<f64>,
    max_iters: Option<usize>,
    tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrecoder {
    mode: Option<String>,
    trace_budget: Option<f64>,
    snr_db: Option<f64>,
    restarts: Option<usize>,
    step: Option<f64>,
    max_iters: Option<usize>,
    tol: Option<f64>,
    beta: Option<f64>,
    lambda: Option<f64>,
    compare: Option<Vec<RawNamedMatrix>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNamedMatrix {
    name: String,
    entries: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    mode: String,
    bandwidth: f64,
    threshold: f64,
    per_message_cost: f64,
    resources: Option<[f64; 2]>,
    latency: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable2 {
    snr_db: Option<f64>,
    samples: Option<usize>,
    sizes: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
}

/// Precoder subcommand behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecodeMode {
    Solve,
    Optimize,
    Compare,
}

#[derive(Debug, Clone)]
pub struct NamedMatrix {
    pub name: String,
    pub matrix: CMat64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    Uplink,
    Downlink,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub mode: SimMode,
    pub bandwidth: f64,
    pub threshold: f64,
    pub per_message_cost: f64,
    pub resources: [f64; 2],
    pub latency: f64,
}

#[derive(Debug, Clone)]
pub struct Table2Config {
    pub snr_db: f64,
    pub samples: usize,
    pub sizes: Vec<usize>,
}

/// Fully validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub seed: u64,
    pub channel_n: usize,
    pub channel_entries: Vec<f64>,
    pub users: Vec<Constellation<f64>>,
    pub snr_db: Vec<f64>,
    pub integrator_kind: IntegratorKind,
    pub caps: Vec<f64>,
    pub power_params: PowerSolveParams<f64>,
    pub precode_mode: PrecodeMode,
    pub precoder_params: PrecoderSolveParams<f64>,
    pub high_snr_params: HighSnrParams<f64>,
    pub compare: Vec<NamedMatrix>,
    pub sim: Option<SimConfig>,
    pub table2: Table2Config,
    pub out_dir: PathBuf,
    /// SHA-256 of the raw config bytes, stamped into every output header.
    pub config_hash: String,
}

#[derive(Debug, Clone, Copy)]
pub enum IntegratorKind {
    GaussHermite { nodes: usize },
    MonteCarlo { samples: usize },
}

impl ExperimentConfig {
    pub fn load(path: &Path, seed_override: Option<u64>, out_override: Option<PathBuf>) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let text = String::from_utf8(bytes.clone()).context("config is not valid UTF-8")?;
        let raw: RawConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse {} (line/column above)", path.display()))?;
        Self::from_raw(raw, &bytes, seed_override, out_override)
    }

    fn from_raw(
        raw: RawConfig,
        bytes: &[u8],
        seed_override: Option<u64>,
        out_override: Option<PathBuf>,
    ) -> anyhow::Result<Self> {
        if raw.version != CONFIG_VERSION {
            bail!(
                "field `version`: unsupported config version {} (expected {CONFIG_VERSION})",
                raw.version
            );
        }
        let n = raw.channel.n;
        if n == 0 {
            bail!("field `channel.n`: must be >= 1");
        }
        let channel_entries = match (&raw.channel.preset, &raw.channel.entries) {
            (Some(p), None) => match p.as_str() {
                "identity" => identity_entries(n),
                "all_ones" => vec![[1.0, 0.0]; n * n].concat(),
                other => bail!("field `channel.preset`: unknown preset {other:?}"),
            },
            (None, Some(e)) => {
                if e.len() != 2 * n * n {
                    bail!(
                        "field `channel.entries`: expected {} reals for n = {n}, got {}",
                        2 * n * n,
                        e.len()
                    );
                }
                e.clone()
            }
            _ => bail!("field `channel`: give exactly one of `preset` or `entries`"),
        };

        if raw.users.is_empty() {
            bail!("field `users`: at least one user block required");
        }
        let mut users = Vec::with_capacity(n);
        let broadcast = raw.users.len() == 1;
        if !broadcast && raw.users.len() != n {
            bail!(
                "field `users`: got {} blocks for {} users (one block broadcasts)",
                raw.users.len(),
                n
            );
        }
        for i in 0..n {
            let block = if broadcast { &raw.users[0] } else { &raw.users[i] };
            users.push(parse_user(block, i)?);
        }

        let snr_db = parse_snr(raw.snr.as_ref())?;
        let seed = seed_override
            .or(raw.seed)
            .context("field `seed`: required (any Monte Carlo run must be reproducible)")?;

        let integrator_kind = match raw.integrator.as_ref() {
            None => IntegratorKind::GaussHermite { nodes: 32 },
            Some(i) => match i.kind.as_str() {
                "gauss_hermite" => IntegratorKind::GaussHermite {
                    nodes: i.nodes.unwrap_or(32),
                },
                "monte_carlo" => IntegratorKind::MonteCarlo {
                    samples: i.samples.unwrap_or(200_000),
                },
                other => bail!("field `integrator.kind`: unknown kind {other:?}"),
            },
        };

        let caps = raw
            .power
            .as_ref()
            .map(|p| p.caps.clone())
            .unwrap_or_else(|| vec![1.0; n]);
        if caps.len() != n {
            bail!("field `power.caps`: expected {n} entries, got {}", caps.len());
        }
        let power_params = parse_power(raw.power.as_ref(), integrator_kind, seed)?;

        let (precode_mode, precoder_params, high_snr_params, compare) =
            parse_precoder(raw.precoder.as_ref(), n, integrator_kind, seed, &snr_db)?;

        let sim = raw.sim.as_ref().map(|s| -> anyhow::Result<SimConfig> {
            let mode = match s.mode.as_str() {
                "uplink" => SimMode::Uplink,
                "downlink" => SimMode::Downlink,
                other => bail!("field `sim.mode`: unknown mode {other:?}"),
            };
            if s.threshold <= 0.0 {
                bail!("field `sim.threshold`: must be > 0");
            }
            Ok(SimConfig {
                mode,
                bandwidth: s.bandwidth,
                threshold: s.threshold,
                per_message_cost: s.per_message_cost,
                resources: s.resources.unwrap_or([1.0, 1.0]),
                latency: s.latency.unwrap_or(1.0),
            })
        });
        let sim = sim.transpose()?;

        let table2 = {
            let t = raw.table2.as_ref();
            Table2Config {
                snr_db: t.and_then(|t| t.snr_db).unwrap_or(25.0),
                samples: t.and_then(|t| t.samples).unwrap_or(200_000),
                sizes: t
                    .and_then(|t| t.sizes.clone())
                    .unwrap_or_else(|| vec![2, 3, 4]),
            }
        };
        if table2.sizes.iter().any(|&s| s == 0 || s > 4) {
            bail!("field `table2.sizes`: sizes must be in 1..=4");
        }

        let out_dir = out_override.unwrap_or_else(|| {
            raw.output
                .as_ref()
                .and_then(|o| o.dir.clone())
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("out"))
        });

        use sha2::Digest;
        let config_hash = format!("{:x}", sha2::Sha256::digest(bytes));

        Ok(Self {
            scenario: raw.scenario.unwrap_or_else(|| "unnamed".into()),
            seed,
            channel_n: n,
            channel_entries,
            users,
            snr_db,
            integrator_kind,
            caps,
            power_params,
            precode_mode,
            precoder_params,
            high_snr_params,
            compare,
            sim,
            table2,
            out_dir,
            config_hash,
        })
    }

    /// Channel at a linear snr.
    pub fn channel(&self, snr: f64) -> anyhow::Result<VirtualChannel64> {
        Ok(VirtualChannel64::from_row_major(
            self.channel_n,
            &self.channel_entries,
            snr,
        )?)
    }

    /// Integrator for a given sweep point; Monte Carlo seeds are derived
    /// per point so sweep rows are independent of execution order.
    pub fn integrator_at(&self, point: usize) -> Integrator {
        match self.integrator_kind {
            IntegratorKind::GaussHermite { nodes } => Integrator::GaussHermite { nodes },
            IntegratorKind::MonteCarlo { samples } => Integrator::MonteCarlo {
                samples,
                seed: derive_seed(self.seed, point as u64),
            },
        }
    }
}

/// Deterministic per-point seed derivation (splitmix64 over the index).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x1234_5678);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn identity_entries(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; 2 * n * n];
    for i in 0..n {
        v[2 * (i * n + i)] = 1.0;
    }
    v
}

fn parse_user(block: &RawUser, index: usize) -> anyhow::Result<Constellation<f64>> {
    let c = match block.kind.as_str() {
        "bpsk" => Constellation::bpsk(),
        "qpsk" => Constellation::qpsk(),
        "gaussian" => {
            if block.normalize_energy {
                bail!("field `users[{index}].normalize_energy`: not applicable to gaussian");
            }
            return Ok(Constellation::gaussian());
        }
        "custom" => {
            let pts = block.points.as_ref().with_context(|| {
                format!("field `users[{index}].points`: required for custom constellations")
            })?;
            if pts.len() % 2 != 0 || pts.is_empty() {
                bail!("field `users[{index}].points`: need interleaved re/im pairs");
            }
            let points: Vec<Cx64> = pts.chunks(2).map(|c| Cx64::new(c[0], c[1])).collect();
            let m = points.len();
            let priors = block
                .priors
                .clone()
                .unwrap_or_else(|| vec![1.0 / m as f64; m]);
            Constellation::custom(points, priors)
                .with_context(|| format!("field `users[{index}]`: invalid custom constellation"))?
        }
        other => bail!("field `users[{index}].kind`: unknown kind {other:?}"),
    };
    if block.normalize_energy {
        Ok(c.normalized()?)
    } else {
        Ok(c)
    }
}

fn parse_snr(raw: Option<&RawSnr>) -> anyhow::Result<Vec<f64>> {
    let Some(raw) = raw else {
        return Ok(vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0]);
    };
    let grid = if let Some(db) = &raw.db {
        db.clone()
    } else {
        let (start, stop, count) = (
            raw.start_db.context("field `snr.start_db`: required")?,
            raw.stop_db.context("field `snr.stop_db`: required")?,
            raw.count.context("field `snr.count`: required")?,
        );
        if count < 2 {
            bail!("field `snr.count`: must be >= 2");
        }
        (0..count)
            .map(|k| start + (stop - start) * k as f64 / (count - 1) as f64)
            .collect()
    };
    if grid.is_empty() {
        bail!("field `snr.db`: grid must be nonempty");
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        bail!("field `snr.db`: grid must be strictly increasing");
    }
    Ok(grid)
}

fn parse_power(
    raw: Option<&RawPower>,
    integ: IntegratorKind,
    seed: u64,
) -> anyhow::Result<PowerSolveParams<f64>> {
    let mut params = PowerSolveParams::<f64>::default();
    params.integrator = match integ {
        IntegratorKind::GaussHermite { nodes } => Integrator::GaussHermite {
            nodes: nodes.min(16),
        },
        IntegratorKind::MonteCarlo { samples } => Integrator::MonteCarlo {
            samples,
            seed: derive_seed(seed, u64::MAX),
        },
    };
    let Some(raw) = raw else { return Ok(params) };
    let alpha0 = raw.alpha0.unwrap_or(0.5);
    params.step_rule = match raw.step_rule.as_deref() {
        None | Some("diminishing") => StepRule::Diminishing(alpha0),
        Some("constant") => StepRule::Constant(alpha0),
        Some(other) => bail!("field `power.step_rule`: unknown rule {other:?}"),
    };
    params.update_rule = match raw.update_rule.as_deref() {
        None | Some("projected_gradient") => UpdateRule::ProjectedGradient,
        Some("damped") => UpdateRule::Damped {
            lambda: raw.lambda.unwrap_or(1.0),
        },
        Some(other) => bail!("field `power.update_rule`: unknown rule {other:?}"),
    };
    if let Some(m) = raw.max_iters {
        params.max_iters = m;
    }
    if let Some(t) = raw.tol {
        params.tol = t;
    }
    Ok(params)
}

fn parse_precoder(
    raw: Option<&RawPrecoder>,
    n: usize,
    integ: IntegratorKind,
    seed: u64,
    snr_db: &[f64],
) -> anyhow::Result<(
    PrecodeMode,
    PrecoderSolveParams<f64>,
    HighSnrParams<f64>,
    Vec<NamedMatrix>,
)> {
    let mut solve = PrecoderSolveParams::<f64>::default();
    solve.integrator = match integ {
        IntegratorKind::GaussHermite { nodes } => Integrator::GaussHermite {
            nodes: nodes.min(16),
        },
        IntegratorKind::MonteCarlo { samples } => Integrator::MonteCarlo {
            samples,
            seed: derive_seed(seed, u64::MAX - 1),
        },
    };
    let mut high = HighSnrParams::<f64>::default();
    high.seed = seed;
    high.snr = db_to_linear(snr_db.last().copied().unwrap_or(10.0));
    let Some(raw) = raw else {
        return Ok((PrecodeMode::Solve, solve, high, Vec::new()));
    };
    let mode = match raw.mode.as_deref() {
        None | Some("solve") => PrecodeMode::Solve,
        Some("optimize") => PrecodeMode::Optimize,
        Some("compare") => PrecodeMode::Compare,
        Some(other) => bail!("field `precoder.mode`: unknown mode {other:?}"),
    };
    if let Some(b) = raw.trace_budget {
        if b <= 0.0 {
            bail!("field `precoder.trace_budget`: must be > 0");
        }
        solve.trace_budget = b;
        high.trace_budget = b;
    }
    if let Some(db) = raw.snr_db {
        high.snr = db_to_linear(db);
    }
    if let Some(v) = raw.restarts {
        high.restarts = v;
    }
    if let Some(v) = raw.step {
        high.step = v;
    }
    if let Some(v) = raw.max_iters {
        high.max_iters = v;
        solve.max_iters = v;
    }
    if let Some(v) = raw.tol {
        high.tol = v;
        solve.tol = v;
    }
    if let Some(v) = raw.beta {
        high.beta = v;
    }
    if let Some(v) = raw.lambda {
        solve.lambda = v;
    }
    let mut compare = Vec::new();
    if let Some(list) = &raw.compare {
        for nm in list {
            if nm.entries.len() != 2 * n * n {
                bail!(
                    "field `precoder.compare.{}`: expected {} reals, got {}",
                    nm.name,
                    2 * n * n,
                    nm.entries.len()
                );
            }
            let matrix = CMat64::from_fn(n, n, |i, j| {
                let k = 2 * (i * n + j);
                Cx64::new(nm.entries[k], nm.entries[k + 1])
            });
            compare.push(NamedMatrix {
                name: nm.name.clone(),
                matrix,
            });
        }
    }
    if mode == PrecodeMode::Compare && compare.is_empty() {
        bail!("field `precoder.compare`: compare mode needs at least one matrix");
    }
    Ok((mode, solve, high, compare))
}
