//! Subcommand implementations. Every artifact is plot-ready CSV or JSON;
//! CSV files open with a `#` header carrying the config hash and seed so a
//! result can always be traced back to its inputs.

use std::fmt::Write as _;

use anyhow::Context;
use mcp_core::constellation::{enumerate_joint, Constellation};
use mcp_core::coopsim::{run_downlink_session, run_uplink_session, BackhaulLink, SessionParams};
use mcp_core::infotheory::{mi_for_inputs, mi_gaussian, mmse_for_inputs};
use mcp_core::integrate::Integrator;
use mcp_core::power::solve_power_iterative;
use mcp_core::precoder::optimize_precoder_high_snr;
use mcp_core::precoder::solve_precoder_iterative;
use mcp_core::CMat64;
use rayon::prelude::*;

use crate::config::{db_to_linear, derive_seed, ExperimentConfig, PrecodeMode, SimMode};
use crate::exit;

fn header(cfg: &ExperimentConfig) -> String {
    format!(
        "# scenario={} config_sha256={} seed={} schema=1\n",
        cfg.scenario, cfg.config_hash, cfg.seed
    )
}

fn write_out(cfg: &ExperimentConfig, name: &str, contents: &str) -> anyhow::Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("cannot create output dir {}", cfg.out_dir.display()))?;
    let path = cfg.out_dir.join(name);
    std::fs::write(&path, contents)
        .with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn fmt_f(x: f64) -> String {
    format!("{x:.12e}")
}

/// One sweep row of `mcp mi`.
struct MiRow {
    snr_db: f64,
    mi_bits: f64,
    std_error: f64,
    e11: f64,
    e22: f64,
    e12_abs: f64,
    e21_abs: f64,
    sum_e: f64,
}

pub fn cmd_mi(cfg: &ExperimentConfig) -> anyhow::Result<i32> {
    let unit_p = CMat64::identity(cfg.channel_n, cfg.channel_n);
    let rows: Vec<anyhow::Result<MiRow>> = cfg
        .snr_db
        .par_iter()
        .enumerate()
        .map(|(k, &db)| -> anyhow::Result<MiRow> {
            let channel = cfg.channel(db_to_linear(db))?;
            let integ = cfg.integrator_at(k);
            let mi = mi_for_inputs(&channel, &unit_p, &cfg.users, &integ)?;
            let e = mmse_for_inputs(&channel, &unit_p, &cfg.users, &integ)?;
            let n = e.n();
            let (e12, e21) = if n >= 2 {
                (e.e()[(0, 1)].norm(), e.e()[(1, 0)].norm())
            } else {
                (0.0, 0.0)
            };
            Ok(MiRow {
                snr_db: db,
                mi_bits: mi.bits,
                std_error: mi.std_error_bits(),
                e11: e.per_user_mmse()[0],
                e22: if n >= 2 { e.per_user_mmse()[1] } else { 0.0 },
                e12_abs: e12,
                e21_abs: e21,
                sum_e: e.per_user_mmse().iter().sum(),
            })
        })
        .collect();

    let mut csv = header(cfg);
    csv.push_str("snr_db,mi_bits,std_error,e11,e22,e12_abs,e21_abs,sum_e\n");
    for row in rows {
        let r = row?;
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.snr_db,
            fmt_f(r.mi_bits),
            fmt_f(r.std_error),
            fmt_f(r.e11),
            fmt_f(r.e22),
            fmt_f(r.e12_abs),
            fmt_f(r.e21_abs),
            fmt_f(r.sum_e)
        )?;
    }
    write_out(cfg, "mi.csv", &csv)?;
    Ok(exit::OK)
}

/// One row of the interference table.
pub struct Table2Row {
    pub setup: String,
    pub signaling: String,
    pub mi_without: f64,
    pub mi_with: f64,
    pub loss: f64,
    pub std_error: f64,
}

/// Compute the interference table rows: identity channel vs all-unity
/// gains, at the given high-snr point.
pub fn table2_rows_core(
    snr_db: f64,
    samples: usize,
    sizes: &[usize],
    seed: u64,
) -> anyhow::Result<Vec<Table2Row>> {
    let snr = db_to_linear(snr_db);
    let mut rows = Vec::new();
    for (ri, &n) in sizes.iter().enumerate() {
        for (ci, kind) in ["bpsk", "qpsk"].iter().enumerate() {
            let users: Vec<Constellation<f64>> = match *kind {
                "bpsk" => vec![Constellation::bpsk(); n],
                _ => vec![Constellation::qpsk(); n],
            };
            let alphabet = enumerate_joint(&users)?;
            // 4x4 qpsk is the heavy case; refuse under-budgeted runs
            if n >= 4 && *kind == "qpsk" && samples < 100_000 {
                anyhow::bail!("table2: 4x4 qpsk needs >= 100000 samples (got {samples})");
            }
            let quad_ok = n <= 2;
            let mut se = 0.0f64;
            let mut mi_of = |entries: Vec<f64>, salt: u64| -> anyhow::Result<f64> {
                let channel = mcp_core::VirtualChannel64::from_row_major(n, &entries, snr)?;
                let integ = if quad_ok {
                    Integrator::GaussHermite { nodes: 32 }
                } else {
                    Integrator::MonteCarlo {
                        samples,
                        seed: derive_seed(seed, salt),
                    }
                };
                let p = CMat64::identity(n, n);
                let mi = mcp_core::infotheory::mi_discrete(&channel, &p, &alphabet, &integ)?;
                se = se.max(mi.std_error_bits());
                Ok(mi.bits)
            };
            let salt = (ri * 2 + ci) as u64;
            let ident: Vec<f64> = (0..n * n)
                .flat_map(|k| if k % (n + 1) == 0 { [1.0, 0.0] } else { [0.0, 0.0] })
                .collect();
            let ones: Vec<f64> = (0..n * n).flat_map(|_| [1.0, 0.0]).collect();
            let mi_without = mi_of(ident, 2 * salt)?;
            let mi_with = mi_of(ones, 2 * salt + 1)?;
            rows.push(Table2Row {
                setup: format!("{n}x{n}"),
                signaling: kind.to_uppercase(),
                mi_without,
                mi_with,
                loss: mi_without - mi_with,
                std_error: se,
            });
        }
    }
    Ok(rows)
}

fn table2_rows(cfg: &ExperimentConfig) -> anyhow::Result<Vec<Table2Row>> {
    table2_rows_core(
        cfg.table2.snr_db,
        cfg.table2.samples,
        &cfg.table2.sizes,
        cfg.seed,
    )
}

pub fn cmd_table2(cfg: &ExperimentConfig) -> anyhow::Result<i32> {
    let rows = table2_rows(cfg)?;
    let mut csv = header(cfg);
    csv.push_str("setup,signaling,mi_without_bits,mi_with_bits,loss_bits,std_error_bits\n");
    println!("setup  signaling  MI w/o int  MI w/ int  loss");
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.setup,
            r.signaling,
            fmt_f(r.mi_without),
            fmt_f(r.mi_with),
            fmt_f(r.loss),
            fmt_f(r.std_error)
        )?;
        println!(
            "{:5}  {:9}  {:10.4}  {:9.4}  {:5.4}",
            r.setup, r.signaling, r.mi_without, r.mi_with, r.loss
        );
    }
    write_out(cfg, "table2.csv", &csv)?;
    Ok(exit::OK)
}

pub fn cmd_power(cfg: &ExperimentConfig) -> anyhow::Result<i32> {
    let top_db = *cfg.snr_db.last().expect("validated nonempty grid");
    let channel = cfg.channel(db_to_linear(top_db))?;
    let solution = solve_power_iterative(&channel, &cfg.caps, &cfg.users, &cfg.power_params)?;
    let json = serde_json::to_string_pretty(&solution)?;
    write_out(cfg, "power.json", &json)?;
    if solution.converged {
        Ok(exit::OK)
    } else {
        eprintln!(
            "power solve did not converge in {} iterations (residual {:.3e}); best iterate written",
            solution.iterations, solution.residual
        );
        Ok(exit::NO_CONVERGENCE)
    }
}

fn precoder_json(p: &mcp_core::PrecoderMatrix64) -> serde_json::Value {
    let m = p.matrix();
    let mut entries = Vec::with_capacity(2 * m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            entries.push(m[(i, j)].re);
            entries.push(m[(i, j)].im);
        }
    }
    serde_json::json!({
        "rows": m.nrows(),
        "cols": m.ncols(),
        "entries": entries,
        "trace_budget": p.trace_budget(),
    })
}

pub fn cmd_precode(cfg: &ExperimentConfig) -> anyhow::Result<i32> {
    match cfg.precode_mode {
        PrecodeMode::Solve => {
            let top_db = *cfg.snr_db.last().expect("validated nonempty grid");
            let channel = cfg.channel(db_to_linear(top_db))?;
            let sol = solve_precoder_iterative(&channel, None, &cfg.users, &cfg.precoder_params)?;
            let json = serde_json::json!({
                "precoder": precoder_json(&sol.precoder),
                "iterations": sol.iterations,
                "residual": sol.residual,
                "converged": sol.converged,
            });
            write_out(cfg, "precoder.json", &serde_json::to_string_pretty(&json)?)?;
            if sol.converged {
                Ok(exit::OK)
            } else {
                eprintln!(
                    "precoder solve did not converge in {} iterations (residual {:.3e})",
                    sol.iterations, sol.residual
                );
                Ok(exit::NO_CONVERGENCE)
            }
        }
        PrecodeMode::Optimize => {
            let finite_users: Vec<Constellation<f64>> = cfg.users.clone();
            let alphabet = enumerate_joint(&finite_users)?;
            let channel = cfg.channel(cfg.high_snr_params.snr)?;
            let result = optimize_precoder_high_snr(&channel, &alphabet, &cfg.high_snr_params)?;
            let mut csv = header(cfg);
            csv.push_str("restart,iter,d_min,trace\n");
            for it in &result.trace {
                writeln!(csv, "{},{},{},{}", it.restart, it.iter, fmt_f(it.d_min), fmt_f(it.trace))?;
            }
            write_out(cfg, "precoder_trace.csv", &csv)?;
            let json = serde_json::json!({
                "precoder": precoder_json(&result.precoder),
                "d_min": result.d_min,
                "bound_nats": result.bound_nats,
                "improved": result.improved,
            });
            write_out(cfg, "precoder.json", &serde_json::to_string_pretty(&json)?)?;
            Ok(exit::OK)
        }
        PrecodeMode::Compare => {
            // MI curves over the snr grid for each named precoder
            let mut csv = header(cfg);
            csv.push_str("snr_db,name,mi_bits,std_error_bits,d_min\n");
            for nm in &cfg.compare {
                let rows: Vec<anyhow::Result<(f64, f64, f64, f64)>> = cfg
                    .snr_db
                    .par_iter()
                    .enumerate()
                    .map(|(k, &db)| -> anyhow::Result<(f64, f64, f64, f64)> {
                        let channel = cfg.channel(db_to_linear(db))?;
                        let integ = cfg.integrator_at(k);
                        let mi = mi_for_inputs(&channel, &nm.matrix, &cfg.users, &integ)?;
                        let d = if cfg.users.iter().all(|c| c.is_finite()) {
                            let alphabet = enumerate_joint(&cfg.users)?;
                            mcp_core::precoder::d_min(&channel, &nm.matrix, &alphabet)?
                        } else {
                            f64::NAN
                        };
                        Ok((db, mi.bits, mi.std_error_bits(), d))
                    })
                    .collect();
                for row in rows {
                    let (db, bits, se, d) = row?;
                    writeln!(csv, "{},{},{},{},{}", db, nm.name, fmt_f(bits), fmt_f(se), fmt_f(d))?;
                }
            }
            write_out(cfg, "precoder_compare.csv", &csv)?;
            Ok(exit::OK)
        }
    }
}

pub fn cmd_sim(cfg: &ExperimentConfig) -> anyhow::Result<i32> {
    let sim = cfg
        .sim
        .as_ref()
        .context("field `sim`: required for the sim subcommand")?;
    let link = BackhaulLink::new(sim.bandwidth, sim.threshold, sim.per_message_cost)?;
    let top_db = *cfg.snr_db.last().expect("validated nonempty grid");
    let channel = cfg.channel(db_to_linear(top_db))?;
    let params = SessionParams {
        resources: sim.resources,
        latency: sim.latency,
        seed: cfg.seed,
        power: cfg.power_params.clone(),
        precoder: cfg.precoder_params.clone(),
    };
    match sim.mode {
        SimMode::Uplink => {
            let (transcript, solution, _) =
                run_uplink_session(&channel, &cfg.caps, &cfg.users, &link, &params)?;
            write_out(cfg, "transcript.json", &transcript.to_json())?;
            match solution {
                Some(sol) => {
                    write_out(cfg, "power.json", &serde_json::to_string_pretty(&sol)?)?;
                    if sol.converged {
                        Ok(exit::OK)
                    } else {
                        Ok(exit::NO_CONVERGENCE)
                    }
                }
                None => {
                    println!("congestion: minimal cooperation, no solution exchanged");
                    Ok(exit::OK)
                }
            }
        }
        SimMode::Downlink => {
            let (transcript, solution) =
                run_downlink_session(&channel, &cfg.users, &link, &params)?;
            write_out(cfg, "transcript.json", &transcript.to_json())?;
            match solution {
                Some(sol) => {
                    let json = serde_json::json!({
                        "precoder": precoder_json(&sol.precoder),
                        "iterations": sol.iterations,
                        "converged": sol.converged,
                    });
                    write_out(cfg, "precoder.json", &serde_json::to_string_pretty(&json)?)?;
                    if sol.converged {
                        Ok(exit::OK)
                    } else {
                        Ok(exit::NO_CONVERGENCE)
                    }
                }
                None => {
                    println!("congestion: minimal cooperation, no solution exchanged");
                    Ok(exit::OK)
                }
            }
        }
    }
}

pub fn cmd_check(cfg: &ExperimentConfig) -> anyhow::Result<i32> {
    let results = crate::check::run_all(2.0);
    let mut csv = header(cfg);
    csv.push_str("check,passed,measured,tolerance\n");
    let mut all_ok = true;
    for r in &results {
        println!(
            "{} {} (measured {:.3e}, tol {:.3e}) {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.measured,
            r.tolerance,
            r.detail
        );
        writeln!(csv, "{},{},{},{}", r.name, r.passed, fmt_f(r.measured), fmt_f(r.tolerance))?;
        all_ok &= r.passed;
    }
    write_out(cfg, "check.csv", &csv)?;
    if all_ok {
        Ok(exit::OK)
    } else {
        Ok(exit::PROPERTY_FAILURE)
    }
}

/// Gaussian MI for a fixed precoding matrix; helper shared with tests.
pub fn gaussian_bits(channel: &mcp_core::VirtualChannel64, p: &CMat64) -> anyhow::Result<f64> {
    Ok(mi_gaussian(channel, p)?.bits)
}

#[allow(unused)]
fn _assert_send<T: Send>() {}
