//! Numeric property suite behind `mcp check`.
//!
//! Each check is a self-contained pass/fail with a measured value and its
//! tolerance, so a failing run prints exactly what drifted.

use mcp_core::constellation::{enumerate_joint, Constellation};
use mcp_core::infotheory::{
    bpsk_siso_mi, bpsk_siso_mmse, lowsnr_mmse_expansion, mi_discrete, mi_gradient, mmse_matrix,
    total_channel_mmse,
};
use mcp_core::integrate::Integrator;
use mcp_core::{CMat64, Cx64, VirtualChannel64};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, measured: f64, tolerance: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            passed: measured <= tolerance,
            measured,
            tolerance,
            detail,
        }
    }
}

fn vc(entries: &[f64], n: usize, snr: f64) -> VirtualChannel64 {
    let inter: Vec<f64> = entries.iter().flat_map(|&x| [x, 0.0]).collect();
    VirtualChannel64::from_row_major(n, &inter, snr).unwrap()
}

fn random_channel(seed: u64) -> Vec<f64> {
    // small deterministic LCG is enough for the fixed check channels
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
    };
    (0..4).map(|_| next()).collect()
}

/// Run the full suite. `gradient_factor` is the real-derivative convention
/// factor and must be 2; other values are injected by the negative-control
/// test to prove the check can fail.
pub fn run_all(gradient_factor: f64) -> Vec<CheckResult> {
    let mut results = Vec::new();
    results.push(check_snr_zero_identities());
    results.push(check_closed_form_vs_quadrature());
    results.push(check_erfc_floor());
    results.push(check_i_mmse_derivative());
    results.push(check_gradient_convention(gradient_factor));
    results.push(check_lowsnr_order());
    results
}

fn check_snr_zero_identities() -> CheckResult {
    let channel = vc(&[1.0, 1.0, 1.0, 1.0], 2, 0.0);
    let b = Constellation::<f64>::bpsk();
    let alphabet = enumerate_joint(&[b.clone(), b]).unwrap();
    let p = CMat64::identity(2, 2);
    let integ = Integrator::GaussHermite { nodes: 16 };
    let mi = mi_discrete(&channel, &p, &alphabet, &integ).unwrap();
    let e = mmse_matrix(&channel, &p, &alphabet, &integ).unwrap();
    let mi_err = mi.nats.abs();
    let e_err = (e.per_user_mmse()[0] - 1.0)
        .abs()
        .max((e.per_user_mmse()[1] - 1.0).abs());
    CheckResult::new(
        "snr-zero identities (MI = 0, E = diag energies)",
        mi_err.max(e_err),
        1e-10,
        format!("mi = {:.3e}, |E_ii - 1| = {:.3e}", mi.nats, e_err),
    )
}

fn check_closed_form_vs_quadrature() -> CheckResult {
    let b = Constellation::<f64>::bpsk();
    let alphabet = enumerate_joint(&[b]).unwrap();
    let p = CMat64::identity(1, 1);
    let integ = Integrator::GaussHermite { nodes: 96 };
    let mut worst = 0.0f64;
    for &snr in &[0.1, 1.0, 10.0] {
        let channel = vc(&[1.0], 1, snr);
        let mi = mi_discrete(&channel, &p, &alphabet, &integ).unwrap().nats;
        let e = mmse_matrix(&channel, &p, &alphabet, &integ).unwrap().per_user_mmse()[0];
        worst = worst
            .max((mi - bpsk_siso_mi(snr)).abs())
            .max((e - bpsk_siso_mmse(snr)).abs());
    }
    CheckResult::new(
        "closed form vs quadrature (binary scalar channel)",
        worst,
        1e-6,
        format!("max |closed - generic| = {worst:.3e}"),
    )
}

fn check_erfc_floor() -> CheckResult {
    let mut worst = f64::MIN;
    for k in 0..20 {
        let snr = 0.05 + 0.5 * k as f64;
        let floor = 0.5 * statrs::function::erf::erfc(snr.sqrt());
        let violation = floor - bpsk_siso_mmse(snr);
        worst = worst.max(violation);
    }
    CheckResult::new(
        "mmse dominates erfc/2 floor on 20-point grid",
        worst.max(0.0),
        0.0,
        format!("max violation = {worst:.3e}"),
    )
}

fn check_i_mmse_derivative() -> CheckResult {
    let b = Constellation::<f64>::bpsk();
    let alphabet = enumerate_joint(&[b.clone(), b]).unwrap();
    let p = CMat64::identity(2, 2);
    let integ = Integrator::GaussHermite { nodes: 32 };
    let entries = random_channel(5);
    let mut worst = 0.0f64;
    for &snr in &[0.5, 1.0, 2.0] {
        let channel = vc(&entries, 2, snr);
        let h = 1e-3 * snr;
        let up = mi_discrete(&vc(&entries, 2, snr + h), &p, &alphabet, &integ).unwrap();
        let dn = mi_discrete(&vc(&entries, 2, snr - h), &p, &alphabet, &integ).unwrap();
        let fd = (up.nats - dn.nats) / (2.0 * h);
        let e = mmse_matrix(&channel, &p, &alphabet, &integ).unwrap();
        let trace = total_channel_mmse(&channel, &p, &e).unwrap();
        worst = worst.max((fd - trace).abs());
    }
    CheckResult::new(
        "dI/dsnr equals the channel-weighted error trace",
        worst,
        2e-3,
        format!("max |fd - trace| = {worst:.3e}"),
    )
}

fn check_gradient_convention(gradient_factor: f64) -> CheckResult {
    let b = Constellation::<f64>::bpsk();
    let alphabet = enumerate_joint(&[b.clone(), b]).unwrap();
    let integ = Integrator::GaussHermite { nodes: 32 };
    let entries = random_channel(9);
    let snr = 1.0;
    let channel = vc(&entries, 2, snr);
    let p = CMat64::from_diagonal(&nalgebra::DVector::from_vec(vec![
        Cx64::new(0.9, 0.0),
        Cx64::new(0.7, 0.0),
    ]));
    let e = mmse_matrix(&channel, &p, &alphabet, &integ).unwrap();
    let grad = mi_gradient(&channel, &p, &e).unwrap();
    let h = 1e-4;
    let mut worst = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let mut up = p.clone();
            up[(i, j)] += Cx64::new(h, 0.0);
            let mut dn = p.clone();
            dn[(i, j)] -= Cx64::new(h, 0.0);
            let fu = mi_discrete(&channel, &up, &alphabet, &integ).unwrap().nats;
            let fd = mi_discrete(&channel, &dn, &alphabet, &integ).unwrap().nats;
            let numeric = (fu - fd) / (2.0 * h);
            let predicted = gradient_factor * grad[(i, j)].re;
            worst = worst.max((numeric - predicted).abs());
        }
    }
    CheckResult::new(
        "gradient matrix matches entrywise finite differences",
        worst,
        1e-3,
        format!("max |fd - {gradient_factor} Re(grad)| = {worst:.3e}"),
    )
}

fn check_lowsnr_order() -> CheckResult {
    // Gaussian closed form vs the expansion: error must drop ~100x from
    // snr = 1e-2 to 1e-3
    let entries = [1.0, 0.3, 0.2, 0.8];
    let p = CMat64::identity(2, 2);
    let err_at = |snr: f64| -> f64 {
        let channel = vc(&entries, 2, snr);
        let exact = mcp_core::infotheory::gaussian_mmse_matrix(&channel, &p).unwrap();
        let exp = lowsnr_mmse_expansion(&channel, &p).unwrap();
        let approx = mcp_core::infotheory::eval_mmse_expansion(&exp, snr);
        (exact.e() - approx).norm()
    };
    let ratio = err_at(1e-2) / err_at(1e-3);
    let deviation = (ratio / 100.0).max(100.0 / ratio);
    CheckResult::new(
        "low-snr expansion error scales as snr^2",
        deviation,
        3.0,
        format!("error ratio across one decade = {ratio:.1}"),
    )
}
