//! Cross-module consistency checks against independent oracles:
//! finite differences for gradients, closed forms against quadrature,
//! series expansions against exact values, and the waterfilling solution
//! against the fixed-point iteration.

use mcp_core::channel::VirtualChannel;
use mcp_core::constellation::{enumerate_joint, Constellation, JointAlphabet};
use mcp_core::infotheory::{
    bpsk_siso_mi, bpsk_siso_mmse, eval_mmse_expansion, lowsnr_mi_expansion, lowsnr_mmse_expansion,
    mi_discrete, mi_gaussian, mi_gradient, mmse_matrix, total_channel_mmse,
};
use mcp_core::integrate::Integrator;
use mcp_core::power::{solve_power_iterative, PowerSolveParams};
use mcp_core::precoder::{gaussian_waterfilling_powers, solve_precoder_iterative, PrecoderSolveParams};
use mcp_core::{CMat64, Cx64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vc(entries: &[f64], n: usize, snr: f64) -> VirtualChannel<f64> {
    let inter: Vec<f64> = entries.iter().flat_map(|&x| [x, 0.0]).collect();
    VirtualChannel::from_row_major(n, &inter, snr).unwrap()
}

fn random_entries(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..4).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()
}

fn bpsk2() -> JointAlphabet<f64> {
    let b = Constellation::<f64>::bpsk();
    enumerate_joint(&[b.clone(), b]).unwrap()
}

fn quad(nodes: usize) -> Integrator {
    Integrator::GaussHermite { nodes }
}

#[test]
fn gradient_matches_finite_differences_gaussian_and_bpsk() {
    let entries = random_entries(42);
    let snr = 1.0;
    let channel = vc(&entries, 2, snr);
    let p = CMat64::from_diagonal(&nalgebra::DVector::from_vec(vec![
        Cx64::new(0.8, 0.0),
        Cx64::new(0.6, 0.0),
    ]));
    let h = 1e-4;

    // Gaussian closed form
    let e = mcp_core::infotheory::gaussian_mmse_matrix(&channel, &p).unwrap();
    let grad = mi_gradient(&channel, &p, &e).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let mut up = p.clone();
            up[(i, j)] += Cx64::new(h, 0.0);
            let mut dn = p.clone();
            dn[(i, j)] -= Cx64::new(h, 0.0);
            let fd = (mi_gaussian(&channel, &up).unwrap().nats
                - mi_gaussian(&channel, &dn).unwrap().nats)
                / (2.0 * h);
            assert!(
                (fd - 2.0 * grad[(i, j)].re).abs() < 1e-6,
                "gaussian entry ({i},{j}): fd {fd} vs 2Re(grad) {}",
                2.0 * grad[(i, j)].re
            );
        }
    }

    // discrete inputs (quadrature)
    let alphabet = bpsk2();
    let integ = quad(32);
    let e = mmse_matrix(&channel, &p, &alphabet, &integ).unwrap();
    let grad = mi_gradient(&channel, &p, &e).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let mut up = p.clone();
            up[(i, j)] += Cx64::new(h, 0.0);
            let mut dn = p.clone();
            dn[(i, j)] -= Cx64::new(h, 0.0);
            let fd = (mi_discrete(&channel, &up, &alphabet, &integ).unwrap().nats
                - mi_discrete(&channel, &dn, &alphabet, &integ).unwrap().nats)
                / (2.0 * h);
            assert!(
                (fd - 2.0 * grad[(i, j)].re).abs() < 1e-3,
                "bpsk entry ({i},{j}): fd {fd} vs 2Re(grad) {}",
                2.0 * grad[(i, j)].re
            );
        }
    }

    // imaginary perturbation picks up the imaginary part of the gradient
    let mut up = p.clone();
    up[(0, 1)] += Cx64::new(0.0, h);
    let mut dn = p.clone();
    dn[(0, 1)] -= Cx64::new(0.0, h);
    let fd = (mi_discrete(&channel, &up, &alphabet, &integ).unwrap().nats
        - mi_discrete(&channel, &dn, &alphabet, &integ).unwrap().nats)
        / (2.0 * h);
    assert!(
        (fd - 2.0 * grad[(0, 1)].im).abs() < 1e-3,
        "imaginary direction: fd {fd} vs 2Im(grad) {}",
        2.0 * grad[(0, 1)].im
    );
}

#[test]
fn snr_derivative_equals_weighted_mmse_trace() {
    let alphabet = bpsk2();
    let integ = quad(32);
    let p = CMat64::identity(2, 2);
    for seed in [1u64, 2] {
        let entries = random_entries(seed);
        for &snr in &[0.5, 1.0, 2.0] {
            let h = 1e-3 * snr;
            let up = mi_discrete(&vc(&entries, 2, snr + h), &p, &alphabet, &integ).unwrap();
            let dn = mi_discrete(&vc(&entries, 2, snr - h), &p, &alphabet, &integ).unwrap();
            let fd = (up.nats - dn.nats) / (2.0 * h);
            let channel = vc(&entries, 2, snr);
            let e = mmse_matrix(&channel, &p, &alphabet, &integ).unwrap();
            let trace = total_channel_mmse(&channel, &p, &e).unwrap();
            assert!(
                (fd - trace).abs() < 2e-3,
                "seed {seed} snr {snr}: fd {fd} vs trace {trace}"
            );
        }
    }
}

#[test]
fn discrete_mi_below_gaussian_and_entropy_and_monotone() {
    let entries = random_entries(7);
    let alphabet = bpsk2();
    let integ = quad(24);
    let p = CMat64::identity(2, 2);
    let mut last = -1.0;
    for &snr in &[0.0, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0] {
        let channel = vc(&entries, 2, snr);
        let mi = mi_discrete(&channel, &p, &alphabet, &integ).unwrap();
        let gauss = mi_gaussian(&channel, &p).unwrap();
        assert!(mi.bits <= 2.0 + 1e-9, "entropy cap at snr {snr}");
        assert!(
            mi.nats <= gauss.nats + 1e-9,
            "gaussian optimality at snr {snr}: {} vs {}",
            mi.nats,
            gauss.nats
        );
        assert!(mi.nats >= last - 1e-9, "mi must not decrease (snr {snr})");
        last = mi.nats;
    }
}

#[test]
fn mmse_diagonal_decreases_with_snr() {
    let entries = random_entries(12);
    let alphabet = bpsk2();
    let integ = quad(24);
    let p = CMat64::identity(2, 2);
    let mut last = [f64::INFINITY; 2];
    for &snr in &[0.0, 0.3, 1.0, 3.0, 10.0] {
        let channel = vc(&entries, 2, snr);
        let e = mmse_matrix(&channel, &p, &alphabet, &integ).unwrap();
        for u in 0..2 {
            let v = e.per_user_mmse()[u];
            assert!(v <= last[u] + 1e-9, "user {u} mmse grew at snr {snr}");
            assert!((0.0..=1.0 + 1e-9).contains(&v));
            last[u] = v;
        }
        // Hermitian PSD within tolerance
        let eig = e.e().clone().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-8));
    }
}

#[test]
fn closed_forms_match_generic_estimators_scalar_channel() {
    let b = Constellation::<f64>::bpsk();
    let alphabet = enumerate_joint(&[b]).unwrap();
    let p = CMat64::identity(1, 1);
    let integ = quad(96);
    for &snr in &[0.1, 1.0, 10.0] {
        let channel = vc(&[1.0], 1, snr);
        let mi = mi_discrete(&channel, &p, &alphabet, &integ).unwrap().nats;
        let e = mmse_matrix(&channel, &p, &alphabet, &integ).unwrap().per_user_mmse()[0];
        assert!(
            (mi - bpsk_siso_mi(snr)).abs() < 1e-6,
            "mi mismatch at snr {snr}: {:.3e}",
            (mi - bpsk_siso_mi(snr)).abs()
        );
        assert!(
            (e - bpsk_siso_mmse(snr)).abs() < 1e-6,
            "mmse mismatch at snr {snr}: {:.3e}",
            (e - bpsk_siso_mmse(snr)).abs()
        );
    }
}

#[test]
fn lowsnr_expansion_error_is_second_order_for_proper_inputs() {
    // unit-energy (proper) four-point alphabet; the real binary alphabet
    // doubles the first-order coefficient and is excluded by construction
    let q = Constellation::<f64>::qpsk().normalized().unwrap();
    let alphabet = enumerate_joint(&[q.clone(), q]).unwrap();
    let entries = [1.0, 0.3, 0.2, 0.8];
    let p = CMat64::identity(2, 2);
    let integ = quad(24);
    let err_at = |snr: f64| -> f64 {
        let channel = vc(&entries, 2, snr);
        let exact = mmse_matrix(&channel, &p, &alphabet, &integ).unwrap();
        let exp = lowsnr_mmse_expansion(&channel, &p).unwrap();
        (exact.e() - eval_mmse_expansion(&exp, snr)).norm()
    };
    let ratio = err_at(1e-2) / err_at(1e-3);
    assert!(
        (100.0 / 3.0..=300.0).contains(&ratio),
        "order ratio {ratio} outside [33, 300]"
    );
}

#[test]
fn lowsnr_first_coefficient_is_signaling_independent() {
    let entries = [1.0, 0.3, 0.2, 0.8];
    let p = CMat64::identity(2, 2);
    let snr = 1e-3;
    let channel = vc(&entries, 2, snr);
    let alphabet = bpsk2();
    let c_bpsk = mi_discrete(&channel, &p, &alphabet, &quad(24)).unwrap().nats / snr;
    let c_gauss = mi_gaussian(&channel, &p).unwrap().nats / snr;
    let (c0, _) = lowsnr_mi_expansion(&channel, &p).unwrap();
    assert!(
        (c_bpsk - c_gauss).abs() / c0 < 0.01,
        "first coefficients differ: bpsk {c_bpsk} gauss {c_gauss} (analytic {c0})"
    );
    assert!((c_gauss - c0).abs() / c0 < 0.01);
}

#[test]
fn fixed_point_precoder_reaches_waterfilling_on_diagonal_channels() {
    // both modes active
    let channel = vc(&[1.0, 0.0, 0.0, 0.8], 2, 3.0);
    let g = Constellation::<f64>::gaussian();
    let params = PrecoderSolveParams::<f64>::default();
    let sol = solve_precoder_iterative(&channel, None, &[g.clone(), g.clone()], &params).unwrap();
    assert!(sol.converged);
    let want = gaussian_waterfilling_powers(&[1.0, 0.64], 3.0, 1.0);
    for i in 0..2 {
        let got = sol.precoder.matrix()[(i, i)].norm_sqr();
        assert!(
            (got - want[i]).abs() < 1e-5,
            "mode {i}: fixed point {got} vs waterfilling {}",
            want[i]
        );
    }

    // weak mode shut off
    let channel = vc(&[2.0, 0.0, 0.0, 0.2], 2, 1.0);
    let params = PrecoderSolveParams {
        trace_budget: 0.5,
        ..Default::default()
    };
    let sol = solve_precoder_iterative(&channel, None, &[g.clone(), g], &params).unwrap();
    let want = gaussian_waterfilling_powers(&[4.0, 0.04], 1.0, 0.5);
    assert!(want[1] == 0.0);
    assert!((sol.precoder.matrix()[(0, 0)].norm_sqr() - want[0]).abs() < 1e-5);
    assert!(sol.precoder.matrix()[(1, 1)].norm_sqr() < 1e-6);
}

#[test]
fn power_iteration_is_feasible_and_monotone_for_gaussian() {
    let entries = random_entries(3);
    let channel = vc(&entries, 2, 1.5);
    let g = Constellation::<f64>::gaussian();
    let caps = [1.0, 0.7];
    let params = PowerSolveParams::<f64> {
        step_rule: mcp_core::power::StepRule::Constant(0.05),
        ..Default::default()
    };
    // re-run the iteration manually to observe the objective
    let sol = solve_power_iterative(&channel, &caps, &[g.clone(), g.clone()], &params).unwrap();
    assert!(sol.powers.iter().zip(&caps).all(|(&p, &q)| p >= 0.0 && p <= q + 1e-12));
    // objective at the solution and at the start (half caps): must not drop
    let amp = |powers: &[f64]| {
        CMat64::from_diagonal(&nalgebra::DVector::from_vec(
            powers.iter().map(|&p| Cx64::new(p.sqrt(), 0.0)).collect(),
        ))
    };
    let mi_end = mi_gaussian(&channel, &amp(&sol.powers)).unwrap().nats;
    let mi_start = mi_gaussian(&channel, &amp(&[0.5, 0.35])).unwrap().nats;
    assert!(mi_end >= mi_start - 1e-12);
    assert!((sol.powers[0] - 1.0).abs() < 1e-6 && (sol.powers[1] - 0.7).abs() < 1e-6);
}

#[test]
fn qpsk_closed_form_matches_generic_two_bit_channel() {
    // natural-energy four-point alphabet over a scalar channel doubles the
    // binary values at the same snr
    let q = Constellation::<f64>::qpsk();
    let alphabet = enumerate_joint(&[q]).unwrap();
    let p = CMat64::identity(1, 1);
    for &snr in &[0.5, 2.0] {
        let channel = vc(&[1.0], 1, snr);
        let mi = mi_discrete(&channel, &p, &alphabet, &quad(96)).unwrap().nats;
        assert!(
            (mi - mcp_core::infotheory::qpsk_siso_mi(snr)).abs() < 1e-6,
            "qpsk mi mismatch at snr {snr}"
        );
    }
}
