//! Release gate: every shipped claim checked end to end, one criterion per
//! test, one printed pass/fail line each.
//!
//! The two training-backed criteria share runs: the 50k-epoch desk run feeds
//! the endpoint checks, and the 200k-epoch run used by the schedule and
//! ranking checks resumes from it, which reproduces an uninterrupted long
//! run bit for bit.

use cdpinn_core::linalg::{
    hermitian_eigensystem, pauli_basis, pauli_decompose, pauli_reconstruct, ComplexMatrix,
};
use cdpinn_core::net::{forward_with_input_derivative, loss_gradient};
use cdpinn_core::oracle::{
    action_value, evolve_fidelity, exact_gauge_potential, nc_gauge_potential, AdiabaticRamp,
    ExactGaugeRamp, LinearSchedule, DEFAULT_GAP_TOLERANCE,
};
use cdpinn_core::physics::{build_total_h, CdLoss, LossTerm, LossWeights, SingleTermLoss};
use cdpinn_core::problem::{builtin_h2, ProblemSpec};
use cdpinn_core::train::{resume, train, NullSink, TrainConfig, TrainingState};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::LazyLock;

fn report(criterion: u32, name: &str, failures: &[String]) {
    if failures.is_empty() {
        println!("criterion {criterion} ({name}): PASS");
    } else {
        println!("criterion {criterion} ({name}): FAIL");
        panic!(
            "criterion {criterion} ({name}) failed:\n{}",
            failures.join("\n")
        );
    }
}

fn random_hermitian(dim: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(dim);
    for i in 0..dim {
        m.set(i, i, Complex64::new(rng.gen_range(-1.0..1.0), 0.0));
        for j in i + 1..dim {
            let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            m.set(i, j, z);
            m.set(j, i, z.conj());
        }
    }
    m
}

#[test]
fn criterion_1_pauli_roundtrip_and_fci_coupling() {
    let start = std::time::Instant::now();
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for n_qubits in 1..=3usize {
        let basis = pauli_basis(n_qubits).unwrap();
        for trial in 0..100 {
            let m = random_hermitian(1 << n_qubits, &mut rng);
            let coefficients = pauli_decompose(&m, &basis).unwrap();
            let back = pauli_reconstruct(&coefficients, &basis).unwrap();
            let worst = m
                .data()
                .iter()
                .zip(back.data())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0f64, f64::max);
            if worst > 1e-12 {
                failures.push(format!(
                    "roundtrip error {worst:.3e} for {n_qubits} qubits, trial {trial}"
                ));
            }
        }
    }
    let p = builtin_h2(1.0).unwrap();
    let basis = pauli_basis(2).unwrap();
    let coefficients = pauli_decompose(&p.h_final, &basis).unwrap();
    let xx = basis.labels().iter().position(|l| l == "XX").unwrap();
    if coefficients[xx].re != 0.19679058 || coefficients[xx].im != 0.0 {
        failures.push(format!(
            "XX coefficient of the d=1.0 target is {}, want 0.19679058 exactly",
            coefficients[xx].re
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 5.0 {
        failures.push(format!("took {elapsed:.1}s, budget 5s"));
    }
    report(1, "pauli roundtrip and FCI coupling", &failures);
}

#[test]
fn criterion_2_oracle_consistency_across_specs() {
    let start = std::time::Instant::now();
    let mut failures = Vec::new();
    for distance in [1.0, 1.5, 2.0, 2.5] {
        let p = builtin_h2(distance).unwrap();
        let zero = ComplexMatrix::zeros(p.dim());
        for i in 0..50 {
            let lambda = 0.05 + 0.9 * i as f64 / 49.0;
            let gauge = match exact_gauge_potential(&p, lambda, DEFAULT_GAP_TOLERANCE) {
                Ok(r) => r,
                Err(e) => {
                    failures.push(format!("d={distance} lambda={lambda:.4}: {e}"));
                    continue;
                }
            };
            if gauge.el_residual > 1e-10 {
                failures.push(format!(
                    "d={distance} lambda={lambda:.4}: Euler-Lagrange residual {:.3e}",
                    gauge.el_residual
                ));
            }
            let nc = nc_gauge_potential(&p, lambda, 2).unwrap();
            let action_nc = action_value(&p, lambda, &nc.a_nc);
            let action_zero = action_value(&p, lambda, &zero);
            // The order-2 ansatz spans the exact gauge for these specs, so the
            // first comparison is a tie up to rounding; allow that much.
            if !(gauge.action_value <= action_nc + 1e-12 && action_nc <= action_zero + 1e-12) {
                failures.push(format!(
                    "d={distance} lambda={lambda:.4}: actions not ordered \
                     ({:.6e} exact, {action_nc:.6e} nc, {action_zero:.6e} zero)",
                    gauge.action_value
                ));
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 30.0 {
        failures.push(format!("took {elapsed:.1}s, budget 30s"));
    }
    report(2, "oracle consistency across specs", &failures);
}

#[test]
fn criterion_3_single_qubit_closed_form() {
    let start = std::time::Instant::now();
    let mut failures = Vec::new();
    let hz = ComplexMatrix::from_real_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
    let hx = ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
    let p = ProblemSpec::new("toy".into(), 1, None, hz, hx).unwrap();
    let gauge = exact_gauge_potential(&p, 0.5, DEFAULT_GAP_TOLERANCE).unwrap();
    // Half the rotation-angle derivative of arctan(lambda / (1 - lambda))
    // evaluated at the crossing point.
    let magnitude = gauge.a_exact.get(0, 1).norm();
    if (magnitude - 1.0).abs() > 1e-10 {
        failures.push(format!(
            "off-diagonal gauge magnitude {magnitude} differs from the closed form 1"
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 1.0 {
        failures.push(format!("took {elapsed:.1}s, budget 1s"));
    }
    report(3, "single-qubit closed form", &failures);
}

#[test]
fn criterion_4_loss_gradients_match_finite_differences() {
    let start = std::time::Instant::now();
    let mut failures = Vec::new();
    let p = builtin_h2(1.0).unwrap();
    let cd = CdLoss::new(&p, LossWeights::default());
    let params = cdpinn_core::net::glorot_init(&[1, 16, 16, 49], 42).unwrap();
    // Endpoints first, then interior points: the batch layout every loss
    // term expects.
    let times = [0.0, 1.0, 0.11, 0.37, 0.52, 0.68, 0.83, 0.94];
    let mut rng = ChaCha8Rng::seed_from_u64(404);

    for term in [
        LossTerm::Ic,
        LossTerm::Fc,
        LossTerm::Action,
        LossTerm::Adiabaticity,
        LossTerm::Coupling,
    ] {
        let loss = SingleTermLoss { cd: &cd, term };
        let (_, grad) = loss_gradient(&params, &times, &loss);
        let mut checked = 0;
        while checked < 20 {
            let layer = rng.gen_range(0..params.weights.len());
            let use_bias = rng.gen_bool(0.2);
            let index = if use_bias {
                rng.gen_range(0..params.biases[layer].len())
            } else {
                rng.gen_range(0..params.weights[layer].len())
            };
            let analytic = if use_bias {
                grad.biases[layer][index]
            } else {
                grad.weights[layer][index]
            };
            let probe = |delta: f64| -> f64 {
                let mut shifted = params.clone();
                if use_bias {
                    shifted.biases[layer][index] += delta;
                } else {
                    shifted.weights[layer][index] += delta;
                }
                loss_gradient(&shifted, &times, &loss).0
            };
            let h = 1e-6;
            let fd = (probe(h) - probe(-h)) / (2.0 * h);
            let scale = analytic.abs().max(fd.abs());
            if scale < 1e-6 {
                // Too small for a meaningful relative comparison; draw again.
                continue;
            }
            checked += 1;
            let relative = (analytic - fd).abs() / scale;
            if relative > 1e-4 {
                failures.push(format!(
                    "{term:?} coordinate (layer {layer}, {} {index}): \
                     analytic {analytic:.8e} vs central difference {fd:.8e}",
                    if use_bias { "bias" } else { "weight" }
                ));
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 60.0 {
        failures.push(format!("took {elapsed:.1}s, budget 60s"));
    }
    report(4, "loss gradients against finite differences", &failures);
}

/// Criterion 5's run: the desk profile exactly as documented.
static DESK_RUN: LazyLock<TrainingState> = LazyLock::new(|| {
    let p = builtin_h2(1.0).unwrap();
    train(&p, &TrainConfig::desk(2, 1), &mut NullSink).expect("desk training completes")
});

/// Criteria 6 and 7 extend the desk run to 200k epochs; resuming is
/// bit-identical to running the long schedule from scratch.
static LONG_RUN: LazyLock<TrainingState> = LazyLock::new(|| {
    let p = builtin_h2(1.0).unwrap();
    let mut config = TrainConfig::desk(2, 1);
    config.epochs = 200_000;
    resume(&p, &config, DESK_RUN.clone(), &mut NullSink).expect("extended training completes")
});

#[test]
fn criterion_5_desk_training_hits_the_endpoint_contract() {
    let mut failures = Vec::new();
    let p = builtin_h2(1.0).unwrap();
    let state = &*DESK_RUN;

    let at_start = forward_with_input_derivative(&state.params, 0.0);
    let at_end = forward_with_input_derivative(&state.params, 1.0);
    if at_start.lambda > 0.02 {
        failures.push(format!("lambda(0) = {:.4}, want <= 0.02", at_start.lambda));
    }
    if at_end.lambda < 0.98 {
        failures.push(format!("lambda(1) = {:.4}, want >= 0.98", at_end.lambda));
    }
    let start_distance = build_total_h(&p, &at_start)
        .sub(&p.h_initial)
        .unwrap()
        .frobenius_norm_sq()
        .sqrt();
    let end_distance = build_total_h(&p, &at_end)
        .sub(&p.h_final)
        .unwrap()
        .frobenius_norm_sq()
        .sqrt();
    if start_distance > 0.05 {
        failures.push(format!(
            "|H(0) - H_HF| = {start_distance:.4}, want <= 0.05 Hartree"
        ));
    }
    if end_distance > 0.05 {
        failures.push(format!(
            "|H(1) - H_problem| = {end_distance:.4}, want <= 0.05 Hartree"
        ));
    }

    let final_breakdown = state.loss_history.last().unwrap().breakdown;
    let coupling_mean = final_breakdown.l_coupling / LossWeights::default().coupling;
    if coupling_mean > 1e-2 {
        failures.push(format!(
            "mean squared drive projection residual {coupling_mean:.3e}, want <= 1e-2"
        ));
    }

    // Smoothed total loss non-increasing: past the transient, the tracked
    // average may not rise more than 5 percent over any 10k-epoch window.
    let mut worst_ratio = 1.0f64;
    let mut worst_pair = (0u64, 0u64);
    let mut violations = 0usize;
    for (i, s1) in state.loss_history.iter().enumerate() {
        if s1.epoch < 20_000 {
            continue;
        }
        for s2 in &state.loss_history[i + 1..] {
            if s2.epoch > s1.epoch + 10_000 {
                break;
            }
            let ratio = s2.ema_total / s1.ema_total;
            if ratio > 1.05 {
                violations += 1;
                if ratio > worst_ratio {
                    worst_ratio = ratio;
                    worst_pair = (s1.epoch, s2.epoch);
                }
            }
        }
    }
    if violations > 0 {
        failures.push(format!(
            "smoothed loss rises within 10k-epoch windows past epoch 20k \
             ({violations} logged pairs over the 1.05 allowance; worst is \
             {worst_ratio:.4}x between epochs {} and {})",
            worst_pair.0, worst_pair.1
        ));
    }
    report(5, "desk-scale training endpoints", &failures);
}

#[test]
fn criterion_6_schedule_approaches_unit_rate() {
    let mut failures = Vec::new();
    let state = &*LONG_RUN;
    let nodes = 401;
    let mean_deviation = (0..nodes)
        .map(|i| {
            let t = 0.1 + 0.8 * i as f64 / (nodes - 1) as f64;
            (forward_with_input_derivative(&state.params, t).dlambda_dt - 1.0).abs()
        })
        .sum::<f64>()
        / nodes as f64;
    if mean_deviation > 0.15 {
        failures.push(format!(
            "mean |dlambda/dt - 1| over [0.1, 0.9] is {mean_deviation:.4}, want <= 0.15"
        ));
    }
    report(6, "schedule approaches unit rate", &failures);
}

#[test]
fn criterion_7_dominant_couplings_are_xy_and_yx() {
    let mut failures = Vec::new();
    let state = &*LONG_RUN;
    let basis = pauli_basis(2).unwrap();
    let nodes = 512;
    let mut mean_abs = vec![0.0f64; basis.len()];
    for i in 0..nodes {
        let t = i as f64 / (nodes - 1) as f64;
        let bundle = forward_with_input_derivative(&state.params, t);
        for (k, c) in bundle.c.iter().enumerate() {
            mean_abs[k] += c.abs() / nodes as f64;
        }
    }
    let mut order: Vec<usize> = (0..basis.len()).collect();
    order.sort_by(|&a, &b| mean_abs[b].partial_cmp(&mean_abs[a]).unwrap());
    let top: Vec<&str> = order[..2]
        .iter()
        .map(|&k| basis.labels()[k].as_str())
        .collect();
    if !(top.contains(&"XY") && top.contains(&"YX")) {
        let ranked: Vec<String> = order
            .iter()
            .take(4)
            .map(|&k| format!("{}={:.3e}", basis.labels()[k], mean_abs[k]))
            .collect();
        failures.push(format!(
            "largest mean couplings are {top:?}, want {{XY, YX}}; leaders: {}",
            ranked.join(" ")
        ));
    }
    report(7, "dominant couplings are XY and YX", &failures);
}

#[test]
fn criterion_8_eigensolver_reproduces_the_hf_spectrum() {
    let start = std::time::Instant::now();
    let mut failures = Vec::new();
    let p = builtin_h2(1.0).unwrap();
    let eigen = hermitian_eigensystem(&p.h_initial).unwrap();
    let expected = [-1.0661087, -0.5490812, -0.5490812, 0.00400595];
    for (got, want) in eigen.eigenvalues.iter().zip(expected) {
        if (got - want).abs() > 1e-9 {
            failures.push(format!("eigenvalue {got} differs from {want}"));
        }
    }
    // Residual invariants on random Hermitian matrices: H V = V diag(E) and
    // orthonormal columns.
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for dim in [2usize, 4, 8] {
        for _ in 0..10 {
            let m = random_hermitian(dim, &mut rng);
            let eigen = hermitian_eigensystem(&m).unwrap();
            let v = &eigen.eigenvectors;
            let mut lambda = ComplexMatrix::zeros(dim);
            for (i, &e) in eigen.eigenvalues.iter().enumerate() {
                lambda.set(i, i, Complex64::new(e, 0.0));
            }
            let residual = m
                .matmul(v)
                .unwrap()
                .sub(&v.matmul(&lambda).unwrap())
                .unwrap()
                .frobenius_norm_sq()
                .sqrt();
            let orthonormality = v
                .dagger()
                .matmul(v)
                .unwrap()
                .sub(&ComplexMatrix::identity(dim))
                .unwrap()
                .frobenius_norm_sq()
                .sqrt();
            if residual > 1e-10 * (1.0 + m.frobenius_norm_sq().sqrt()) {
                failures.push(format!("dim {dim}: eigen residual {residual:.3e}"));
            }
            if orthonormality > 1e-11 {
                failures.push(format!(
                    "dim {dim}: orthonormality defect {orthonormality:.3e}"
                ));
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 5.0 {
        failures.push(format!("took {elapsed:.1}s, budget 5s"));
    }
    report(8, "eigensolver reproduces the HF spectrum", &failures);
}

#[test]
fn criterion_9_exact_drive_beats_the_bare_ramp() {
    let start = std::time::Instant::now();
    let mut failures = Vec::new();
    let p = builtin_h2(2.5).unwrap();
    // The d=2.5 spec is degenerate exactly at lambda = 0, so the ramp runs
    // over [0.05, 1]; both protocols share the duration.
    let schedule = LinearSchedule {
        t_min: 0.0,
        t_max: 0.5,
        lambda_min: 0.05,
        lambda_max: 1.0,
    };
    let grid: Vec<f64> = (0..11).map(|i| 0.5 * i as f64 / 10.0).collect();
    let cd_protocol = ExactGaugeRamp {
        problem: &p,
        schedule,
        gap_tolerance: DEFAULT_GAP_TOLERANCE,
    };
    let bare = AdiabaticRamp {
        dim: p.dim(),
        schedule,
    };
    let cd = evolve_fidelity(&p, &cd_protocol, &grid, 5e-4).unwrap();
    let adiabatic = evolve_fidelity(&p, &bare, &grid, 5e-4).unwrap();
    let cd_final = *cd.fidelity.last().unwrap();
    let adiabatic_final = *adiabatic.fidelity.last().unwrap();
    if cd_final < adiabatic_final {
        failures.push(format!(
            "CD fidelity {cd_final:.6} fell below the bare ramp {adiabatic_final:.6}"
        ));
    }
    let cd_halved = evolve_fidelity(&p, &cd_protocol, &grid, 2.5e-4).unwrap();
    let adiabatic_halved = evolve_fidelity(&p, &bare, &grid, 2.5e-4).unwrap();
    let cd_shift = (cd_final - cd_halved.fidelity.last().unwrap()).abs();
    let adiabatic_shift = (adiabatic_final - adiabatic_halved.fidelity.last().unwrap()).abs();
    if cd_shift > 1e-8 {
        failures.push(format!(
            "CD fidelity moved {cd_shift:.3e} under step halving"
        ));
    }
    if adiabatic_shift > 1e-8 {
        failures.push(format!(
            "bare-ramp fidelity moved {adiabatic_shift:.3e} under step halving"
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 60.0 {
        failures.push(format!("took {elapsed:.1}s, budget 60s"));
    }
    report(9, "exact drive beats the bare ramp", &failures);
}
