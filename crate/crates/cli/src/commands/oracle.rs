//! The `oracle` subcommand: the exact gauge potential and the
//! nested-commutator baseline on a lambda grid, with optional columns for a
//! trained model.

use crate::table::{cell, Table};
use crate::{problems, CliError, OracleArgs};
use cdpinn_core::linalg::{hermitian_eigensystem, pauli_basis, pauli_reconstruct, ComplexMatrix};
use cdpinn_core::net::{
    forward, forward_with_input_derivative, load_checkpoint, output_width, MlpParameters,
};
use cdpinn_core::oracle::{
    action_value, el_residual_value, exact_gauge_potential, nc_gauge_potential, OracleError,
    DEFAULT_GAP_TOLERANCE,
};
use cdpinn_core::physics::build_h_ad;
use cdpinn_core::problem::ProblemSpec;

/// Finds the time at which the learned schedule crosses `lambda`, if the
/// schedule brackets it. The trained schedule is monotone in practice, and
/// bisection on a continuous function needs only the bracket.
fn invert_schedule(params: &MlpParameters, lambda: f64) -> Option<f64> {
    let value = |t: f64| forward(params, t).lambda - lambda;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let (f_lo, f_hi) = (value(lo), value(hi));
    if f_lo > 0.0 || f_hi < 0.0 {
        return None;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if value(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Frobenius distance between two drives restricted to the off-diagonal
/// part of the adiabatic eigenbasis, where the diagonal is pure gauge.
fn offdiag_distance(
    p: &ProblemSpec,
    lambda: f64,
    a: &ComplexMatrix,
    b: &ComplexMatrix,
) -> Result<f64, OracleError> {
    let eigen = hermitian_eigensystem(&build_h_ad(p, lambda))?;
    let v = &eigen.eigenvectors;
    let difference = a.sub(b)?;
    let rotated = v.dagger().matmul(&difference)?.matmul(v)?;
    let mut sum = 0.0;
    for i in 0..rotated.dim() {
        for j in 0..rotated.dim() {
            if i != j {
                sum += rotated.get(i, j).norm_sqr();
            }
        }
    }
    Ok(sum.sqrt())
}

pub fn run(args: OracleArgs) -> Result<(), CliError> {
    let problem = problems::resolve(&args.problem.problem)?;
    if args.lambda_grid < 2 {
        return Err(CliError::Config(format!(
            "lambda grid needs at least 2 points, got {}",
            args.lambda_grid
        )));
    }
    if args.nc_order == 0 {
        return Err(CliError::Config(
            "nc order must be at least 1; order 0 has no expansion terms".into(),
        ));
    }
    let model = match &args.checkpoint {
        Some(path) => {
            let (params, _epoch) = load_checkpoint(path)?;
            let width = *params.layer_sizes.last().expect("validated checkpoint");
            if width != output_width(problem.n_qubits) {
                return Err(CliError::Config(format!(
                    "checkpoint emits {width} outputs but {} qubits need {}",
                    problem.n_qubits,
                    output_width(problem.n_qubits)
                )));
            }
            Some(params)
        }
        None => None,
    };
    std::fs::create_dir_all(&args.out)?;

    let basis = pauli_basis(problem.n_qubits).map_err(|e| CliError::Config(e.to_string()))?;
    let mut header = vec![
        "lambda",
        "status",
        "min_gap",
        "action_zero",
        "el_zero",
        "action_nc",
        "el_nc",
        "action_exact",
        "el_exact",
    ];
    if model.is_some() {
        header.extend(["action_model", "el_model", "model_offdiag_distance"]);
    }
    let mut table = Table::create(&args.out.join("gauge.csv"), &header)?;

    let zero = ComplexMatrix::zeros(problem.dim());
    let empty = String::new();
    for i in 0..args.lambda_grid {
        let lambda = i as f64 / (args.lambda_grid - 1) as f64;
        let mut row = vec![cell(lambda)];

        let action_zero = action_value(&problem, lambda, &zero);
        let el_zero = el_residual_value(&problem, lambda, &zero);
        let nc = nc_gauge_potential(&problem, lambda, args.nc_order);
        let exact = exact_gauge_potential(&problem, lambda, DEFAULT_GAP_TOLERANCE);

        let (status, min_gap, exact_cells, a_exact) = match exact {
            Ok(report) => (
                "ok",
                cell(report.min_coupled_gap),
                [cell(report.action_value), cell(report.el_residual)],
                Some(report.a_exact),
            ),
            Err(OracleError::DegenerateSpectrum { gap, .. }) => (
                "degenerate",
                cell(gap),
                [empty.clone(), empty.clone()],
                None,
            ),
            Err(e) => return Err(e.into()),
        };
        row.push(status.to_string());
        row.push(min_gap);
        row.push(cell(action_zero));
        row.push(cell(el_zero));
        match &nc {
            Ok(expansion) => {
                row.push(cell(action_value(&problem, lambda, &expansion.a_nc)));
                row.push(cell(el_residual_value(&problem, lambda, &expansion.a_nc)));
            }
            Err(_) => {
                row.push(empty.clone());
                row.push(empty.clone());
            }
        }
        row.extend(exact_cells);

        if let Some(params) = &model {
            match invert_schedule(params, lambda) {
                Some(t) => {
                    let bundle = forward_with_input_derivative(params, t);
                    let c: Vec<num_complex::Complex64> = bundle
                        .c
                        .iter()
                        .map(|&x| num_complex::Complex64::new(x, 0.0))
                        .collect();
                    let a_prime = pauli_reconstruct(&c, &basis)
                        .map_err(|e| CliError::Config(e.to_string()))?;
                    row.push(cell(action_value(&problem, lambda, &a_prime)));
                    row.push(cell(el_residual_value(&problem, lambda, &a_prime)));
                    match &a_exact {
                        Some(a) => row.push(cell(offdiag_distance(&problem, lambda, &a_prime, a)?)),
                        None => row.push(empty.clone()),
                    }
                }
                None => {
                    row.push(empty.clone());
                    row.push(empty.clone());
                    row.push(empty.clone());
                }
            }
        }
        table.row(&row)?;
    }
    table.finish()?;
    Ok(())
}
