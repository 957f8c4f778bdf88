//! The `eval` subcommand: everything the trained network encodes, tabulated
//! over a uniform time grid.

use crate::table::{cell, Table};
use crate::{problems, CliError, EvalArgs};
use cdpinn_core::linalg::{pauli_basis, pauli_reconstruct, ComplexMatrix};
use cdpinn_core::net::{forward_with_input_derivative, load_checkpoint, output_width};
use cdpinn_core::oracle::eigen_tracks;
use cdpinn_core::physics::build_total_h;
use num_complex::Complex64;
use serde_json::json;
use std::io::Write;

/// Row-major `[[re, im], ...]` nesting for JSON output.
fn matrix_json(m: &ComplexMatrix) -> serde_json::Value {
    let dim = m.dim();
    let rows: Vec<Vec<[f64; 2]>> = (0..dim)
        .map(|i| (0..dim).map(|j| [m.get(i, j).re, m.get(i, j).im]).collect())
        .collect();
    json!(rows)
}

pub fn run(args: EvalArgs) -> Result<(), CliError> {
    let problem = problems::resolve(&args.problem.problem)?;
    let (params, _epoch) = load_checkpoint(&args.checkpoint)?;
    let width = *params.layer_sizes.last().expect("validated checkpoint");
    if width != output_width(problem.n_qubits) {
        return Err(CliError::Config(format!(
            "checkpoint emits {width} outputs but {} qubits need {}",
            problem.n_qubits,
            output_width(problem.n_qubits)
        )));
    }
    if args.grid < 2 {
        return Err(CliError::Config(format!(
            "grid needs at least 2 points, got {}",
            args.grid
        )));
    }
    std::fs::create_dir_all(&args.out)?;

    let basis = pauli_basis(problem.n_qubits).map_err(|e| CliError::Config(e.to_string()))?;
    let times: Vec<f64> = (0..args.grid)
        .map(|i| i as f64 / (args.grid - 1) as f64)
        .collect();

    let mut schedule = Table::create(
        &args.out.join("schedule.csv"),
        &["t", "lambda", "dlambda_dt"],
    )?;
    let coefficient_header: Vec<&str> = std::iter::once("t")
        .chain(basis.labels().iter().map(String::as_str))
        .collect();
    let mut coefficients = Table::create(&args.out.join("coefficients.csv"), &coefficient_header)?;
    let operators = std::fs::File::create(args.out.join("operators.jsonl"))?;
    let mut operators = std::io::BufWriter::new(operators);
    let mut mean_abs = vec![0.0f64; basis.len()];

    for &t in &times {
        let bundle = forward_with_input_derivative(&params, t);
        schedule.row(&[cell(t), cell(bundle.lambda), cell(bundle.dlambda_dt)])?;
        let mut row = Vec::with_capacity(1 + basis.len());
        row.push(cell(t));
        for (k, c) in bundle.c.iter().enumerate() {
            row.push(cell(*c));
            mean_abs[k] += c.abs() / times.len() as f64;
        }
        coefficients.row(&row)?;

        let h = build_total_h(&problem, &bundle);
        let c_complex: Vec<Complex64> = bundle.c.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let a_prime =
            pauli_reconstruct(&c_complex, &basis).map_err(|e| CliError::Config(e.to_string()))?;
        let line = json!({
            "t": t,
            "h": matrix_json(&h),
            "a_cd_prime": matrix_json(&a_prime),
        });
        writeln!(operators, "{line}")?;
    }
    schedule.finish()?;
    coefficients.finish()?;
    operators.flush()?;

    let tracks = eigen_tracks(&problem, &params, &times)?;
    let dim = problem.dim();
    let mut energy_header: Vec<String> = vec!["t".into()];
    energy_header.extend((0..dim).map(|n| format!("cd_e{n}")));
    energy_header.extend((0..dim).map(|n| format!("adiabatic_e{n}")));
    let header_refs: Vec<&str> = energy_header.iter().map(String::as_str).collect();
    let mut energies = Table::create(&args.out.join("energies.csv"), &header_refs)?;
    for (i, &t) in times.iter().enumerate() {
        let mut row = vec![cell(t)];
        row.extend(tracks.cd[i].iter().map(|&e| cell(e)));
        row.extend(tracks.adiabatic[i].iter().map(|&e| cell(e)));
        energies.row(&row)?;
    }
    energies.finish()?;

    let mut order: Vec<usize> = (0..basis.len()).collect();
    order.sort_by(|&a, &b| {
        mean_abs[b]
            .partial_cmp(&mean_abs[a])
            .expect("means are finite")
    });
    let ranking: Vec<serde_json::Value> = order
        .iter()
        .map(|&k| {
            json!({
                "label": basis.labels()[k],
                "mean_abs_coefficient": mean_abs[k],
            })
        })
        .collect();
    let mut text =
        serde_json::to_string_pretty(&json!({ "ranking": ranking })).expect("ranking serializes");
    text.push('\n');
    std::fs::write(args.out.join("ranking.json"), text)?;
    Ok(())
}
