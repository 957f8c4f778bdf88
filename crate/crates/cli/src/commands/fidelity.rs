//! The `fidelity` subcommand: Schrodinger evolution under the learned
//! protocol next to the bare schedule with the drive switched off.

use crate::table::{cell, Table};
use crate::{problems, CliError, FidelityArgs};
use cdpinn_core::linalg::ComplexMatrix;
use cdpinn_core::net::{load_checkpoint, output_width, MlpParameters};
use cdpinn_core::oracle::{evolve_fidelity, ModelProtocol, OracleError, Protocol, ProtocolPoint};

/// The learned schedule with the counterdiabatic drive removed: the same
/// lambda path, evolved adiabatically.
struct BareSchedule<'a> {
    inner: ModelProtocol<'a>,
    dim: usize,
}

impl Protocol for BareSchedule<'_> {
    fn sample(&self, t: f64) -> Result<ProtocolPoint, OracleError> {
        let point = self.inner.sample(t)?;
        Ok(ProtocolPoint {
            lambda: point.lambda,
            dlambda_dt: point.dlambda_dt,
            a_cd: ComplexMatrix::zeros(self.dim),
        })
    }
}

pub fn run(args: FidelityArgs) -> Result<(), CliError> {
    let problem = problems::resolve(&args.problem.problem)?;
    let (params, _epoch): (MlpParameters, u64) = load_checkpoint(&args.checkpoint)?;
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
            "grid needs at least 2 nodes, got {}",
            args.grid
        )));
    }
    std::fs::create_dir_all(&args.out)?;

    let times: Vec<f64> = (0..args.grid)
        .map(|i| i as f64 / (args.grid - 1) as f64)
        .collect();
    let cd_protocol = ModelProtocol::new(&params)?;
    let cd = evolve_fidelity(&problem, &cd_protocol, &times, args.dt)?;
    let bare = BareSchedule {
        inner: ModelProtocol::new(&params)?,
        dim: problem.dim(),
    };
    let adiabatic = evolve_fidelity(&problem, &bare, &times, args.dt)?;

    let mut table = Table::create(
        &args.out.join("fidelity.csv"),
        &[
            "t",
            "cd_fidelity",
            "adiabatic_fidelity",
            "cd_norm_drift",
            "adiabatic_norm_drift",
        ],
    )?;
    for (i, &t) in times.iter().enumerate() {
        table.row(&[
            cell(t),
            cell(cd.fidelity[i]),
            cell(adiabatic.fidelity[i]),
            cell(cd.norm_drift[i]),
            cell(adiabatic.norm_drift[i]),
        ])?;
    }
    table.finish()?;
    Ok(())
}
