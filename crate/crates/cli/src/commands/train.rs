//! The `train` subcommand: fit a protocol network and leave a complete
//! artifact trail (manifest, loss log, checkpoints, summary).

use crate::manifest::RunManifest;
use crate::table::cell;
use crate::{problems, CliError, TrainArgs};
use cdpinn_core::train::{
    save_checkpoint, train, LossSample, ProgressSink, TrainConfig, TrainError, TrainingState,
};
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum Profile {
    /// 50k epochs, learning rate 1e-4, 512 interior points.
    Desk,
    /// 500k epochs, learning rate 1e-5, 2048 interior points.
    Paper,
}

pub const LOSS_HEADER: [&str; 9] = [
    "epoch",
    "l_ic",
    "l_fc",
    "l_action",
    "l_adiabaticity",
    "l_coupling",
    "l_total",
    "hermiticity_diag",
    "seconds",
];

/// Streams loss rows to `losses.csv` and keeps `checkpoint.json` current.
struct RunSink {
    csv: std::io::BufWriter<std::fs::File>,
    checkpoint_path: PathBuf,
}

impl RunSink {
    fn create(out: &Path) -> std::io::Result<Self> {
        let file = std::fs::File::create(out.join("losses.csv"))?;
        let mut csv = std::io::BufWriter::new(file);
        writeln!(csv, "{}", LOSS_HEADER.join(","))?;
        Ok(Self {
            csv,
            checkpoint_path: out.join("checkpoint.json"),
        })
    }
}

impl ProgressSink for RunSink {
    fn on_sample(&mut self, sample: &LossSample) -> std::io::Result<()> {
        let b = &sample.breakdown;
        writeln!(
            self.csv,
            "{},{},{},{},{},{},{},{},{}",
            sample.epoch,
            cell(b.l_ic),
            cell(b.l_fc),
            cell(b.l_action),
            cell(b.l_adiabaticity),
            cell(b.l_coupling),
            cell(b.l_total),
            cell(b.hermiticity_diag),
            cell(sample.seconds),
        )?;
        self.csv.flush()
    }

    fn on_checkpoint(&mut self, state: &TrainingState) -> std::io::Result<()> {
        save_checkpoint(state, &self.checkpoint_path)
            .map_err(|e| std::io::Error::other(e.to_string()))
    }
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let problem = problems::resolve(&args.problem.problem)?;
    let mut config = match args.profile {
        Profile::Desk => TrainConfig::desk(problem.n_qubits, args.seed),
        Profile::Paper => TrainConfig::paper(problem.n_qubits, args.seed),
    };
    if let Some(epochs) = args.epochs {
        config.epochs = epochs;
    }
    if let Some(lr) = args.lr {
        config.learning_rate = lr;
    }

    std::fs::create_dir_all(&args.out)?;
    let digest = problems::digest(&problem);
    RunManifest::new(&problem.label, &digest, &config).write(&args.out.join("manifest.json"))?;

    let mut sink = RunSink::create(&args.out)?;
    let state = match train(&problem, &config, &mut sink) {
        Ok(state) => state,
        Err(e @ TrainError::Numerics { .. }) => {
            eprintln!(
                "last checkpoint: {}",
                args.out.join("checkpoint.json").display()
            );
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    save_checkpoint(&state, &args.out.join("checkpoint.json"))
        .map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;

    let final_sample = state
        .loss_history
        .last()
        .expect("a finished run logged its final epoch");
    let summary = json!({
        "epoch": state.epoch,
        "wall_clock_seconds": state.wall_clock_seconds,
        "loss": final_sample.breakdown,
        "checkpoint": "checkpoint.json",
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    std::fs::write(args.out.join("summary.json"), text)?;
    Ok(())
}
