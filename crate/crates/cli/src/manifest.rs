//! Run manifest: what was executed, on what input, with which settings.

use cdpinn_core::train::TrainConfig;
use serde::Serialize;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Serialize)]
pub struct RunManifest {
    /// Argument vector as invoked.
    pub command_line: Vec<String>,
    pub tool_version: String,
    pub problem_label: String,
    /// Content hash of the problem actually used.
    pub problem_digest: String,
    pub seed: u64,
    pub config: TrainConfig,
    /// Unix seconds when the run was set up, before training began.
    pub started_unix_seconds: u64,
}

impl RunManifest {
    pub fn new(problem_label: &str, problem_digest: &str, config: &TrainConfig) -> Self {
        Self {
            command_line: std::env::args().collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            problem_label: problem_label.to_string(),
            problem_digest: problem_digest.to_string(),
            seed: config.seed,
            config: config.clone(),
            started_unix_seconds: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text)
    }
}
