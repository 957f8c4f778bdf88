//! Full-batch Adam training loop with logging, checkpointing, and
//! deterministic replay.
//!
//! The run follows a fixed recipe: sample the time domain once (two endpoint
//! points at `t = 0` and `t = 1` plus a low-discrepancy interior batch),
//! initialize the network from the seed, then iterate forward passes, the
//! fused loss cotangents, the reverse pass, and an Adam update. Nothing is
//! resampled, so `(seed, config, problem)` fully determines every parameter
//! and every logged loss value, bit for bit.
//!
//! The interior batch is processed in fixed-size chunks. Chunks may run on a
//! thread pool, but each chunk's result is computed independently and the
//! partial gradients are combined in chunk order, so the numbers are
//! identical no matter how many threads participate.
//!
//! Checkpoints extend the network's JSON format with the two Adam moment
//! accumulators, which is exactly the state a resumed run needs to continue
//! bit-identically. Wall-clock seconds and the loss history are diagnostics,
//! not state: a resumed run restarts both.

use crate::net::{
    backward, checkpoint_from_value, checkpoint_to_value, forward_traced, glorot_init,
    output_width, ForwardTrace, MlpParameters, NetError, ParamGrad,
};
use crate::physics::{CdLoss, CdScratch, InteriorScales, LossBreakdown, LossWeights};
use crate::problem::ProblemSpec;
use crate::sampling::sobol_interior;
use rayon::prelude::*;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

/// Protocol time domain; the schedule maps it onto `[0, 1]` itself.
const T_MIN: f64 = 0.0;
const T_MAX: f64 = 1.0;

/// Interior points per independently-evaluated chunk. Fixed so results do
/// not depend on the thread count.
const CHUNK: usize = 64;

/// Smoothing window of the tracked total-loss average.
const EMA_WINDOW: f64 = 200.0;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite gradient ({value}) at epoch {epoch}, coordinate {coordinate}")]
    Numerics {
        epoch: u64,
        coordinate: usize,
        value: f64,
    },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint schema version {0} is not supported")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<NetError> for TrainError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Config(m) => TrainError::Config(m),
            NetError::Format(m) => TrainError::Format(m),
            NetError::UnsupportedVersion(v) => TrainError::UnsupportedVersion(v),
        }
    }
}

/// Everything a run needs beyond the problem itself.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: u64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Interior batch size as a power of two.
    pub log2_interior: u32,
    pub weights: LossWeights,
    pub seed: u64,
    pub layer_sizes: Vec<usize>,
    pub log_every: u64,
    pub checkpoint_every: u64,
}

impl TrainConfig {
    /// Short run tuned to converge on one CPU core in minutes.
    pub fn desk(n_qubits: usize, seed: u64) -> Self {
        Self {
            epochs: 50_000,
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            log2_interior: 9,
            weights: LossWeights::default(),
            seed,
            layer_sizes: crate::net::default_layer_sizes(n_qubits),
            log_every: 100,
            checkpoint_every: 10_000,
        }
    }

    /// The full-scale settings: 500k epochs at learning rate 1e-5 with a
    /// 2^11-point interior batch.
    pub fn paper(n_qubits: usize, seed: u64) -> Self {
        Self {
            epochs: 500_000,
            learning_rate: 1e-5,
            log2_interior: 11,
            log_every: 500,
            checkpoint_every: 25_000,
            ..Self::desk(n_qubits, seed)
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        for (name, beta) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(0.0 < beta && beta < 1.0) {
                return Err(TrainError::Config(format!(
                    "adam {name} must lie strictly between 0 and 1, got {beta}"
                )));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(TrainError::Config(format!(
                "adam epsilon must be positive, got {}",
                self.adam_epsilon
            )));
        }
        if self.log_every == 0 || self.checkpoint_every == 0 {
            return Err(TrainError::Config(
                "log_every and checkpoint_every must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One logged loss measurement.
#[derive(Debug, Clone)]
pub struct LossSample {
    pub epoch: u64,
    pub breakdown: LossBreakdown,
    /// Exponentially smoothed total loss, updated every epoch.
    pub ema_total: f64,
    /// Wall-clock seconds since the run (not the checkpoint) started.
    pub seconds: f64,
}

/// Parameters plus optimizer accumulators plus diagnostics.
#[derive(Debug, Clone)]
pub struct TrainingState {
    pub params: MlpParameters,
    pub adam_m: ParamGrad,
    pub adam_v: ParamGrad,
    /// Completed optimizer steps.
    pub epoch: u64,
    pub loss_history: Vec<LossSample>,
    pub wall_clock_seconds: f64,
    /// Smoothed total loss; NaN until the first epoch of this process.
    pub ema_total: f64,
}

impl TrainingState {
    fn fresh(params: MlpParameters) -> Self {
        let adam_m = ParamGrad::zeros_like(&params);
        let adam_v = ParamGrad::zeros_like(&params);
        Self {
            params,
            adam_m,
            adam_v,
            epoch: 0,
            loss_history: Vec::new(),
            wall_clock_seconds: 0.0,
            ema_total: f64::NAN,
        }
    }
}

/// Receiver for in-flight training output; all methods default to no-ops.
pub trait ProgressSink {
    fn on_sample(&mut self, _sample: &LossSample) -> std::io::Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _state: &TrainingState) -> std::io::Result<()> {
        Ok(())
    }
}

/// Sink that discards everything.
pub struct NullSink;

impl ProgressSink for NullSink {}

/// One Adam update with bias correction. The gradient is validated in full
/// before anything is touched, so a non-finite component leaves the state
/// exactly as it was.
pub fn adam_step(
    state: &mut TrainingState,
    gradient: &ParamGrad,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    let epoch = state.epoch + 1;
    for (coordinate, value) in gradient.iter().enumerate() {
        if !value.is_finite() {
            return Err(TrainError::Numerics {
                epoch,
                coordinate,
                value,
            });
        }
    }
    let b1 = config.adam_beta1;
    let b2 = config.adam_beta2;
    let t = epoch.min(i32::MAX as u64) as i32;
    let m_correction = 1.0 / (1.0 - b1.powi(t));
    let v_correction = 1.0 / (1.0 - b2.powi(t));
    let lr = config.learning_rate;
    let eps = config.adam_epsilon;
    let update = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] * m_correction;
            let v_hat = v[i] * v_correction;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    };
    for layer in 0..state.params.weights.len() {
        update(
            &mut state.params.weights[layer],
            &mut state.adam_m.weights[layer],
            &mut state.adam_v.weights[layer],
            &gradient.weights[layer],
        );
        update(
            &mut state.params.biases[layer],
            &mut state.adam_m.biases[layer],
            &mut state.adam_v.biases[layer],
            &gradient.biases[layer],
        );
    }
    state.epoch = epoch;
    Ok(())
}

/// Gradient and raw loss sums of one interior chunk.
struct ChunkOutcome {
    grad: ParamGrad,
    action: f64,
    adiabaticity: f64,
    coupling: f64,
    hermiticity: f64,
}

fn interior_chunk(
    params: &MlpParameters,
    cd: &CdLoss,
    scales: InteriorScales,
    chunk: &[f64],
) -> ChunkOutcome {
    let mut grad = ParamGrad::zeros_like(params);
    let mut trace = ForwardTrace::new(&params.layer_sizes);
    let mut scratch = CdScratch::new(cd.dim());
    let width = *params.layer_sizes.last().expect("validated sizes");
    let mut out_bar = vec![0.0f64; width];
    let mut outcome = ChunkOutcome {
        grad: ParamGrad {
            weights: Vec::new(),
            biases: Vec::new(),
        },
        action: 0.0,
        adiabaticity: 0.0,
        coupling: 0.0,
        hermiticity: 0.0,
    };
    for &t in chunk {
        forward_traced(params, t, &mut trace);
        out_bar.fill(0.0);
        let mut rate_bar = 0.0;
        let values = cd.interior_point_fused(
            &trace.out,
            trace.dlambda_dt(),
            scales,
            &mut scratch,
            &mut out_bar,
            &mut rate_bar,
        );
        backward(params, &trace, &out_bar, rate_bar, &mut grad);
        outcome.action += values.action;
        outcome.adiabaticity += values.adiabaticity;
        outcome.coupling += values.coupling;
        outcome.hermiticity += values.hermiticity;
    }
    outcome.grad = grad;
    outcome
}

fn run_loop(
    p: &ProblemSpec,
    config: &TrainConfig,
    mut state: TrainingState,
    sink: &mut dyn ProgressSink,
) -> Result<TrainingState, TrainError> {
    let batch = sobol_interior(config.log2_interior, T_MIN, T_MAX)
        .map_err(|e| TrainError::Config(e.to_string()))?;
    let interior = batch.times;
    let n_interior = interior.len() as f64;
    let chunks: Vec<&[f64]> = interior.chunks(CHUNK).collect();
    let cd = CdLoss::new(p, config.weights);
    let scales = InteriorScales {
        action: config.weights.action / n_interior,
        adiabaticity: config.weights.adiabaticity / n_interior,
        coupling: config.weights.coupling / n_interior,
    };
    let width = *config.layer_sizes.last().expect("validated sizes");
    let mut grad = ParamGrad::zeros_like(&state.params);
    let mut trace = ForwardTrace::new(&config.layer_sizes);
    let mut out_bar = vec![0.0f64; width];
    let ema_alpha = 2.0 / (EMA_WINDOW + 1.0);
    let base_seconds = state.wall_clock_seconds;
    let start = Instant::now();

    for step in state.epoch..config.epochs {
        grad.fill_zero();
        let mut endpoint_penalties = [0.0f64; 2];
        for (slot, (t, fc)) in [(T_MIN, false), (T_MAX, true)].iter().enumerate() {
            forward_traced(&state.params, *t, &mut trace);
            out_bar.fill(0.0);
            let mut rate_bar = 0.0;
            let weight = if *fc {
                config.weights.fc
            } else {
                config.weights.ic
            };
            endpoint_penalties[slot] = cd.endpoint_point_fused(
                &trace.out,
                trace.dlambda_dt(),
                *fc,
                weight,
                &mut out_bar,
                &mut rate_bar,
            );
            backward(&state.params, &trace, &out_bar, rate_bar, &mut grad);
        }
        let outcomes: Vec<ChunkOutcome> = {
            let params = &state.params;
            chunks
                .par_iter()
                .map(|chunk| interior_chunk(params, &cd, scales, chunk))
                .collect()
        };
        let mut sums = (0.0, 0.0, 0.0, 0.0);
        for outcome in &outcomes {
            grad.axpy(1.0, &outcome.grad);
            sums.0 += outcome.action;
            sums.1 += outcome.adiabaticity;
            sums.2 += outcome.coupling;
            sums.3 += outcome.hermiticity;
        }
        let l_ic = config.weights.ic * endpoint_penalties[0];
        let l_fc = config.weights.fc * endpoint_penalties[1];
        let l_action = scales.action * sums.0;
        let l_adiabaticity = scales.adiabaticity * sums.1;
        let l_coupling = scales.coupling * sums.2;
        let breakdown = LossBreakdown {
            l_ic,
            l_fc,
            l_action,
            l_adiabaticity,
            l_coupling,
            l_total: l_ic + l_fc + l_action + l_adiabaticity + l_coupling,
            hermiticity_diag: sums.3 / n_interior,
        };

        if let Err(e) = adam_step(&mut state, &grad, config) {
            // The state is untouched by a failed step; hand the last good
            // version to the sink before aborting.
            sink.on_checkpoint(&state)?;
            return Err(e);
        }

        state.ema_total = if state.ema_total.is_finite() {
            state.ema_total + ema_alpha * (breakdown.l_total - state.ema_total)
        } else {
            breakdown.l_total
        };
        state.wall_clock_seconds = base_seconds + start.elapsed().as_secs_f64();
        let epoch = step + 1;
        if epoch % config.log_every == 0 || epoch == config.epochs {
            let sample = LossSample {
                epoch,
                breakdown,
                ema_total: state.ema_total,
                seconds: state.wall_clock_seconds,
            };
            state.loss_history.push(sample.clone());
            sink.on_sample(&sample)?;
        }
        if epoch % config.checkpoint_every == 0 {
            sink.on_checkpoint(&state)?;
        }
    }
    Ok(state)
}

/// Fresh training run from a Glorot initialization.
pub fn train(
    p: &ProblemSpec,
    config: &TrainConfig,
    sink: &mut dyn ProgressSink,
) -> Result<TrainingState, TrainError> {
    config.validate()?;
    let width = *config
        .layer_sizes
        .last()
        .ok_or_else(|| TrainError::Config("layer_sizes must not be empty".into()))?;
    if width != output_width(p.n_qubits) {
        return Err(TrainError::Config(format!(
            "output width {width} does not match the {} slots needed for {} qubits",
            output_width(p.n_qubits),
            p.n_qubits
        )));
    }
    let params = glorot_init(&config.layer_sizes, config.seed)?;
    run_loop(p, config, TrainingState::fresh(params), sink)
}

/// Continues a run from a loaded state until `config.epochs` total steps.
/// With the same problem and config this reproduces the uninterrupted run's
/// parameters and moments exactly.
pub fn resume(
    p: &ProblemSpec,
    config: &TrainConfig,
    state: TrainingState,
    sink: &mut dyn ProgressSink,
) -> Result<TrainingState, TrainError> {
    config.validate()?;
    if state.params.layer_sizes != config.layer_sizes {
        return Err(TrainError::Config(format!(
            "checkpoint layers {:?} do not match configured layers {:?}",
            state.params.layer_sizes, config.layer_sizes
        )));
    }
    if state.params.state_dim() != p.dim() {
        return Err(TrainError::Config(format!(
            "checkpoint acts on dimension {} but the problem has dimension {}",
            state.params.state_dim(),
            p.dim()
        )));
    }
    if state.epoch >= config.epochs {
        return Err(TrainError::Config(format!(
            "checkpoint is already at epoch {} of {} requested",
            state.epoch, config.epochs
        )));
    }
    run_loop(p, config, state, sink)
}

fn moment_shapes_match(params: &MlpParameters, moment: &ParamGrad) -> bool {
    moment.weights.len() == params.weights.len()
        && moment.biases.len() == params.biases.len()
        && moment
            .weights
            .iter()
            .zip(&params.weights)
            .all(|(a, b)| a.len() == b.len())
        && moment
            .biases
            .iter()
            .zip(&params.biases)
            .all(|(a, b)| a.len() == b.len())
}

/// Writes the network checkpoint extended with the Adam moments.
pub fn save_checkpoint(state: &TrainingState, path: &Path) -> Result<(), TrainError> {
    let mut value = checkpoint_to_value(&state.params, state.epoch);
    let object = value
        .as_object_mut()
        .expect("checkpoint serializes to an object");
    object.insert(
        "adam_m".into(),
        serde_json::to_value(&state.adam_m).expect("moments serialize"),
    );
    object.insert(
        "adam_v".into(),
        serde_json::to_value(&state.adam_v).expect("moments serialize"),
    );
    let mut text = serde_json::to_string_pretty(&value).expect("checkpoint serializes");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads a training checkpoint back into a resumable state. History,
/// wall-clock time, and the smoothed loss restart from zero.
pub fn load_checkpoint(path: &Path) -> Result<TrainingState, TrainError> {
    let text = std::fs::read_to_string(path)?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| TrainError::Format(format!("checkpoint is not valid JSON: {e}")))?;
    let object = value
        .as_object_mut()
        .ok_or_else(|| TrainError::Format("checkpoint must be a JSON object".into()))?;
    let take_moment = |object: &mut serde_json::Map<String, serde_json::Value>,
                       key: &str|
     -> Result<ParamGrad, TrainError> {
        let raw = object.remove(key).ok_or_else(|| {
            TrainError::Format(format!("missing {key}: not a training checkpoint"))
        })?;
        serde_json::from_value(raw).map_err(|e| TrainError::Format(format!("bad {key}: {e}")))
    };
    let adam_m = take_moment(object, "adam_m")?;
    let adam_v = take_moment(object, "adam_v")?;
    let (params, epoch) = checkpoint_from_value(value)?;
    if !moment_shapes_match(&params, &adam_m) || !moment_shapes_match(&params, &adam_v) {
        return Err(TrainError::Format(
            "adam moment shapes do not match the parameters".into(),
        ));
    }
    Ok(TrainingState {
        adam_m,
        adam_v,
        epoch,
        loss_history: Vec::new(),
        wall_clock_seconds: 0.0,
        ema_total: f64::NAN,
        params,
    })
}
