//! The protocol network and its derivatives.
//!
//! A single scalar input, physical time, passes through tanh hidden layers to
//! an output layer read in three blocks: slot 0 goes through a sigmoid and is
//! the schedule value `lambda`, the next `2 * dim^2` identity slots are the
//! interleaved real and imaginary parts of the counterdiabatic matrix in
//! row-major order, and the final `dim^2` identity slots are the Pauli
//! coefficients of its realizable projection.
//!
//! Two derivative mechanisms live here and compose with each other:
//!
//! * a forward tangent pass carries `d/dt` through the layers exactly, which
//!   is how `dlambda/dt` enters the losses as a network output rather than a
//!   finite difference;
//! * a reverse pass propagates cotangents of the outputs *and* of the time
//!   derivative back onto weights and biases, using the second derivatives
//!   of the activations where tangent and cotangent interact.
//!
//! [`loss_gradient`] glues the reverse pass to the scalar tape from
//! [`crate::autodiff`]: the caller supplies any loss written over network
//! outputs, the tape differentiates it to per-output cotangents, and the
//! reverse pass finishes the chain down to the parameters.

use crate::autodiff::{Cx, Scalar, Tape};
use crate::linalg::{Complex64, ComplexMatrix};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const NET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint schema_version {0} is not supported (expected {NET_SCHEMA_VERSION})")]
    UnsupportedVersion(u32),
}

/// Width the output layer must have for a register of `2^n_qubits` states.
pub fn output_width(n_qubits: usize) -> usize {
    let dim = 1usize << n_qubits;
    1 + 3 * dim * dim
}

/// Output slot holding the real part of matrix entry `(i, j)`.
#[inline]
pub fn slot_a_re(dim: usize, i: usize, j: usize) -> usize {
    1 + 2 * (i * dim + j)
}

/// Output slot holding the imaginary part of matrix entry `(i, j)`.
#[inline]
pub fn slot_a_im(dim: usize, i: usize, j: usize) -> usize {
    2 + 2 * (i * dim + j)
}

/// Output slot holding Pauli coefficient `k`.
#[inline]
pub fn slot_c(dim: usize, k: usize) -> usize {
    1 + 2 * dim * dim + k
}

/// The architecture used throughout: six tanh layers of thirty neurons
/// between the time input and the protocol outputs.
pub fn default_layer_sizes(n_qubits: usize) -> Vec<usize> {
    let mut sizes = vec![1usize];
    sizes.extend([30usize; 6]);
    sizes.push(output_width(n_qubits));
    sizes
}

fn dim_for_width(width: usize) -> Option<usize> {
    // width = 1 + 3 dim^2 with dim a power of two.
    let rest = width.checked_sub(1)?;
    if rest % 3 != 0 {
        return None;
    }
    let sq = rest / 3;
    let dim = (sq as f64).sqrt().round() as usize;
    (dim * dim == sq && dim.is_power_of_two()).then_some(dim)
}

/// Dense network parameters. Layer `k` maps `layer_sizes[k]` activations to
/// `layer_sizes[k + 1]`; its weight matrix is stored flat in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParameters {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub seed: u64,
}

impl MlpParameters {
    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Hilbert space dimension implied by the output width.
    pub fn state_dim(&self) -> usize {
        dim_for_width(*self.layer_sizes.last().expect("validated sizes"))
            .expect("validated output width")
    }

    pub fn coordinate_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }
}

fn validate_layer_sizes(layer_sizes: &[usize]) -> Result<usize, NetError> {
    if layer_sizes.len() < 2 {
        return Err(NetError::Config(format!(
            "need at least an input and an output layer, got {layer_sizes:?}"
        )));
    }
    if layer_sizes[0] != 1 {
        return Err(NetError::Config(format!(
            "the input layer must have width 1, got {}",
            layer_sizes[0]
        )));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(NetError::Config("zero-width layer".into()));
    }
    let width = *layer_sizes.last().expect("nonempty");
    dim_for_width(width).ok_or_else(|| {
        NetError::Config(format!(
            "output width {width} does not match 1 + 3 * dim^2 for a power-of-two dim"
        ))
    })
}

/// Glorot-uniform weights, zero biases, from a counter-based stream so the
/// same seed always reproduces the same parameters bit for bit.
pub fn glorot_init(layer_sizes: &[usize], seed: u64) -> Result<MlpParameters, NetError> {
    use rand::{RngCore, SeedableRng};
    validate_layer_sizes(layer_sizes)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut unit = move || (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
    let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
    for pair in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        weights.push(
            (0..fan_in * fan_out)
                .map(|_| (2.0 * unit() - 1.0) * limit)
                .collect(),
        );
        biases.push(vec![0.0; fan_out]);
    }
    Ok(MlpParameters {
        layer_sizes: layer_sizes.to_vec(),
        weights,
        biases,
        seed,
    })
}

/// Everything the network says about one instant of the protocol.
#[derive(Debug, Clone)]
pub struct OutputBundle {
    /// Schedule value in (0, 1).
    pub lambda: f64,
    /// Exact time derivative of the schedule; zero when the bundle came from
    /// a plain forward pass.
    pub dlambda_dt: f64,
    /// Raw counterdiabatic matrix, not symmetrized.
    pub a_cd: ComplexMatrix,
    /// Pauli coefficients of the realizable projection.
    pub c: Vec<f64>,
}

/// [`OutputBundle`] over a generic scalar, the form the loss code consumes.
#[derive(Clone)]
pub struct NetOutputs<S: Scalar> {
    pub lambda: S,
    pub dlambda_dt: S,
    pub dim: usize,
    /// Row-major `dim x dim` complex entries.
    pub a: Vec<Cx<S>>,
    pub c: Vec<S>,
}

impl OutputBundle {
    pub fn to_generic(&self) -> NetOutputs<f64> {
        let dim = self.a_cd.dim();
        NetOutputs {
            lambda: self.lambda,
            dlambda_dt: self.dlambda_dt,
            dim,
            a: self
                .a_cd
                .data()
                .iter()
                .map(|z| Cx::new(z.re, z.im))
                .collect(),
            c: self.c.clone(),
        }
    }
}

/// Slot bookkeeping: `out[0]` is lambda, then interleaved re/im matrix
/// entries, then the coefficients.
fn bundle_from_outputs(out: &[f64], dlambda_dt: f64, dim: usize) -> OutputBundle {
    let mut a_cd = ComplexMatrix::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            let base = 1 + 2 * (i * dim + j);
            a_cd.set(i, j, Complex64::new(out[base], out[base + 1]));
        }
    }
    OutputBundle {
        lambda: out[0],
        dlambda_dt,
        a_cd,
        c: out[1 + 2 * dim * dim..].to_vec(),
    }
}

/// Dot product with four independent accumulators; the fixed combination
/// order keeps results identical run to run.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let quads = a.len() / 4;
    for q in 0..quads {
        let i = 4 * q;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * quads..a.len() {
        sum += a[i] * b[i];
    }
    sum
}

/// `out += s * v`.
#[inline]
fn axpy(out: &mut [f64], s: f64, v: &[f64]) {
    debug_assert_eq!(out.len(), v.len());
    for (o, x) in out.iter_mut().zip(v) {
        *o += s * x;
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intermediate state of one forward pass, kept so the reverse pass can run
/// without recomputing the network. Buffers are sized once and reused.
#[derive(Debug, Clone)]
pub(crate) struct ForwardTrace {
    /// tanh values per hidden layer.
    hidden_a: Vec<Vec<f64>>,
    /// Pre-activation input-tangents per hidden layer.
    hidden_zdot: Vec<Vec<f64>>,
    /// Post-activation outputs; slot 0 already through the sigmoid.
    pub out: Vec<f64>,
    /// Input-tangent of the output pre-activation, slot 0 only.
    zdot_out0: f64,
    pub t: f64,
}

impl ForwardTrace {
    pub fn new(layer_sizes: &[usize]) -> Self {
        let hidden = &layer_sizes[1..layer_sizes.len() - 1];
        Self {
            hidden_a: hidden.iter().map(|&n| vec![0.0; n]).collect(),
            hidden_zdot: hidden.iter().map(|&n| vec![0.0; n]).collect(),
            out: vec![0.0; *layer_sizes.last().expect("nonempty")],
            zdot_out0: 0.0,
            t: 0.0,
        }
    }

    pub fn dlambda_dt(&self) -> f64 {
        let s = self.out[0];
        s * (1.0 - s) * self.zdot_out0
    }
}

/// Primal plus tangent pass; fills `trace` with everything the reverse pass
/// needs.
pub(crate) fn forward_traced(params: &MlpParameters, t: f64, trace: &mut ForwardTrace) {
    let n_hidden = trace.hidden_a.len();
    trace.t = t;
    // The input "previous layer" is the scalar t with tangent 1.
    let mut prev_a: Vec<f64> = vec![t];
    let mut prev_adot: Vec<f64> = vec![1.0];
    for h in 0..n_hidden {
        let w = &params.weights[h];
        let b = &params.biases[h];
        let n_in = params.layer_sizes[h];
        let n_out = params.layer_sizes[h + 1];
        let a = &mut trace.hidden_a[h];
        let zdot = &mut trace.hidden_zdot[h];
        for row in 0..n_out {
            let wrow = &w[row * n_in..(row + 1) * n_in];
            let z = dot(wrow, &prev_a) + b[row];
            zdot[row] = dot(wrow, &prev_adot);
            a[row] = z.tanh();
        }
        prev_a.clear();
        prev_a.extend_from_slice(a);
        prev_adot.clear();
        prev_adot.extend(
            a.iter()
                .zip(zdot.iter())
                .map(|(&u, &zd)| (1.0 - u * u) * zd),
        );
    }
    let last = n_hidden;
    let w = &params.weights[last];
    let b = &params.biases[last];
    let n_in = params.layer_sizes[last];
    let n_out = params.layer_sizes[last + 1];
    for row in 0..n_out {
        let wrow = &w[row * n_in..(row + 1) * n_in];
        trace.out[row] = dot(wrow, &prev_a) + b[row];
    }
    trace.zdot_out0 = dot(&w[0..n_in], &prev_adot);
    trace.out[0] = sigmoid(trace.out[0]);
}

/// Gradient accumulator shaped like the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrad {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl ParamGrad {
    pub fn zeros_like(params: &MlpParameters) -> Self {
        Self {
            weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for w in &mut self.weights {
            w.fill(0.0);
        }
        for b in &mut self.biases {
            b.fill(0.0);
        }
    }

    pub fn axpy(&mut self, s: f64, other: &Self) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            axpy(a, s, b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            axpy(a, s, b);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .flat_map(|v| v.iter().copied())
    }
}

/// Reverse pass for one traced point.
///
/// `out_bar` holds the loss cotangent of every post-activation output slot
/// and `dlambda_dt_bar` the cotangent of the schedule rate. Because the rate
/// is itself a derivative in `t`, its cotangent flows back through the
/// tangent recurrence, picking up the second derivatives of the activations
/// along the way. Gradients accumulate into `grad`.
pub(crate) fn backward(
    params: &MlpParameters,
    trace: &ForwardTrace,
    out_bar: &[f64],
    dlambda_dt_bar: f64,
    grad: &mut ParamGrad,
) {
    let n_hidden = trace.hidden_a.len();
    let last = n_hidden;
    let n_in = params.layer_sizes[last];
    let w = &params.weights[last];

    // Activations and their input-tangents feeding the output layer.
    let (feed_a, feed_adot): (Vec<f64>, Vec<f64>) = if n_hidden == 0 {
        (vec![trace.t], vec![1.0])
    } else {
        let a = trace.hidden_a[n_hidden - 1].clone();
        let adot = a
            .iter()
            .zip(&trace.hidden_zdot[n_hidden - 1])
            .map(|(&u, &zd)| (1.0 - u * u) * zd)
            .collect();
        (a, adot)
    };

    let s = trace.out[0];
    let sp = s * (1.0 - s);
    let spp = sp * (1.0 - 2.0 * s);
    let zbar0 = out_bar[0] * sp + dlambda_dt_bar * spp * trace.zdot_out0;
    let zdotbar0 = dlambda_dt_bar * sp;

    let mut abar = vec![0.0f64; n_in];
    let mut adotbar = vec![0.0f64; n_in];
    {
        let gw = &mut grad.weights[last];
        let gb = &mut grad.biases[last];
        for row in 0..params.layer_sizes[last + 1] {
            let zbar = if row == 0 { zbar0 } else { out_bar[row] };
            if zbar != 0.0 {
                axpy(&mut gw[row * n_in..(row + 1) * n_in], zbar, &feed_a);
                gb[row] += zbar;
                axpy(&mut abar, zbar, &w[row * n_in..(row + 1) * n_in]);
            }
        }
        axpy(&mut gw[0..n_in], zdotbar0, &feed_adot);
        axpy(&mut adotbar, zdotbar0, &w[0..n_in]);
    }

    for h in (0..n_hidden).rev() {
        let n_in = params.layer_sizes[h];
        let n_out = params.layer_sizes[h + 1];
        let w = &params.weights[h];
        let a = &trace.hidden_a[h];
        let zdot = &trace.hidden_zdot[h];
        let (feed_a, feed_adot): (Vec<f64>, Vec<f64>) = if h == 0 {
            (vec![trace.t], vec![1.0])
        } else {
            let fa = trace.hidden_a[h - 1].clone();
            let fad = fa
                .iter()
                .zip(&trace.hidden_zdot[h - 1])
                .map(|(&u, &zd)| (1.0 - u * u) * zd)
                .collect();
            (fa, fad)
        };

        let mut next_abar = vec![0.0f64; n_in];
        let mut next_adotbar = vec![0.0f64; n_in];
        let gw = &mut grad.weights[h];
        let gb = &mut grad.biases[h];
        for row in 0..n_out {
            let u = a[row];
            let sp = 1.0 - u * u;
            let spp = -2.0 * u * sp;
            let zbar = abar[row] * sp + adotbar[row] * spp * zdot[row];
            let zdotbar = adotbar[row] * sp;
            let wrow = &w[row * n_in..(row + 1) * n_in];
            if zbar != 0.0 {
                axpy(&mut gw[row * n_in..(row + 1) * n_in], zbar, &feed_a);
                gb[row] += zbar;
                axpy(&mut next_abar, zbar, wrow);
            }
            if zdotbar != 0.0 {
                axpy(&mut gw[row * n_in..(row + 1) * n_in], zdotbar, &feed_adot);
                axpy(&mut next_adotbar, zdotbar, wrow);
            }
        }
        abar = next_abar;
        adotbar = next_adotbar;
    }
}

/// Plain forward pass; `dlambda_dt` in the result is zero.
pub fn forward(params: &MlpParameters, t: f64) -> OutputBundle {
    let n_hidden = params.layer_sizes.len() - 2;
    let mut prev: Vec<f64> = vec![t];
    for h in 0..n_hidden {
        let w = &params.weights[h];
        let b = &params.biases[h];
        let n_in = params.layer_sizes[h];
        let n_out = params.layer_sizes[h + 1];
        let mut a = vec![0.0f64; n_out];
        for (row, slot) in a.iter_mut().enumerate() {
            *slot = (dot(&w[row * n_in..(row + 1) * n_in], &prev) + b[row]).tanh();
        }
        prev = a;
    }
    let last = n_hidden;
    let w = &params.weights[last];
    let b = &params.biases[last];
    let n_in = params.layer_sizes[last];
    let n_out = params.layer_sizes[last + 1];
    let mut out = vec![0.0f64; n_out];
    for (row, slot) in out.iter_mut().enumerate() {
        *slot = dot(&w[row * n_in..(row + 1) * n_in], &prev) + b[row];
    }
    out[0] = sigmoid(out[0]);
    bundle_from_outputs(&out, 0.0, params.state_dim())
}

/// Forward pass carrying the exact `d/dt` tangent; the bundle's
/// `dlambda_dt` is the true derivative of the sigmoid output.
pub fn forward_with_input_derivative(params: &MlpParameters, t: f64) -> OutputBundle {
    let mut trace = ForwardTrace::new(&params.layer_sizes);
    forward_traced(params, t, &mut trace);
    bundle_from_outputs(&trace.out, trace.dlambda_dt(), params.state_dim())
}

/// A loss written over network outputs at a batch of points, generic in the
/// scalar so the same expression can be evaluated and differentiated.
pub trait BundleLoss {
    fn eval<S: Scalar>(&self, bundles: &[NetOutputs<S>]) -> S;
}

/// Value and exact parameter gradient of `loss` over the bundles the network
/// produces at `times`.
///
/// The loss is recorded on a tape to get its cotangents with respect to each
/// bundle field, and the network reverse pass carries those down to weights
/// and biases. One call handles the whole batch.
pub fn loss_gradient(
    params: &MlpParameters,
    times: &[f64],
    loss: &impl BundleLoss,
) -> (f64, ParamGrad) {
    let dim = params.state_dim();
    let mut traces: Vec<ForwardTrace> = Vec::with_capacity(times.len());
    let mut trace = ForwardTrace::new(&params.layer_sizes);
    for &t in times {
        forward_traced(params, t, &mut trace);
        traces.push(trace.clone());
    }

    let tape = Tape::new();
    let bundles: Vec<NetOutputs<crate::autodiff::Var<'_>>> = traces
        .iter()
        .map(|tr| {
            let lambda = tape.leaf(tr.out[0]);
            let dlambda_dt = tape.leaf(tr.dlambda_dt());
            let a = (0..dim * dim)
                .map(|e| {
                    let base = 1 + 2 * e;
                    Cx::new(tape.leaf(tr.out[base]), tape.leaf(tr.out[base + 1]))
                })
                .collect();
            let c = tr.out[1 + 2 * dim * dim..]
                .iter()
                .map(|&v| tape.leaf(v))
                .collect();
            NetOutputs {
                lambda,
                dlambda_dt,
                dim,
                a,
                c,
            }
        })
        .collect();

    let root = loss.eval(&bundles);
    let cotangents = tape.gradient(root);

    let mut grad = ParamGrad::zeros_like(params);
    let width = *params.layer_sizes.last().expect("nonempty");
    let mut out_bar = vec![0.0f64; width];
    for (tr, bundle) in traces.iter().zip(&bundles) {
        out_bar.fill(0.0);
        out_bar[0] = cotangents.wrt(bundle.lambda);
        for (e, z) in bundle.a.iter().enumerate() {
            out_bar[1 + 2 * e] = cotangents.wrt(z.re);
            out_bar[2 + 2 * e] = cotangents.wrt(z.im);
        }
        for (k, ck) in bundle.c.iter().enumerate() {
            out_bar[1 + 2 * dim * dim + k] = cotangents.wrt(*ck);
        }
        backward(
            params,
            tr,
            &out_bar,
            cotangents.wrt(bundle.dlambda_dt),
            &mut grad,
        );
    }
    (root.value(), grad)
}

#[derive(Serialize, Deserialize)]
struct CheckpointJson {
    schema_version: u32,
    layer_sizes: Vec<usize>,
    /// Per layer, rows of weights: `weights[k][row][col]`.
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
    seed: u64,
    epoch: u64,
}

pub fn checkpoint_to_value(params: &MlpParameters, epoch: u64) -> serde_json::Value {
    let weights = params
        .weights
        .iter()
        .zip(params.layer_sizes.windows(2))
        .map(|(flat, pair)| flat.chunks(pair[0]).map(<[f64]>::to_vec).collect())
        .collect();
    serde_json::to_value(CheckpointJson {
        schema_version: NET_SCHEMA_VERSION,
        layer_sizes: params.layer_sizes.clone(),
        weights,
        biases: params.biases.clone(),
        seed: params.seed,
        epoch,
    })
    .expect("checkpoint serialization cannot fail")
}

pub fn checkpoint_from_value(value: serde_json::Value) -> Result<(MlpParameters, u64), NetError> {
    let version = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| NetError::Format("missing schema_version".into()))?;
    if version != u64::from(NET_SCHEMA_VERSION) {
        return Err(NetError::UnsupportedVersion(version as u32));
    }
    let raw: CheckpointJson =
        serde_json::from_value(value).map_err(|e| NetError::Format(e.to_string()))?;
    validate_layer_sizes(&raw.layer_sizes)?;
    let n_layers = raw.layer_sizes.len() - 1;
    if raw.weights.len() != n_layers || raw.biases.len() != n_layers {
        return Err(NetError::Format(format!(
            "expected {n_layers} weight and bias blocks, got {} and {}",
            raw.weights.len(),
            raw.biases.len()
        )));
    }
    let mut weights = Vec::with_capacity(n_layers);
    for (k, rows) in raw.weights.iter().enumerate() {
        let (n_in, n_out) = (raw.layer_sizes[k], raw.layer_sizes[k + 1]);
        if rows.len() != n_out || rows.iter().any(|r| r.len() != n_in) {
            return Err(NetError::Format(format!(
                "weight block {k} does not have shape {n_out}x{n_in}"
            )));
        }
        if raw.biases[k].len() != n_out {
            return Err(NetError::Format(format!(
                "bias block {k} does not have length {n_out}"
            )));
        }
        weights.push(rows.concat());
    }
    Ok((
        MlpParameters {
            layer_sizes: raw.layer_sizes,
            weights,
            biases: raw.biases,
            seed: raw.seed,
        },
        raw.epoch,
    ))
}

pub fn save_checkpoint(params: &MlpParameters, epoch: u64, path: &Path) -> Result<(), NetError> {
    let text = serde_json::to_string_pretty(&checkpoint_to_value(params, epoch))
        .expect("checkpoint serialization cannot fail");
    std::fs::write(path, text + "\n")
        .map_err(|e| NetError::Format(format!("cannot write {}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<(MlpParameters, u64), NetError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| NetError::Format(format!("cannot read {}: {e}", path.display())))?;
    let value = serde_json::from_str(&text).map_err(|e| NetError::Format(e.to_string()))?;
    checkpoint_from_value(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central finite difference of a scalar function of one parameter
    /// coordinate, the reference all gradient tests compare against.
    fn fd_coordinate(
        params: &MlpParameters,
        times: &[f64],
        loss: &impl BundleLoss,
        layer: usize,
        index: usize,
        bias: bool,
        h: f64,
    ) -> f64 {
        let eval = |p: &MlpParameters| -> f64 {
            let bundles: Vec<NetOutputs<f64>> = times
                .iter()
                .map(|&t| forward_with_input_derivative(p, t).to_generic())
                .collect();
            loss.eval(&bundles)
        };
        let mut plus = params.clone();
        let mut minus = params.clone();
        if bias {
            plus.biases[layer][index] += h;
            minus.biases[layer][index] -= h;
        } else {
            plus.weights[layer][index] += h;
            minus.weights[layer][index] -= h;
        }
        (eval(&plus) - eval(&minus)) / (2.0 * h)
    }

    fn toy_sizes() -> Vec<usize> {
        // One-qubit output block keeps the tests quick: 1 + 3 * 4 = 13.
        vec![1, 10, 8, 13]
    }

    #[test]
    fn glorot_respects_the_per_layer_limit() {
        let sizes = default_layer_sizes(2);
        let params = glorot_init(&sizes, 7).unwrap();
        assert_eq!(*sizes.last().unwrap(), 49);
        for (k, pair) in sizes.windows(2).enumerate() {
            let limit = (6.0 / (pair[0] + pair[1]) as f64).sqrt();
            for &w in &params.weights[k] {
                assert!(w.abs() <= limit, "layer {k}: |{w}| > {limit}");
            }
            assert!(params.biases[k].iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn glorot_is_deterministic_and_seed_sensitive() {
        let sizes = toy_sizes();
        let a = glorot_init(&sizes, 42).unwrap();
        let b = glorot_init(&sizes, 42).unwrap();
        let c = glorot_init(&sizes, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.weights[0], c.weights[0]);
    }

    #[test]
    fn bad_layer_sizes_are_rejected() {
        assert!(matches!(glorot_init(&[1], 0), Err(NetError::Config(_))));
        assert!(matches!(glorot_init(&[2, 13], 0), Err(NetError::Config(_))));
        assert!(matches!(
            glorot_init(&[1, 0, 13], 0),
            Err(NetError::Config(_))
        ));
        // 14 is not 1 + 3 * dim^2 for any power-of-two dim.
        assert!(matches!(
            glorot_init(&[1, 10, 14], 0),
            Err(NetError::Config(_))
        ));
    }

    #[test]
    fn zero_parameters_give_the_neutral_bundle() {
        let mut params = glorot_init(&toy_sizes(), 1).unwrap();
        for w in &mut params.weights {
            w.fill(0.0);
        }
        let bundle = forward_with_input_derivative(&params, 0.37);
        assert_eq!(bundle.lambda, 0.5);
        assert_eq!(bundle.dlambda_dt, 0.0);
        assert_eq!(bundle.a_cd.frobenius_norm_sq(), 0.0);
        assert!(bundle.c.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn lambda_stays_in_the_open_unit_interval() {
        let params = glorot_init(&toy_sizes(), 5).unwrap();
        for i in 0..50 {
            let t = i as f64 / 49.0;
            let lambda = forward(&params, t).lambda;
            assert!(lambda > 0.0 && lambda < 1.0);
        }
    }

    #[test]
    fn forward_passes_are_bitwise_deterministic() {
        let params = glorot_init(&toy_sizes(), 9).unwrap();
        let a = forward_with_input_derivative(&params, 0.625);
        let b = forward_with_input_derivative(&params, 0.625);
        assert_eq!(a.lambda.to_bits(), b.lambda.to_bits());
        assert_eq!(a.dlambda_dt.to_bits(), b.dlambda_dt.to_bits());
        assert_eq!(a.a_cd, b.a_cd);
        let plain = forward(&params, 0.625);
        assert_eq!(plain.lambda.to_bits(), a.lambda.to_bits());
        assert_eq!(plain.a_cd, a.a_cd);
    }

    #[test]
    fn single_layer_sigmoid_matches_the_closed_form() {
        // With sizes (1, 13) and W[0][0] = 1 the schedule is sigmoid(t).
        let mut params = glorot_init(&[1, 13], 0).unwrap();
        for w in &mut params.weights {
            w.fill(0.0);
        }
        params.weights[0][0] = 1.0;
        for &t in &[-2.0, -0.3, 0.0, 0.8, 3.0] {
            let bundle = forward_with_input_derivative(&params, t);
            let s = 1.0 / (1.0 + (-t).exp());
            assert!((bundle.lambda - s).abs() < 1e-15);
            assert!((bundle.dlambda_dt - s * (1.0 - s)).abs() < 1e-15);
        }
    }

    #[test]
    fn schedule_rate_matches_finite_differences() {
        let params = glorot_init(&toy_sizes(), 11).unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(100);
        let h = 1e-6;
        for _ in 0..100 {
            let t: f64 = rng.gen_range(0.0..1.0);
            let rate = forward_with_input_derivative(&params, t).dlambda_dt;
            let fd = (forward(&params, t + h).lambda - forward(&params, t - h).lambda) / (2.0 * h);
            let denom = rate.abs().max(fd.abs()).max(1e-12);
            assert!(
                (rate - fd).abs() / denom <= 1e-5,
                "t={t}: rate {rate:.12e} vs fd {fd:.12e}"
            );
        }
    }

    struct ConstantLoss;
    impl BundleLoss for ConstantLoss {
        fn eval<S: Scalar>(&self, bundles: &[NetOutputs<S>]) -> S {
            bundles[0].lambda.lit(3.5)
        }
    }

    struct LambdaSquared;
    impl BundleLoss for LambdaSquared {
        fn eval<S: Scalar>(&self, bundles: &[NetOutputs<S>]) -> S {
            bundles[0].lambda * bundles[0].lambda
        }
    }

    /// Touches every bundle field, including the schedule rate, at every
    /// point of the batch.
    struct EverythingLoss;
    impl BundleLoss for EverythingLoss {
        fn eval<S: Scalar>(&self, bundles: &[NetOutputs<S>]) -> S {
            let mut acc = bundles[0].lambda.lit(0.0);
            for b in bundles {
                acc = acc + b.lambda * b.lambda + b.dlambda_dt * b.dlambda_dt * 0.5;
                for z in &b.a {
                    acc = acc + z.norm_sqr();
                }
                for (k, ck) in b.c.iter().enumerate() {
                    acc = acc + *ck * *ck * (1.0 + k as f64 * 0.1);
                }
                acc = acc + b.dlambda_dt * b.lambda * 0.25;
            }
            acc
        }
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let params = glorot_init(&toy_sizes(), 3).unwrap();
        let (value, grad) = loss_gradient(&params, &[0.2, 0.7], &ConstantLoss);
        assert_eq!(value, 3.5);
        assert!(grad.iter().all(|g| g == 0.0));
    }

    #[test]
    fn lambda_squared_gradient_matches_finite_differences() {
        let params = glorot_init(&toy_sizes(), 4).unwrap();
        let times = [0.3];
        let (value, grad) = loss_gradient(&params, &times, &LambdaSquared);
        let lambda = forward(&params, 0.3).lambda;
        assert!((value - lambda * lambda).abs() < 1e-15);
        for layer in 0..params.n_layers() {
            let index = params.weights[layer].len() / 2;
            let fd = fd_coordinate(&params, &times, &LambdaSquared, layer, index, false, 1e-5);
            let got = grad.weights[layer][index];
            assert!(
                (got - fd).abs() <= 1e-6 * got.abs().max(fd.abs()).max(1e-6),
                "layer {layer}: {got:.12e} vs {fd:.12e}"
            );
        }
    }

    #[test]
    fn full_bundle_gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let params = glorot_init(&toy_sizes(), 12).unwrap();
        let times = [0.15, 0.5, 0.85];
        let (_, grad) = loss_gradient(&params, &times, &EverythingLoss);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(200);
        for _ in 0..30 {
            let layer = rng.gen_range(0..params.n_layers());
            let bias: bool = rng.gen_bool(0.3);
            let len = if bias {
                params.biases[layer].len()
            } else {
                params.weights[layer].len()
            };
            let index = rng.gen_range(0..len);
            let fd = fd_coordinate(&params, &times, &EverythingLoss, layer, index, bias, 1e-5);
            let got = if bias {
                grad.biases[layer][index]
            } else {
                grad.weights[layer][index]
            };
            let ok = (got - fd).abs() <= 1e-4 * got.abs().max(fd.abs())
                || (got.abs() <= 1e-8 && fd.abs() <= 1e-8);
            assert!(
                ok,
                "layer {layer} bias={bias} index {index}: {got:.12e} vs {fd:.12e}"
            );
        }
    }

    #[test]
    fn gradients_are_bitwise_deterministic() {
        let params = glorot_init(&toy_sizes(), 21).unwrap();
        let times = [0.1, 0.4, 0.9];
        let (va, ga) = loss_gradient(&params, &times, &EverythingLoss);
        let (vb, gb) = loss_gradient(&params, &times, &EverythingLoss);
        assert_eq!(va.to_bits(), vb.to_bits());
        assert_eq!(ga, gb);
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let params = glorot_init(&toy_sizes(), 77).unwrap();
        let dir = std::env::temp_dir().join("cdpinn_net_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("net.json");
        save_checkpoint(&params, 1234, &path).unwrap();
        let (back, epoch) = load_checkpoint(&path).unwrap();
        assert_eq!(back, params);
        assert_eq!(epoch, 1234);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn future_checkpoint_versions_are_rejected() {
        let params = glorot_init(&toy_sizes(), 1).unwrap();
        let mut value = checkpoint_to_value(&params, 0);
        value["schema_version"] = serde_json::json!(99);
        let err = checkpoint_from_value(value).unwrap_err();
        assert!(matches!(err, NetError::UnsupportedVersion(99)));
    }

    #[test]
    fn malformed_checkpoints_are_rejected() {
        let params = glorot_init(&toy_sizes(), 1).unwrap();
        let mut value = checkpoint_to_value(&params, 0);
        value["weights"][0] = serde_json::json!([[1.0, 2.0]]);
        assert!(matches!(
            checkpoint_from_value(value),
            Err(NetError::Format(_))
        ));
    }
}
