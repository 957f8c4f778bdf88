//! Deterministic low-discrepancy batches of time points.
//!
//! Interior collocation points come from the base-2 van der Corput sequence:
//! the first `2^m` terms are the m-bit bit-reversals of `0..2^m` scaled into
//! the unit interval, which places exactly one point in every dyadic cell
//! `[k/2^m, (k+1)/2^m)`. The raw zero point would sit on the boundary, so it
//! is moved to the center of the first cell; every point is then strictly
//! inside the requested span. Identical arguments always produce the
//! identical batch.

use thiserror::Error;

/// Cap on `log2_count`, so a batch has at most `2^20` points.
pub const MAX_LOG2_COUNT: u32 = 20;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("invalid sampling configuration: {0}")]
    Config(String),
}

/// A sorted batch of sampling times together with the span they cover.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeBatch {
    pub t_min: f64,
    pub t_max: f64,
    pub times: Vec<f64>,
}

fn bit_reverse(value: u64, bits: u32) -> u64 {
    if bits == 0 {
        0
    } else {
        value.reverse_bits() >> (64 - bits)
    }
}

/// The first `2^log2_count` van der Corput points mapped affinely into
/// `(t_min, t_max)` and sorted ascending.
pub fn sobol_interior(log2_count: u32, t_min: f64, t_max: f64) -> Result<TimeBatch, SamplingError> {
    if log2_count > MAX_LOG2_COUNT {
        return Err(SamplingError::Config(format!(
            "log2_count {log2_count} exceeds the supported maximum {MAX_LOG2_COUNT}"
        )));
    }
    if !(t_min.is_finite() && t_max.is_finite()) || t_min >= t_max {
        return Err(SamplingError::Config(format!(
            "need finite t_min < t_max, got [{t_min}, {t_max}]"
        )));
    }
    let count = 1u64 << log2_count;
    let scale = 1.0 / count as f64;
    let span = t_max - t_min;
    let mut times: Vec<f64> = (0..count)
        .map(|i| {
            let unit = if i == 0 {
                // Half a cell in from the left edge instead of exactly on it.
                0.5 * scale
            } else {
                bit_reverse(i, log2_count) as f64 * scale
            };
            t_min + unit * span
        })
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    Ok(TimeBatch {
        t_min,
        t_max,
        times,
    })
}
