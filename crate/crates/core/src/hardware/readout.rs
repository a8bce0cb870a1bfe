//! Reservoir readouts mapped onto a crossbar.

use serde::{Deserialize, Serialize};

use super::crossbar::{program_crossbar_with_range, CrossbarArray};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareReadoutConfig {
    /// Ridge penalty of the hardware readout fit.
    pub lambda: f64,
    /// Conductance quantization bits, or `None` for analog conductances.
    pub bits: Option<u32>,
    /// Conductance range (S).
    pub g_min: f64,
    pub g_max: f64,
}

impl Default for HardwareReadoutConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            bits: Some(6),
            g_min: 1e-6,
            g_max: 1e-4,
        }
    }
}

/// Weight matrix (one row per output) quantized onto the `2^bits`-level
/// conductance grid of a crossbar whose full swing is `max|w|`. Weights are
/// rounded one at a time, and each rounding error is pushed onto the
/// weights not yet rounded so as to minimise the output error over
/// `states` under the quadratic form `SᵀS + λI` (optimal brain
/// compression, as in GPTQ).
pub fn compensated_quantization(
    w: &Matrix,
    states: &Matrix,
    lambda: f64,
    bits: u32,
) -> Result<Matrix> {
    let n = w.cols();
    if states.cols() != n {
        return Err(Error::dims("compensated_quantization", n, states.cols()));
    }
    if !(1..=24).contains(&bits) {
        return Err(Error::param("bits", "must lie in 1..=24"));
    }
    let mut h = states.transpose().matmul(states)?;
    for i in 0..n {
        h[(i, i)] += lambda;
    }
    let h_inv = linalg::cholesky_solve(&linalg::cholesky(&h)?, &Matrix::identity(n));
    // H⁻¹ = UᵀU with U upper triangular
    let u = linalg::cholesky(&h_inv)?.transpose();
    let w_max = w.max_abs();
    let levels = ((1u64 << bits) - 1) as f64;
    let mut out = w.clone();
    if w_max == 0.0 {
        return Ok(out);
    }
    let delta = w_max / levels;
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for i in 0..n {
            let q = (row[i] / delta).round().clamp(-levels, levels) * delta;
            let e = (row[i] - q) / u[(i, i)];
            row[i] = q;
            for j in i + 1..n {
                row[j] -= e * u[(i, j)];
            }
        }
    }
    Ok(out)
}

/// Ridge readout `targets ≈ states · Wᵀ` programmed onto a crossbar, with
/// [`compensated_quantization`] when `cfg.bits` is set.
pub fn fit_hardware_readout(
    states: &Matrix,
    targets: &Matrix,
    cfg: &HardwareReadoutConfig,
) -> Result<CrossbarArray> {
    let w = linalg::ridge_solve(states, targets, cfg.lambda)?.transpose();
    match cfg.bits {
        Some(bits) => {
            let q = compensated_quantization(&w, states, cfg.lambda, bits)?;
            program_crossbar_with_range(&q, cfg.g_min, cfg.g_max, Some(bits), w.max_abs())
        }
        None => program_crossbar_with_range(&w, cfg.g_min, cfg.g_max, None, w.max_abs()),
    }
}

/// Outputs of a crossbar-programmed readout, one row per state row.
pub fn hardware_esn_readout(x: &CrossbarArray, states: &Matrix) -> Result<Matrix> {
    x.readout(states)
}
