//! Distorting channels: FIR intersymbol interference, a memoryless polynomial
//! nonlinearity and optional additive white Gaussian noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::series::TimeSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    /// FIR coefficients, `taps[i]` applied to `d(t − i)`.
    pub taps: Vec<f64>,
    /// Polynomial coefficients `c0..c3` of `u = Σ cⱼ vʲ`.
    pub poly: Vec<f64>,
    /// Signal-to-noise ratio in dB, or `None` for a noiseless channel.
    pub snr_db: Option<f64>,
}

impl ChannelSpec {
    /// Taps `[0.5, 0.25, 0.1]`, `u = v + 0.036v² − 0.011v³`, noiseless.
    pub fn reference() -> Self {
        Self {
            taps: vec![0.5, 0.25, 0.1],
            poly: vec![0.0, 1.0, 0.036, -0.011],
            snr_db: None,
        }
    }

    pub fn identity() -> Self {
        Self {
            taps: vec![1.0],
            poly: vec![0.0, 1.0],
            snr_db: None,
        }
    }

    pub fn with_snr(mut self, snr_db: f64) -> Self {
        self.snr_db = Some(snr_db);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.taps.iter().any(|t| *t != 0.0) {
            return Err(Error::param("taps", "need at least one nonzero tap"));
        }
        if self.poly.is_empty() || self.poly.len() > 4 {
            return Err(Error::param("poly", "degree must be between 0 and 3"));
        }
        if self.taps.iter().chain(&self.poly).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("channel coefficients"));
        }
        if let Some(snr) = self.snr_db {
            if !(snr > 0.0) || !snr.is_finite() {
                return Err(Error::param("snr_db", "must be positive"));
            }
        }
        Ok(())
    }

    /// The noiseless channel output (zero-padded history).
    pub fn distort(&self, clean: &[f64]) -> Vec<f64> {
        (0..clean.len())
            .map(|t| {
                let v: f64 = self
                    .taps
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i <= t)
                    .map(|(i, tap)| tap * clean[t - i])
                    .sum();
                // Horner
                self.poly.iter().rev().fold(0.0, |acc, c| acc * v + c)
            })
            .collect()
    }
}

/// `u(t) = q(d(t))`: FIR, then polynomial, then noise at the requested SNR
/// (relative to the mean power of the noiseless output).
pub fn apply_channel(
    clean: &TimeSeries,
    ch: &ChannelSpec,
    rng: &mut RngStream,
) -> Result<TimeSeries> {
    ch.validate()?;
    let mut u = ch.distort(clean.samples());
    if let Some(snr) = ch.snr_db {
        let power = if u.is_empty() {
            0.0
        } else {
            u.iter().map(|v| v * v).sum::<f64>() / u.len() as f64
        };
        let sigma = (power / 10f64.powf(snr / 10.0)).sqrt();
        for v in &mut u {
            *v += sigma * rng.gaussian();
        }
    }
    TimeSeries::new(u, clean.dt())
}

/// Random bipolar `±amplitude` symbols.
pub fn bipolar_sequence(len: usize, amplitude: f64, rng: &mut RngStream) -> Vec<f64> {
    (0..len)
        .map(|_| {
            if rng.bernoulli(0.5) {
                amplitude
            } else {
                -amplitude
            }
        })
        .collect()
}
