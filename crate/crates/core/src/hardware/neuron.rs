//! Stochastic MTJ neuron and the general RC-input hardware neuron.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Binary stochastic neuron built from a low-barrier magnetic tunnel
/// junction: `m_out = sgn(tanh(κ·m_in) + rnd)` with `rnd` uniform on (−1, 1).
/// Output current is taken equal to `m_out` in normalized units.
#[derive(Debug, Clone)]
pub struct MtjNeuron {
    kappa: f64,
    rng: RngStream,
}

impl MtjNeuron {
    pub fn new(kappa: f64, rng: RngStream) -> Result<Self> {
        if !kappa.is_finite() {
            return Err(Error::NonFinite("kappa"));
        }
        Ok(Self { kappa, rng })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `E[m_out] = tanh(κ·m_in)` exactly.
    pub fn expected(&self, m_in: f64) -> f64 {
        (self.kappa * m_in).tanh()
    }

    /// One ±1 draw. `sgn(0)` resolves to +1.
    pub fn sample(&mut self, m_in: f64) -> Result<f64> {
        if !m_in.is_finite() {
            return Err(Error::NonFinite("MTJ input"));
        }
        let drive = self.expected(m_in) + self.rng.uniform_open_signed();
        Ok(if drive >= 0.0 { 1.0 } else { -1.0 })
    }

    /// Time-averaged response at each input.
    pub fn transfer_curve(
        &mut self,
        inputs: &[f64],
        samples_per_point: usize,
    ) -> Result<TransferCurve> {
        if samples_per_point == 0 {
            return Err(Error::param("samples_per_point", "must be at least 1"));
        }
        let n = samples_per_point as f64;
        let mut points = Vec::with_capacity(inputs.len());
        for &z in inputs {
            let mut plus = 0usize;
            for _ in 0..samples_per_point {
                if self.sample(z)? > 0.0 {
                    plus += 1;
                }
            }
            let mean = (2 * plus) as f64 / n - 1.0;
            // sample variance of ±1 draws
            let var = if samples_per_point > 1 {
                (1.0 - mean * mean) * n / (n - 1.0)
            } else {
                0.0
            };
            points.push(CurvePoint {
                input: z,
                mean,
                stderr: (var / n).sqrt(),
            });
        }
        Ok(TransferCurve {
            kappa: self.kappa,
            samples_per_point,
            points,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub input: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCurve {
    pub kappa: f64,
    pub samples_per_point: usize,
    pub points: Vec<CurvePoint>,
}

/// Metadata written next to a transfer-curve CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub kappa: f64,
    pub samples_per_point: usize,
}

impl TransferCurve {
    pub fn meta(&self) -> CurveMeta {
        CurveMeta {
            kappa: self.kappa,
            samples_per_point: self.samples_per_point,
        }
    }

    /// Largest `|mean − tanh(κ·z)|` divided by the binomial standard error
    /// `sqrt((1 − tanh²)/n)` of the exact expectation. Points where the
    /// expectation saturates to ±1 must match exactly.
    pub fn max_z_score(&self) -> f64 {
        let n = self.samples_per_point as f64;
        self.points
            .iter()
            .map(|p| {
                let e = (self.kappa * p.input).tanh();
                let sd = ((1.0 - e * e) / n).sqrt();
                let d = (p.mean - e).abs();
                if sd > 0.0 {
                    d / sd
                } else if d == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }

    /// Root-mean-square distance to `tanh(κ·z)`.
    pub fn rms_error(&self) -> f64 {
        let s: f64 = self
            .points
            .iter()
            .map(|p| (p.mean - (self.kappa * p.input).tanh()).powi(2))
            .sum();
        (s / self.points.len().max(1) as f64).sqrt()
    }

    /// CSV with header `input,mean,stderr`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for p in &self.points {
            wr.serialize(p)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, meta: CurveMeta) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let points = rd
            .deserialize()
            .collect::<std::result::Result<Vec<CurvePoint>, _>>()?;
        Ok(Self {
            kappa: meta.kappa,
            samples_per_point: meta.samples_per_point,
            points,
        })
    }
}

/// Inclusive grid `lo, lo+step, …` up to `hi`, computed as `lo + i·step`.
pub fn grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && step > 0.0 && step.is_finite() && hi >= lo) {
        return Err(Error::param("grid", "need finite lo <= hi and step > 0"));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

/// Neuron with an RC input stage: charge integrates the input current, the
/// device switches once `Q ≥ Qc`, and the output is
/// `tanh(α·dQ/dt) + β·I_rnd` with Gaussian `I_rnd` (noise only below
/// threshold).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralNeuron {
    /// Input resistance (Ω).
    pub r: f64,
    /// Input capacitance (F).
    pub c: f64,
    /// Critical switching charge (C).
    pub qc: f64,
    /// Gain applied to `dQ/dt` inside the transfer function.
    pub alpha_g: f64,
    /// Noise current gain.
    pub beta: f64,
    /// Stored charge (C).
    #[serde(default)]
    pub q: f64,
}

impl GeneralNeuron {
    pub fn new(r: f64, c: f64, qc: f64, alpha_g: f64, beta: f64) -> Result<Self> {
        let n = Self {
            r,
            c,
            qc,
            alpha_g,
            beta,
            q: 0.0,
        };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite() && self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::param("r/c", "must be finite and strictly positive"));
        }
        if !(self.qc.is_finite()
            && self.alpha_g.is_finite()
            && self.beta.is_finite()
            && self.q.is_finite())
        {
            return Err(Error::NonFinite("general neuron parameters"));
        }
        Ok(())
    }

    pub fn time_constant(&self) -> f64 {
        self.r * self.c
    }

    /// Forward-Euler step of `dQ/dt = I_in − Q/(RC)`. Requires
    /// `dt ≤ RC/10`.
    pub fn step(&mut self, i_in: f64, dt: f64, rng: &mut RngStream) -> Result<f64> {
        if !i_in.is_finite() {
            return Err(Error::NonFinite("input current"));
        }
        let tau = self.time_constant();
        if !(dt > 0.0 && dt <= tau / 10.0) {
            return Err(Error::param(
                "dt",
                format!("must lie in (0, RC/10] = (0, {:e}]", tau / 10.0),
            ));
        }
        let dq = i_in - self.q / tau;
        self.q += dt * dq;
        let noise = if self.beta != 0.0 {
            self.beta * rng.gaussian()
        } else {
            0.0
        };
        Ok(if self.q >= self.qc {
            (self.alpha_g * dq).tanh() + noise
        } else {
            noise
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturated_input_always_fires() {
        let mut n = MtjNeuron::new(1.0, RngStream::new(1, 0)).unwrap();
        assert!((0..10_000).all(|_| n.sample(40.0).unwrap() == 1.0));
        assert!((0..10_000).all(|_| n.sample(-40.0).unwrap() == -1.0));
    }

    #[test]
    fn grid_is_inclusive() {
        let g = grid(-2.0, 2.0, 0.1).unwrap();
        assert_eq!(g.len(), 41);
        assert!((g[40] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unstable_step_is_rejected() {
        let mut n = GeneralNeuron::new(1e3, 1e-12, 1e-15, 1.0, 0.0).unwrap();
        let mut rng = RngStream::new(0, 0);
        assert!(n.step(1e-6, 1e-9, &mut rng).is_err());
        assert!(n.step(1e-6, 1e-10, &mut rng).is_ok());
    }

    #[test]
    fn silent_below_threshold_without_noise() {
        let mut n = GeneralNeuron::new(1.0, 1.0, 10.0, 1.0, 0.0).unwrap();
        let mut rng = RngStream::new(0, 0);
        for _ in 0..100 {
            assert_eq!(n.step(1.0, 0.01, &mut rng).unwrap(), 0.0);
        }
    }
}
