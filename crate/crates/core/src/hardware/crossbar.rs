//! Memristor crossbar synapses: a differential conductance pair per weight,
//! with column currents `I = G·V`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossbarArray {
    g_plus: Matrix,
    g_minus: Matrix,
    g_min: f64,
    g_max: f64,
    /// Weight per siemens: `w = scale·(g⁺ − g⁻)`.
    scale: f64,
    /// Conductance quantization bits, if any.
    bits: Option<u32>,
}

/// Maps `weights` onto conductance pairs in `[g_min, g_max]`. Positive
/// weights raise `g⁺` above `g_min`, negative ones raise `g⁻`. With `bits`
/// set, every conductance is rounded to one of `2^bits` evenly spaced levels.
/// An all-zero matrix programs every device to `g_min`.
pub fn program_crossbar(
    weights: &Matrix,
    g_min: f64,
    g_max: f64,
    bits: Option<u32>,
) -> Result<CrossbarArray> {
    program_crossbar_with_range(weights, g_min, g_max, bits, weights.max_abs())
}

/// As [`program_crossbar`], with `w_max` (not the largest weight) mapped to
/// the full conductance swing. Fails if any weight exceeds `w_max`.
pub fn program_crossbar_with_range(
    weights: &Matrix,
    g_min: f64,
    g_max: f64,
    bits: Option<u32>,
    w_max: f64,
) -> Result<CrossbarArray> {
    if !weights.is_finite() {
        return Err(Error::NonFinite("crossbar weights"));
    }
    if !(g_min >= 0.0 && g_max > g_min && g_max.is_finite()) {
        return Err(Error::param("g_min/g_max", "need 0 <= g_min < g_max"));
    }
    if let Some(b) = bits {
        if !(1..=24).contains(&b) {
            return Err(Error::param("bits", "must lie in 1..=24"));
        }
    }
    if !(w_max >= 0.0 && w_max.is_finite()) {
        return Err(Error::param("w_max", "must be finite and non-negative"));
    }
    if weights.max_abs() > w_max {
        return Err(Error::param("w_max", "smaller than the largest weight"));
    }
    let range = g_max - g_min;
    let scale = if w_max > 0.0 {
        w_max / range
    } else {
        1.0 / range
    };
    let quantize = |g: f64| match bits {
        Some(b) => {
            let step = range / ((1u64 << b) - 1) as f64;
            (g_min + ((g - g_min) / step).round() * step).clamp(g_min, g_max)
        }
        None => g.min(g_max),
    };
    let (r, c) = (weights.rows(), weights.cols());
    let mut g_plus = Matrix::zeros(r, c);
    let mut g_minus = Matrix::zeros(r, c);
    for (i, &w) in weights.as_slice().iter().enumerate() {
        let g = g_min + w.abs() / scale;
        let (p, m) = if w >= 0.0 { (g, g_min) } else { (g_min, g) };
        g_plus.as_mut_slice()[i] = quantize(p);
        g_minus.as_mut_slice()[i] = quantize(m);
    }
    Ok(CrossbarArray {
        g_plus,
        g_minus,
        g_min,
        g_max,
        scale,
        bits,
    })
}

impl CrossbarArray {
    pub fn n_out(&self) -> usize {
        self.g_plus.rows()
    }

    pub fn n_in(&self) -> usize {
        self.g_plus.cols()
    }

    pub fn g_plus(&self) -> &Matrix {
        &self.g_plus
    }

    pub fn g_minus(&self) -> &Matrix {
        &self.g_minus
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn bits(&self) -> Option<u32> {
        self.bits
    }

    pub fn conductance_range(&self) -> (f64, f64) {
        (self.g_min, self.g_max)
    }

    /// Largest weight error programming can introduce: half a conductance
    /// level times the scale, or 0 without quantization.
    pub fn quantization_bound(&self) -> f64 {
        match self.bits {
            Some(b) => 0.5 * (self.g_max - self.g_min) / ((1u64 << b) - 1) as f64 * self.scale,
            None => 0.0,
        }
    }

    /// The weights the array actually implements.
    pub fn decode(&self) -> Matrix {
        let data = self
            .g_plus
            .as_slice()
            .iter()
            .zip(self.g_minus.as_slice())
            .map(|(p, m)| self.scale * (p - m))
            .collect();
        Matrix::from_vec(self.n_out(), self.n_in(), data).expect("shape preserved")
    }

    /// Row currents of both arrays, subtracted and rescaled to weight units.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n_in() {
            return Err(Error::dims("crossbar_matvec", self.n_in(), v.len()));
        }
        Ok((0..self.n_out())
            .map(|r| {
                let i: f64 = self
                    .g_plus
                    .row(r)
                    .iter()
                    .zip(self.g_minus.row(r))
                    .zip(v)
                    .map(|((p, m), x)| (p - m) * x)
                    .sum();
                self.scale * i
            })
            .collect())
    }

    /// Applies the array to every row of `states`; output row `t` is
    /// `W·states[t]`.
    pub fn readout(&self, states: &Matrix) -> Result<Matrix> {
        if states.cols() != self.n_in() {
            return Err(Error::dims("hardware readout", self.n_in(), states.cols()));
        }
        let mut out = Matrix::zeros(states.rows(), self.n_out());
        for t in 0..states.rows() {
            let y = self.matvec(states.row(t))?;
            out.row_mut(t).copy_from_slice(&y);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_program_to_floor() {
        let x = program_crossbar(&Matrix::zeros(3, 4), 1e-6, 1e-4, None).unwrap();
        assert_eq!(x.g_plus(), x.g_minus());
        assert!(x.g_plus().as_slice().iter().all(|&g| g == 1e-6));
        assert_eq!(x.decode().max_abs(), 0.0);
    }

    #[test]
    fn identity_passes_voltages() {
        let x = program_crossbar(&Matrix::identity(5), 1e-6, 1e-4, None).unwrap();
        let v = [0.1, -0.2, 0.3, 0.0, 2.0];
        for (a, b) in x.matvec(&v).unwrap().iter().zip(v) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(x.matvec(&[1.0]).is_err());
    }

    #[test]
    fn conductances_stay_in_range() {
        let w = Matrix::from_rows(&[vec![1.0, -3.0], vec![0.5, 2.0]]).unwrap();
        for bits in [None, Some(3)] {
            let x = program_crossbar(&w, 2e-6, 5e-5, bits).unwrap();
            for &g in x.g_plus().as_slice().iter().chain(x.g_minus().as_slice()) {
                assert!((2e-6..=5e-5).contains(&g));
            }
        }
    }
}
