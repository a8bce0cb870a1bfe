//! Digital neuron: fixed-point multiply-accumulate, table-lookup `tanh` and
//! an LFSR noise source.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two's-complement fixed point with `frac_bits` of `total_bits` after the
/// binary point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointFormat {
    pub total_bits: u32,
    pub frac_bits: u32,
}

impl Default for FixedPointFormat {
    /// Q16.12.
    fn default() -> Self {
        Self {
            total_bits: 16,
            frac_bits: 12,
        }
    }
}

impl FixedPointFormat {
    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self> {
        let f = Self {
            total_bits,
            frac_bits,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0 < self.frac_bits && self.frac_bits < self.total_bits && self.total_bits <= 32) {
            return Err(Error::param(
                "fixed point format",
                "need 0 < frac_bits < total_bits <= 32",
            ));
        }
        Ok(())
    }

    pub fn resolution(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn min_raw(&self) -> i64 {
        -(1i64 << (self.total_bits - 1))
    }

    pub fn max_raw(&self) -> i64 {
        (1i64 << (self.total_bits - 1)) - 1
    }

    pub fn in_range(&self, raw: i64) -> bool {
        (self.min_raw()..=self.max_raw()).contains(&raw)
    }

    /// Nearest representable value, ties to even.
    pub fn quantize(&self, v: f64) -> Result<i64> {
        if !v.is_finite() {
            return Err(Error::NonFinite("fixed-point operand"));
        }
        let raw = (v * (self.frac_bits as f64).exp2()).round_ties_even();
        if raw < self.min_raw() as f64 || raw > self.max_raw() as f64 {
            return Err(Error::param(
                "fixed-point operand",
                format!(
                    "{v} is outside the Q{}.{} range",
                    self.total_bits, self.frac_bits
                ),
            ));
        }
        Ok(raw as i64)
    }

    pub fn to_f64(&self, raw: i64) -> f64 {
        raw as f64 * self.resolution()
    }

    /// Product of two raw values, rounded back to `frac_bits`, ties to even.
    pub fn mul(&self, a: i64, b: i64) -> i64 {
        shift_round_even(a as i128 * b as i128, self.frac_bits) as i64
    }
}

fn shift_round_even(x: i128, shift: u32) -> i128 {
    let q = x >> shift; // floor
    let rem = x - (q << shift);
    let half = 1i128 << (shift - 1);
    if rem > half || (rem == half && q & 1 == 1) {
        q + 1
    } else {
        q
    }
}

/// `tanh` sampled at `lut_size + 1` evenly spaced points over `[−4, 4]`,
/// read back by nearest entry. Arguments beyond the range clamp to the end
/// entries.
#[derive(Debug, Clone, PartialEq)]
pub struct TanhLut {
    entries: Vec<f64>,
}

impl TanhLut {
    pub const RANGE: f64 = 4.0;

    pub fn new(lut_size: usize) -> Result<Self> {
        if lut_size < 2 {
            return Err(Error::param("lut_size", "must be at least 2"));
        }
        let step = 2.0 * Self::RANGE / lut_size as f64;
        Ok(Self {
            entries: (0..=lut_size)
                .map(|i| (-Self::RANGE + i as f64 * step).tanh())
                .collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn address(&self, z: f64) -> usize {
        let n = self.size() as f64;
        let a = ((z + Self::RANGE) * n / (2.0 * Self::RANGE)).round();
        a.clamp(0.0, n) as usize
    }

    pub fn lookup(&self, z: f64) -> f64 {
        self.entries[self.address(z)]
    }

    /// Worst-case lookup error inside the range: half a step, since
    /// `|tanh'| ≤ 1`.
    pub fn error_bound(&self) -> f64 {
        Self::RANGE / self.size() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DigitalOutput {
    /// `w·x + b` as computed in fixed point.
    pub z: f64,
    pub activation: f64,
}

/// `tanh(w·x + b)` evaluated the way a PROD+SUM block and an activation
/// table would: operands quantized, products rounded to the format, the sum
/// accumulated in the format with overflow reported as
/// [`Error::Saturation`], then a table lookup.
pub fn digital_neuron_eval(
    weights: &[f64],
    inputs: &[f64],
    bias: f64,
    fmt: FixedPointFormat,
    lut: &TanhLut,
) -> Result<DigitalOutput> {
    fmt.validate()?;
    if weights.len() != inputs.len() {
        return Err(Error::dims("digital neuron", weights.len(), inputs.len()));
    }
    let mut acc = fmt.quantize(bias)?;
    for (&w, &x) in weights.iter().zip(inputs) {
        acc += fmt.mul(fmt.quantize(w)?, fmt.quantize(x)?);
        if !fmt.in_range(acc) {
            return Err(Error::Saturation(format!(
                "accumulator left the Q{}.{} range",
                fmt.total_bits, fmt.frac_bits
            )));
        }
    }
    let z = fmt.to_f64(acc);
    Ok(DigitalOutput {
        z,
        activation: lut.lookup(z),
    })
}

/// Error bound of [`digital_neuron_eval`] against `tanh(w·x + b)` in
/// double precision: `2^−frac · len(weights) + 4/lut_size`.
pub fn digital_error_bound(n_inputs: usize, fmt: FixedPointFormat, lut: &TanhLut) -> f64 {
    fmt.resolution() * n_inputs as f64 + lut.error_bound()
}

/// Maximal-length taps for a 16-bit register.
pub const LFSR_TAPS: u16 = 0xB400;

/// One Fibonacci step: the feedback bit is the parity of `state & taps`, the
/// register shifts left and the feedback enters at bit 0. Returns the bit
/// shifted out of bit 15 and the new state.
pub fn lfsr_next(state: u16, taps: u16) -> Result<(bool, u16)> {
    if state == 0 {
        return Err(Error::param(
            "lfsr state",
            "the all-zero state locks up the register",
        ));
    }
    let fb = (state & taps).count_ones() & 1;
    Ok((state >> 15 == 1, (state << 1) | fb as u16))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lfsr {
    state: u16,
    taps: u16,
}

impl Lfsr {
    pub fn new(seed: u16, taps: u16) -> Result<Self> {
        lfsr_next(seed, taps)?;
        Ok(Self { state: seed, taps })
    }

    pub fn state(&self) -> u16 {
        self.state
    }

    pub fn next_bit(&mut self) -> bool {
        let (bit, s) = lfsr_next(self.state, self.taps).expect("nonzero state is preserved");
        self.state = s;
        bit
    }

    /// `bits` output bits packed MSB first.
    pub fn next_word(&mut self, bits: u32) -> u32 {
        (0..bits).fold(0, |acc, _| (acc << 1) | self.next_bit() as u32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_ties_to_even() {
        assert_eq!(shift_round_even(0b1_1000, 4), 2); // 1.5 -> 2
        assert_eq!(shift_round_even(0b10_1000, 4), 2); // 2.5 -> 2
        assert_eq!(shift_round_even(-0b1_1000, 4), -2);
        assert_eq!(shift_round_even(-0b10_1000, 4), -2);
        assert_eq!(shift_round_even(0b1_1001, 4), 2);
    }

    #[test]
    fn formats_are_validated() {
        assert!(FixedPointFormat::new(16, 12).is_ok());
        assert!(FixedPointFormat::new(16, 16).is_err());
        assert!(FixedPointFormat::new(33, 12).is_err());
        assert!(FixedPointFormat::new(8, 0).is_err());
    }

    #[test]
    fn quantize_rejects_out_of_range() {
        let f = FixedPointFormat::default();
        assert_eq!(f.quantize(7.999).unwrap(), 32764);
        assert!(f.quantize(8.0).is_err());
        assert_eq!(f.quantize(-8.0).unwrap(), -32768);
    }

    #[test]
    fn overflow_is_reported() {
        let f = FixedPointFormat::default();
        let lut = TanhLut::new(1024).unwrap();
        let r = digital_neuron_eval(&[7.0, 7.0], &[1.0, 1.0], 0.0, f, &lut);
        assert!(matches!(r, Err(Error::Saturation(_))));
    }

    #[test]
    fn lut_clamps_and_centres() {
        let lut = TanhLut::new(1024).unwrap();
        assert_eq!(lut.lookup(0.0), 0.0);
        assert_eq!(lut.lookup(100.0), 4f64.tanh());
        assert_eq!(lut.lookup(-100.0), -(4f64.tanh()));
    }

    #[test]
    fn zero_state_is_rejected() {
        assert!(lfsr_next(0, LFSR_TAPS).is_err());
        assert!(Lfsr::new(0, LFSR_TAPS).is_err());
    }
}
