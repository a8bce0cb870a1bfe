//! Scalar → sparse bit-run encoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Encodes a value as a contiguous run of `w` active bits out of
/// `buckets + w − 1`, starting at its bucket index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarEncoder {
    pub min: f64,
    pub max: f64,
    pub buckets: usize,
    pub w: usize,
}

impl ScalarEncoder {
    pub fn new(min: f64, max: f64, buckets: usize, w: usize) -> Result<Self> {
        let e = Self {
            min,
            max,
            buckets,
            w,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.max > self.min) {
            return Err(Error::param("min/max", "need finite min < max"));
        }
        if self.w == 0 || self.w > self.buckets {
            return Err(Error::param("w", "must satisfy 1 <= w <= buckets"));
        }
        if self.buckets < 2 {
            return Err(Error::param("buckets", "need at least two"));
        }
        Ok(())
    }

    pub fn total_bits(&self) -> usize {
        self.buckets + self.w - 1
    }

    pub fn bucket_width(&self) -> f64 {
        (self.max - self.min) / (self.buckets - 1) as f64
    }

    /// Bucket of `v` after clamping to `[min, max]`.
    pub fn bucket(&self, v: f64) -> Result<usize> {
        if !v.is_finite() {
            return Err(Error::NonFinite("encoder input"));
        }
        let v = v.clamp(self.min, self.max);
        let b =
            ((v - self.min) / (self.max - self.min) * (self.buckets - 1) as f64).floor() as usize;
        Ok(b.min(self.buckets - 1))
    }

    /// Active bit indices, ascending.
    pub fn encode(&self, v: f64) -> Result<Vec<usize>> {
        let b = self.bucket(v)?;
        Ok((b..b + self.w).collect())
    }

    /// Representative value of a bucket: its midpoint, clamped to the range.
    pub fn bucket_center(&self, b: usize) -> f64 {
        (self.min + (b as f64 + 0.5) * self.bucket_width()).min(self.max)
    }

    /// Decodes a set of active bits: the overlap-weighted mean of the centres
    /// of the buckets whose encodings overlap the set within one bit of the
    /// best overlap. `None` when nothing overlaps.
    pub fn decode(&self, active: &[bool]) -> Option<f64> {
        let bit = |i: usize| active.get(i).copied().unwrap_or(false) as usize;
        let mut window: usize = (0..self.w).map(bit).sum();
        let mut overlaps = Vec::with_capacity(self.buckets);
        for b in 0..self.buckets {
            if b > 0 {
                window = window - bit(b - 1) + bit(b + self.w - 1);
            }
            overlaps.push(window);
        }
        let best = *overlaps.iter().max()?;
        if best == 0 {
            return None;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (b, &o) in overlaps.iter().enumerate() {
            if o + 1 >= best {
                num += o as f64 * self.bucket_center(b);
                den += o as f64;
            }
        }
        Some(num / den)
    }
}

pub fn overlap(a: &[usize], b: &[usize]) -> usize {
    a.iter().filter(|x| b.contains(x)).count()
}
