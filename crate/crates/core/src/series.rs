//! Uniformly sampled scalar time series and its `t,value` CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    samples: Vec<f64>,
    dt: f64,
}

#[derive(Serialize, Deserialize)]
struct Row {
    t: f64,
    value: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("TimeSeries samples"));
        }
        Ok(Self { samples, dt })
    }

    /// Unit-interval series.
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, 1.0)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn nrmse_against(&self, target: &TimeSeries) -> Result<f64> {
        crate::metrics::nrmse(&self.samples, &target.samples)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for (i, &value) in self.samples.iter().enumerate() {
            wtr.serialize(Row {
                t: i as f64 * self.dt,
                value,
            })?;
        }
        if self.samples.is_empty() {
            wtr.write_record(["t", "value"])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a `t,value` CSV; `dt` is taken from the first two timestamps.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "value"] {
            return Err(Error::Format {
                format: "TimeSeries CSV",
                reason: format!(
                    "expected header `t,value`, got `{}`",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
        let rows: Vec<Row> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        let dt = if rows.len() >= 2 {
            rows[1].t - rows[0].t
        } else {
            1.0
        };
        Self::new(rows.into_iter().map(|r| r.value).collect(), dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariants_enforced() {
        assert!(TimeSeries::new(vec![1.0], 0.0).is_err());
        assert!(TimeSeries::new(vec![f64::NAN], 1.0).is_err());
        assert!(TimeSeries::new(vec![f64::INFINITY], 1.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s = TimeSeries::new(vec![0.5, -0.25, 1e-9, 3.0], 0.5).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,value\n0.0,0.5\n0.5,-0.25\n"));
        assert_eq!(TimeSeries::read_csv(&buf[..]).unwrap(), s);
    }

    #[test]
    fn csv_header_checked() {
        assert!(TimeSeries::read_csv(&b"time,v\n0,1\n"[..]).is_err());
    }
}
