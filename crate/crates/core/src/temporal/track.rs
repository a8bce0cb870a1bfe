//! Interleaved learn-and-predict over a scalar series.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::encoder::ScalarEncoder;
use super::memory::TemporalMemory;
use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Decodes the memory's current predictive columns into a value.
pub fn predict_value(tm: &TemporalMemory, enc: &ScalarEncoder) -> Option<f64> {
    let mut bits = vec![false; enc.total_bits()];
    for c in tm.predictive_columns() {
        if c < bits.len() {
            bits[c] = true;
        }
    }
    enc.decode(&bits)
}

/// Encodes a value into the memory's column space.
pub fn encode_columns(tm: &TemporalMemory, enc: &ScalarEncoder, v: f64) -> Result<Vec<usize>> {
    if enc.total_bits() > tm.params().columns {
        return Err(Error::dims(
            "encode_columns",
            tm.params().columns,
            enc.total_bits(),
        ));
    }
    enc.encode(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub actual: TimeSeries,
    /// One-step-ahead prediction made before each sample was seen.
    pub predicted: TimeSeries,
    pub anomaly: TimeSeries,
}

/// Single learning pass. At each step the prediction is read first (falling
/// back to the previous sample, or the first sample at t = 0), then the sample
/// is presented with learning on.
pub fn track_variable(
    samples: &TimeSeries,
    enc: &ScalarEncoder,
    tm: &mut TemporalMemory,
) -> Result<Track> {
    if samples.is_empty() {
        return Err(Error::param("samples", "empty series"));
    }
    let xs = samples.samples();
    let mut predicted = Vec::with_capacity(xs.len());
    let mut anomaly = Vec::with_capacity(xs.len());
    for (t, &x) in xs.iter().enumerate() {
        let fallback = xs[t.saturating_sub(1)];
        predicted.push(predict_value(tm, enc).unwrap_or(fallback));
        let cols = encode_columns(tm, enc, x)?;
        anomaly.push(tm.step(&cols, true)?.anomaly);
    }
    Ok(Track {
        actual: samples.clone(),
        predicted: TimeSeries::new(predicted, samples.dt())?,
        anomaly: TimeSeries::new(anomaly, samples.dt())?,
    })
}

/// Steps at or after `warmup` whose anomaly reaches `threshold`.
pub fn alarm_events(anomaly: &[f64], threshold: f64, warmup: usize) -> Vec<usize> {
    anomaly
        .iter()
        .enumerate()
        .skip(warmup)
        .filter(|(_, &a)| a >= threshold)
        .map(|(t, _)| t)
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    t: f64,
    actual: f64,
    predicted: f64,
    anomaly: f64,
}

impl Track {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let dt = self.actual.dt();
        let rows = self
            .actual
            .samples()
            .iter()
            .zip(self.predicted.samples())
            .zip(self.anomaly.samples());
        for (i, ((&actual, &predicted), &anomaly)) in rows.enumerate() {
            wtr.serialize(TraceRow {
                t: i as f64 * dt,
                actual,
                predicted,
                anomaly,
            })?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "actual", "predicted", "anomaly"] {
            return Err(Error::Format {
                format: "trace CSV",
                reason: "expected header `t,actual,predicted,anomaly`".into(),
            });
        }
        let rows: Vec<TraceRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        let dt = if rows.len() >= 2 {
            rows[1].t - rows[0].t
        } else {
            1.0
        };
        let col = |f: fn(&TraceRow) -> f64| TimeSeries::new(rows.iter().map(f).collect(), dt);
        Ok(Self {
            actual: col(|r| r.actual)?,
            predicted: col(|r| r.predicted)?,
            anomaly: col(|r| r.anomaly)?,
        })
    }
}
