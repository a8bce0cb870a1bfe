//! Online sequence memory: one encoder and memory per scalar stream.

mod encoder;
mod memory;
mod track;

pub use encoder::{overlap, ScalarEncoder};
pub use memory::{SegmentRecord, TemporalMemory, TmCheckpoint, TmParams, TmStepResult};
pub use track::{alarm_events, encode_columns, predict_value, track_variable, Track};
