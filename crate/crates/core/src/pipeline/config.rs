//! Run configuration: one JSON document with a section per stage.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::channel::ChannelSpec;
use super::scene::{PhaseJump, TrajectorySpec};
use crate::error::{Error, Result};
use crate::hardware::{FixedPointFormat, HardwareReadoutConfig, MagnetParams};
use crate::reservoir::ReservoirParams;
use crate::spatial::dataset::{DatasetConfig, MiningConfig};
use crate::spatial::{SearchGrid, TrainConfig};
use crate::temporal::{ScalarEncoder, TmParams};

/// The bundled default configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../../configs/default.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub scene: TrajectorySpec,
    pub channel: ChannelConfig,
    pub reservoir: ReservoirParams,
    pub spatial: SpatialConfig,
    pub temporal: TemporalConfig,
    pub hardware: HardwareConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub model: ChannelSpec,
    /// Symbols in the equalization task.
    pub length: usize,
    /// Leading symbols used for training; the rest are the test segment.
    pub train: usize,
    /// Symbol amplitude of the bipolar source.
    pub amplitude: f64,
    /// Pass every pixel's time series through the channel and the trained
    /// equalizer before tracking.
    pub filter_frames: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialConfig {
    pub grid: SearchGrid,
    pub dataset: DatasetConfig,
    pub training: TrainConfig,
    pub mining: MiningConfig,
    /// Pretrained detector JSON, relative to the config file. `null` trains
    /// one from `dataset`/`training`/`mining`.
    pub model: Option<String>,
    /// Feed each frame's tuple to the next frame as the search prior.
    pub use_prior: bool,
    /// Leading frames also searched exhaustively, to measure the cost the
    /// prior saves.
    pub exhaustive_frames: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalSource {
    /// The scene's analytic trajectory over `steps` frames, with `jump`.
    GroundTruth,
    /// The tuples produced by the tracking stage.
    Tracked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalConfig {
    pub source: TemporalSource,
    pub steps: usize,
    pub jump: Option<PhaseJump>,
    pub memory: TmParams,
    pub encoders: VariableEncoders,
    /// Anomaly at or above which a step is an alarming event.
    pub alarm_threshold: f64,
    /// Steps excluded from event reporting while the memories learn.
    pub warmup: usize,
    /// Trailing steps averaged for the steady-state anomaly.
    pub tail: usize,
    /// Steps after the jump that count as the jump region.
    pub jump_window: usize,
}

/// One encoder per motion variable, in tuple order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableEncoders {
    pub x: ScalarEncoder,
    pub y: ScalarEncoder,
    pub h: ScalarEncoder,
    pub w: ScalarEncoder,
    pub theta: ScalarEncoder,
    pub phi_x: ScalarEncoder,
    pub phi_y: ScalarEncoder,
}

pub const VARIABLES: [&str; 7] = ["x", "y", "h", "w", "theta", "phi_x", "phi_y"];

impl VariableEncoders {
    pub fn all(&self) -> [&ScalarEncoder; 7] {
        [
            &self.x,
            &self.y,
            &self.h,
            &self.w,
            &self.theta,
            &self.phi_x,
            &self.phi_y,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareConfig {
    pub magnet: MagnetParams,
    pub mtj: MtjDemo,
    pub retention: RetentionDemo,
    pub crossbar: HardwareReadoutConfig,
    pub digital: DigitalDemo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MtjDemo {
    pub kappa: f64,
    pub input_min: f64,
    pub input_max: f64,
    pub input_step: f64,
    pub samples_per_point: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetentionDemo {
    pub u_min: f64,
    pub u_max: f64,
    pub u_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DigitalDemo {
    pub format: FixedPointFormat,
    pub lut_size: usize,
    pub inputs: usize,
    pub instances: usize,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn bundled() -> Self {
        Self::from_json(DEFAULT_CONFIG).expect("bundled config is valid")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.channel.model.validate()?;
        if self.channel.train == 0 || self.channel.train >= self.channel.length {
            return Err(Error::param("channel.train", "must lie in [1, length)"));
        }
        if !(self.channel.amplitude > 0.0 && self.channel.amplitude.is_finite()) {
            return Err(Error::param("channel.amplitude", "must be positive"));
        }
        self.reservoir.validate()?;
        self.spatial.grid.validate()?;
        self.spatial.dataset.validate()?;
        let t = &self.temporal;
        t.memory.validate()?;
        for (name, e) in VARIABLES.iter().zip(t.encoders.all()) {
            e.validate()?;
            if e.total_bits() > t.memory.columns {
                return Err(Error::param(
                    "temporal.encoders",
                    format!(
                        "encoder `{name}` needs {} columns, memory has {}",
                        e.total_bits(),
                        t.memory.columns
                    ),
                ));
            }
        }
        if t.source == TemporalSource::GroundTruth && t.steps < 100 {
            return Err(Error::param("temporal.steps", "need at least 100 steps"));
        }
        if !(0.0..=1.0).contains(&t.alarm_threshold) {
            return Err(Error::param(
                "temporal.alarm_threshold",
                "must lie in [0, 1]",
            ));
        }
        self.hardware.magnet.validate()?;
        if self.hardware.mtj.samples_per_point == 0 {
            return Err(Error::param(
                "hardware.mtj.samples_per_point",
                "must be at least 1",
            ));
        }
        self.hardware.digital.format.validate()?;
        Ok(())
    }
}
