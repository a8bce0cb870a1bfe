//! Parametric single-object scenes with exact ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::rng::RngStream;
use crate::spatial::geometry::BoxGeom;
use crate::spatial::render::{render_shape, Shape};
use crate::spatial::search::SpatialTuple;

/// `amplitude · sin(2π·(t mod period)/period + phase)`.
///
/// The phase argument is reduced modulo the period before scaling, so
/// integer periods repeat bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sinusoid {
    pub amplitude: f64,
    /// Frames per cycle.
    pub period: f64,
    /// Radians.
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Signal {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<Sinusoid>,
}

impl Signal {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn sine(constant: f64, amplitude: f64, period: f64, phase: f64) -> Self {
        Self {
            constant,
            terms: vec![Sinusoid {
                amplitude,
                period,
                phase,
            }],
        }
    }

    /// Value at frame `t` with `extra_phase` added to every term.
    pub fn eval(&self, t: usize, extra_phase: f64) -> f64 {
        self.terms.iter().fold(self.constant, |acc, s| {
            let cycle = (t as f64).rem_euclid(s.period) / s.period;
            acc + s.amplitude * (std::f64::consts::TAU * cycle + s.phase + extra_phase).sin()
        })
    }

    /// Range bound `constant ± Σ|amplitude|`.
    pub fn envelope(&self) -> (f64, f64) {
        let a: f64 = self.terms.iter().map(|s| s.amplitude.abs()).sum();
        (self.constant - a, self.constant + a)
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        if !self.constant.is_finite() {
            return Err(Error::NonFinite(name));
        }
        for s in &self.terms {
            if !(s.amplitude.is_finite() && s.phase.is_finite()) {
                return Err(Error::NonFinite(name));
            }
            if !(s.period > 0.0 && s.period.is_finite()) {
                return Err(Error::param(name, "sinusoid period must be positive"));
            }
        }
        Ok(())
    }
}

/// A phase offset added to every sinusoid from `frame` onwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseJump {
    pub frame: usize,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub tag: Shape,
    pub x: Signal,
    pub y: Signal,
    pub h: Signal,
    pub w: Signal,
    pub theta: Signal,
    #[serde(default)]
    pub phi_x: Signal,
    #[serde(default)]
    pub phi_y: Signal,
    #[serde(default)]
    pub jump: Option<PhaseJump>,
    #[serde(default = "default_intensity")]
    pub intensity: f64,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default = "default_supersample")]
    pub supersample: usize,
}

fn default_intensity() -> f64 {
    1.0
}

fn default_supersample() -> usize {
    4
}

impl TrajectorySpec {
    /// 64×64 Lissajous square: `x = 32 + 16 sin(2πt/100)`,
    /// `y = 32 + 16 sin(4πt/100 + π/3)`, `h = w = 16 + 2 sin(2πt/80)`,
    /// `θ = 30 sin(2πt/120)`, no shear.
    pub fn lissajous(frames: usize) -> Self {
        let third = std::f64::consts::FRAC_PI_3;
        Self {
            frames,
            width: 64,
            height: 64,
            tag: Shape::Square,
            x: Signal::sine(32.0, 16.0, 100.0, 0.0),
            y: Signal::sine(32.0, 16.0, 50.0, third),
            h: Signal::sine(16.0, 2.0, 80.0, 0.0),
            w: Signal::sine(16.0, 2.0, 80.0, 0.0),
            theta: Signal::sine(0.0, 30.0, 120.0, 0.0),
            phi_x: Signal::default(),
            phi_y: Signal::default(),
            jump: None,
            intensity: 1.0,
            noise_std: 0.0,
            supersample: 4,
        }
    }

    pub fn with_jump(mut self, frame: usize, phase: f64) -> Self {
        self.jump = Some(PhaseJump { frame, phase });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::param("frames", "need at least one frame"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::param("width", "frame must be non-empty"));
        }
        for (name, s) in [
            ("x", &self.x),
            ("y", &self.y),
            ("h", &self.h),
            ("w", &self.w),
            ("theta", &self.theta),
            ("phi_x", &self.phi_x),
            ("phi_y", &self.phi_y),
        ] {
            s.validate(name)?;
        }
        if let Some(j) = self.jump {
            if !j.phase.is_finite() {
                return Err(Error::NonFinite("jump phase"));
            }
        }
        if !(0.0..=1.0).contains(&self.intensity) {
            return Err(Error::param("intensity", "must lie in [0, 1]"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::param("noise_std", "must be finite and non-negative"));
        }
        if self.supersample == 0 {
            return Err(Error::param("supersample", "must be positive"));
        }
        Ok(())
    }

    pub fn geom_at(&self, t: usize) -> BoxGeom {
        let extra = match self.jump {
            Some(j) if t >= j.frame => j.phase,
            _ => 0.0,
        };
        BoxGeom {
            x: self.x.eval(t, extra),
            y: self.y.eval(t, extra),
            w: self.w.eval(t, extra),
            h: self.h.eval(t, extra),
            theta: self.theta.eval(t, extra),
            phi_x: self.phi_x.eval(t, extra),
            phi_y: self.phi_y.eval(t, extra),
        }
    }

    /// Ground-truth tuples for frames `0..n` (p = 1). Fails if any box leaves
    /// the frame or degenerates.
    pub fn ground_truth(&self, n: usize) -> Result<Vec<SpatialTuple>> {
        self.validate()?;
        (0..n)
            .map(|t| {
                let g = self.geom_at(t);
                if !(g.w > 0.0 && g.h > 0.0) {
                    return Err(Error::param(
                        "trajectory",
                        format!("non-positive size at frame {t}"),
                    ));
                }
                if !g.inside_frame(self.width, self.height) {
                    return Err(Error::param(
                        "trajectory",
                        format!("box leaves the frame at frame {t}"),
                    ));
                }
                let tuple = SpatialTuple::from_geom(self.tag.tag(), 1.0, &g);
                tuple.validate(self.width, self.height)?;
                Ok(tuple)
            })
            .collect()
    }

    pub fn render(&self, t: usize, rng: &mut RngStream) -> Frame {
        let mut f = Frame::zeros(self.width, self.height);
        render_shape(
            &mut f,
            self.tag,
            &self.geom_at(t),
            self.intensity,
            self.supersample,
        );
        if self.noise_std > 0.0 {
            f = Frame::from_fn(self.width, self.height, |x, y| {
                (f.get(x, y) + self.noise_std * rng.gaussian()).clamp(0.0, 1.0)
            });
        }
        f
    }
}

/// Renders every frame of the scene with its ground truth.
pub fn generate_scene(
    spec: &TrajectorySpec,
    rng: &mut RngStream,
) -> Result<(Vec<Frame>, Vec<SpatialTuple>)> {
    let truth = spec.ground_truth(spec.frames)?;
    let frames = (0..spec.frames).map(|t| spec.render(t, rng)).collect();
    Ok((frames, truth))
}
