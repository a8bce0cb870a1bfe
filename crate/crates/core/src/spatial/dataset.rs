//! Synthetic labeled patches for training the classifier.
//!
//! Detector samples are cut from rendered frames with the same sampler the
//! search uses, so training and inference see identical interpolation.
//! Positives are boxes within half a grid step of the true pose. Clear
//! misalignments and empty regions are labeled background. Boxes in
//! between are not sampled.

use serde::{Deserialize, Serialize};

use super::geometry::BoxGeom;
use super::net::{ConvNet, Sample, TrainConfig, TrainReport, BACKGROUND};
use super::render::{render_shape, Shape};
use super::search::{propose_regions, sample_region, Scorer, SearchGrid, SpatialTuple};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub samples: usize,
    pub frame_size: usize,
    pub size_min: f64,
    pub size_max: f64,
    /// Object rotation is drawn from `±theta_max` degrees.
    pub theta_max: f64,
    /// Object skews are drawn from `±phi_max` degrees.
    pub phi_max: f64,
    /// Standard deviation of additive pixel noise.
    pub noise_std: f64,
    pub positive_fraction: f64,
    pub background_fraction: f64,
    /// Conv kernels of the detector network.
    pub n_kernels: usize,
    /// Context margin around each box, as a fraction of its side.
    pub context: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            samples: 6000,
            frame_size: 64,
            size_min: 8.0,
            size_max: 32.0,
            theta_max: 45.0,
            phi_max: 20.0,
            noise_std: 0.02,
            positive_fraction: 0.4,
            background_fraction: 0.2,
            n_kernels: ConvNet::KERNELS,
            context: 0.35,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::param("samples", "must be at least 1"));
        }
        if !(self.size_min >= 2.0 && self.size_max >= self.size_min) {
            return Err(Error::param(
                "size_min/size_max",
                "need 2 <= size_min <= size_max",
            ));
        }
        if self.size_max * 1.5 > self.frame_size as f64 {
            return Err(Error::param(
                "frame_size",
                "too small for the largest object",
            ));
        }
        let f = self.positive_fraction + self.background_fraction;
        if !(self.positive_fraction >= 0.0 && self.background_fraction >= 0.0 && f <= 1.0) {
            return Err(Error::param(
                "fractions",
                "must be >= 0 and sum to at most 1",
            ));
        }
        if !(self.context >= 0.0 && self.context.is_finite()) {
            return Err(Error::param("context", "must be finite and non-negative"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::param("noise_std", "must be >= 0"));
        }
        Ok(())
    }
}

/// Class list of the detector: background, then the shape tags.
pub fn detector_classes() -> Vec<String> {
    let mut c = vec![BACKGROUND.to_string()];
    c.extend(Shape::ALL.iter().map(|s| s.tag().to_string()));
    c
}

fn add_noise(frame: &mut Frame, std: f64, rng: &mut RngStream) {
    if std == 0.0 {
        return;
    }
    for y in 0..frame.height() {
        for x in 0..frame.width() {
            let v = frame.get(x, y) + std * rng.gaussian();
            frame.set(x, y, v.clamp(0.0, 1.0));
        }
    }
}

/// Where a box pose falls relative to the true pose of an object.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    /// Within half a search-grid step in every variable.
    Positive,
    /// Between the two bands; never used for training.
    Ambiguous,
    /// Grossly misaligned in at least one variable.
    Negative,
}

/// Classifies a box pose against the true pose of `shape`. Offsets are
/// relative to the object side. Square rotations compare modulo 90°; disk
/// rotations are ignored.
pub fn pose_band(truth: &BoxGeom, shape: Shape, b: &BoxGeom) -> Band {
    let s = truth.w.max(1e-9);
    let dx = (b.x - truth.x).abs() / s;
    let dy = (b.y - truth.y).abs() / s;
    let k = (b.w / s).ln().abs();
    let dtheta = match shape {
        Shape::Square => {
            let d = (b.theta - truth.theta).rem_euclid(90.0);
            d.min(90.0 - d)
        }
        Shape::Disk => 0.0,
    };
    let dphi = (b.phi_x - truth.phi_x)
        .abs()
        .max((b.phi_y - truth.phi_y).abs());
    if dx >= 0.3 || dy >= 0.3 || k >= 1.45f64.ln() || dtheta >= 20.0 || dphi >= 12.0 {
        Band::Negative
    } else if dx <= 0.15 && dy <= 0.15 && k <= 1.25f64.ln() && dtheta <= 7.5 && dphi <= 5.0 {
        Band::Positive
    } else {
        Band::Ambiguous
    }
}

/// Pose error within the positive band.
fn jitter(truth: &BoxGeom, rng: &mut RngStream) -> BoxGeom {
    let s = truth.w;
    let k = rng.uniform_range(0.8f64.ln(), 1.25f64.ln()).exp();
    BoxGeom {
        x: truth.x + rng.uniform_range(-0.15, 0.15) * s,
        y: truth.y + rng.uniform_range(-0.15, 0.15) * s,
        w: s * k,
        h: s * k,
        theta: truth.theta + rng.uniform_range(-7.5, 7.5),
        phi_x: truth.phi_x + rng.uniform_range(-5.0, 5.0),
        phi_y: truth.phi_y + rng.uniform_range(-5.0, 5.0),
    }
}

/// A box drawn around the object, wide or near, rejected until it lands in
/// the negative band.
fn misalign(truth: &BoxGeom, shape: Shape, rng: &mut RngStream) -> BoxGeom {
    let s = truth.w;
    loop {
        let near = rng.bernoulli(0.5);
        let (off, k_lo, k_hi) = if near {
            (0.5, 0.6, 1.7)
        } else {
            (0.9, 0.4, 2.5)
        };
        let k = rng.uniform_range(f64::ln(k_lo), f64::ln(k_hi)).exp();
        let g = BoxGeom {
            x: truth.x + rng.uniform_range(-off, off) * s,
            y: truth.y + rng.uniform_range(-off, off) * s,
            w: s * k,
            h: s * k,
            theta: if near {
                truth.theta + rng.uniform_range(-30.0, 30.0)
            } else {
                rng.uniform_range(-45.0, 45.0)
            },
            phi_x: rng.uniform_range(-20.0, 20.0),
            phi_y: rng.uniform_range(-20.0, 20.0),
        };
        if pose_band(truth, shape, &g) == Band::Negative {
            return g;
        }
    }
}

/// Random object pose fully inside a `frame_size` frame.
fn random_object(cfg: &DatasetConfig, rng: &mut RngStream) -> BoxGeom {
    let s = rng.uniform_range(cfg.size_min, cfg.size_max);
    let mut g = BoxGeom {
        x: 0.0,
        y: 0.0,
        w: s,
        h: s,
        theta: rng.uniform_range(-cfg.theta_max, cfg.theta_max),
        phi_x: rng.uniform_range(-cfg.phi_max, cfg.phi_max),
        phi_y: rng.uniform_range(-cfg.phi_max, cfg.phi_max),
    };
    let (x0, y0, x1, y1) = g.bounds();
    let f = cfg.frame_size as f64;
    g.x = rng.uniform_range(-x0, (f - x1).max(-x0 + 1e-9));
    g.y = rng.uniform_range(-y0, (f - y1).max(-y0 + 1e-9));
    g
}

/// Patches for the region classifier, labeled against
/// [`detector_classes`].
pub fn detector_dataset(cfg: &DatasetConfig, rng: &mut RngStream) -> Result<Vec<Sample>> {
    cfg.validate()?;
    let classes = detector_classes();
    let label_of = |shape: Shape| {
        classes
            .iter()
            .position(|c| c == shape.tag())
            .expect("shape class")
    };
    let mut out = Vec::with_capacity(cfg.samples);
    let mut patch = Vec::new();
    for _ in 0..cfg.samples {
        let shape = Shape::ALL[rng.below(Shape::ALL.len())];
        let truth = random_object(cfg, rng);
        let mut frame = Frame::zeros(cfg.frame_size, cfg.frame_size);
        let intensity = rng.uniform_range(0.8, 1.0);
        let draw = rng.uniform();
        let (geom, label) = if draw < cfg.positive_fraction {
            render_shape(&mut frame, shape, &truth, intensity, 4);
            (jitter(&truth, rng), label_of(shape))
        } else if draw < cfg.positive_fraction + cfg.background_fraction {
            let s = rng.uniform_range(cfg.size_min, cfg.size_max);
            let f = cfg.frame_size as f64;
            let g = BoxGeom {
                x: rng.uniform_range(s / 2.0, f - s / 2.0),
                y: rng.uniform_range(s / 2.0, f - s / 2.0),
                w: s,
                h: s,
                theta: rng.uniform_range(-45.0, 45.0),
                phi_x: rng.uniform_range(-20.0, 20.0),
                phi_y: rng.uniform_range(-20.0, 20.0),
            };
            (g, 0)
        } else {
            render_shape(&mut frame, shape, &truth, intensity, 4);
            (misalign(&truth, shape, rng), 0)
        };
        add_noise(&mut frame, cfg.noise_std, rng);
        sample_region(&frame, &geom, ConvNet::INPUT, cfg.context, &mut patch);
        out.push(Sample {
            patch: patch.clone(),
            label,
        });
    }
    Ok(out)
}

/// Centred squares (label 0) and disks (label 1) rendered straight into
/// `16 × 16` patches, for the two-class separability check.
pub fn shape_patches(n: usize, rng: &mut RngStream) -> Vec<Sample> {
    let side = ConvNet::INPUT;
    (0..n)
        .map(|_| {
            let label = rng.below(2);
            let shape = Shape::ALL[label];
            let c = side as f64 / 2.0;
            let s = rng.uniform_range(8.0, 14.0);
            let g = BoxGeom {
                x: c + rng.uniform_range(-1.0, 1.0),
                y: c + rng.uniform_range(-1.0, 1.0),
                w: s,
                h: s,
                theta: rng.uniform_range(-45.0, 45.0),
                phi_x: 0.0,
                phi_y: 0.0,
            };
            let mut f = Frame::zeros(side, side);
            render_shape(&mut f, shape, &g, rng.uniform_range(0.7, 1.0), 4);
            add_noise(&mut f, 0.02, rng);
            Sample {
                patch: f.pixels().to_vec(),
                label,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiningConfig {
    pub rounds: usize,
    /// Rendered frames searched per round.
    pub frames: usize,
    /// Grid poses scored per frame, drawn from the prior window of the
    /// true pose.
    pub candidates_per_frame: usize,
    /// Highest-scoring poses kept per frame and relabeled by band.
    pub keep_per_frame: usize,
    /// Training epochs after each round.
    pub epochs: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            rounds: 2,
            frames: 200,
            candidates_per_frame: 1000,
            keep_per_frame: 8,
            epochs: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectorReport {
    pub train: TrainReport,
    /// Samples added by each mining round.
    pub mined: Vec<usize>,
    pub dataset_size: usize,
}

/// Random object frames searched with the current net: the top-scoring grid
/// poses near each object become new samples labeled by [`pose_band`].
fn mine(
    net: &ConvNet,
    cfg: &DatasetConfig,
    mining: &MiningConfig,
    grid: &SearchGrid,
    rng: &mut RngStream,
) -> Vec<Sample> {
    let mut out = Vec::new();
    let mut scorer = Scorer::default();
    let mut patch = Vec::new();
    let label_of = |shape: Shape| {
        net.classes
            .iter()
            .position(|c| c == shape.tag())
            .expect("shape class")
    };
    for _ in 0..mining.frames {
        let shape = Shape::ALL[rng.below(Shape::ALL.len())];
        let truth = random_object(cfg, rng);
        let mut frame = Frame::zeros(cfg.frame_size, cfg.frame_size);
        render_shape(&mut frame, shape, &truth, rng.uniform_range(0.8, 1.0), 4);
        add_noise(&mut frame, cfg.noise_std, rng);
        let prior = SpatialTuple::from_geom(shape.tag(), 1.0, &truth);
        let boxes = propose_regions(cfg.frame_size, cfg.frame_size, grid, Some(&prior));
        let mut scored: Vec<(f64, BoxGeom)> = (0..mining.candidates_per_frame)
            .map(|_| {
                let b = boxes[rng.below(boxes.len())];
                let g = b.geom(
                    grid.thetas[rng.below(grid.thetas.len())],
                    grid.phis[rng.below(grid.phis.len())],
                    grid.phis[rng.below(grid.phis.len())],
                );
                (scorer.score(net, &frame, &g).log_odds, g)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        for (_, g) in scored.iter().take(mining.keep_per_frame) {
            let label = match pose_band(&truth, shape, g) {
                Band::Positive => label_of(shape),
                Band::Negative => 0,
                Band::Ambiguous => continue,
            };
            sample_region(&frame, g, net.input_size(), net.context(), &mut patch);
            out.push(Sample {
                patch: patch.clone(),
                label,
            });
        }
    }
    out
}

/// Draws a detector dataset, trains a fresh classifier on it, then runs
/// hard-example mining rounds against `grid`.
pub fn train_detector(
    data_cfg: &DatasetConfig,
    train_cfg: &TrainConfig,
    mining: &MiningConfig,
    grid: &SearchGrid,
    rng: &mut RngStream,
) -> Result<(ConvNet, DetectorReport)> {
    grid.validate()?;
    let mut data = detector_dataset(data_cfg, &mut rng.substream(rng.stream().wrapping_add(1)))?;
    let mut net = ConvNet::random_with_kernels(detector_classes(), data_cfg.n_kernels, rng)?;
    net.set_context(data_cfg.context)?;
    let mut report = net.train(&data, train_cfg, rng)?;
    let mut mined = Vec::with_capacity(mining.rounds);
    for round in 0..mining.rounds {
        let mut mrng = rng.substream(rng.stream().wrapping_add(2 + round as u64));
        let extra = mine(&net, data_cfg, mining, grid, &mut mrng);
        log::debug!("mining round {round}: {} samples", extra.len());
        mined.push(extra.len());
        data.extend(extra);
        let cfg = TrainConfig {
            epochs: mining.epochs,
            ..train_cfg.clone()
        };
        let r = net.train(&data, &cfg, rng)?;
        report.final_loss = r.final_loss;
        report.epoch_losses.extend(r.epoch_losses);
    }
    Ok((
        net,
        DetectorReport {
            train: report,
            mined,
            dataset_size: data.len(),
        },
    ))
}
