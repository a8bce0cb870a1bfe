//! The pipeline stages: channel equalization, per-pixel frame filtering,
//! tuple tracking, temporal prediction and the hardware demonstrations.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::channel::{apply_channel, bipolar_sequence, ChannelSpec};
use super::config::{ChannelConfig, HardwareConfig, TemporalConfig, VARIABLES};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::hardware::{
    barrier_energy, digital_error_bound, digital_neuron_eval, fit_hardware_readout, grid,
    hardware_esn_readout, retention_sweep, retention_time, Barrier, HardwareReadoutConfig,
    MtjNeuron, RetentionPoint, TanhLut, TransferCurve,
};
use crate::linalg::Matrix;
use crate::metrics::{mean, nrmse};
use crate::reservoir::{Reservoir, ReservoirParams};
use crate::rng::RngStream;
use crate::series::TimeSeries;
use crate::spatial::{extract_tuple, iou, ConvNet, SearchGrid, Shape, SpatialTuple};
use crate::temporal::{alarm_events, track_variable, TemporalMemory, Track};

/// Clean bipolar source, its distorted version and the train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualizationTask {
    pub clean: TimeSeries,
    pub distorted: TimeSeries,
    pub train: usize,
}

impl EqualizationTask {
    pub fn generate(cfg: &ChannelConfig, rng: &mut RngStream) -> Result<Self> {
        let clean = TimeSeries::from_samples(bipolar_sequence(cfg.length, cfg.amplitude, rng))?;
        let distorted = apply_channel(
            &clean,
            &cfg.model,
            &mut rng.substream(rng.stream().wrapping_add(1)),
        )?;
        Ok(Self {
            clean,
            distorted,
            train: cfg.train,
        })
    }

    fn head(&self, ts: &TimeSeries) -> Result<TimeSeries> {
        TimeSeries::new(ts.samples()[..self.train].to_vec(), ts.dt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    /// Test-segment NRMSE of the equalized signal.
    pub nrmse: f64,
    /// Test-segment NRMSE of the distorted signal itself.
    pub baseline_nrmse: f64,
    pub train_samples: usize,
    pub test_samples: usize,
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub task: EqualizationTask,
    pub recovered: TimeSeries,
    pub reservoir: Reservoir,
    pub report: FilterReport,
}

/// Trains an equalizer on the leading `train` symbols and scores it on the
/// rest.
pub fn run_filter_stage(
    channel: &ChannelConfig,
    params: &ReservoirParams,
    task_rng: &mut RngStream,
    reservoir_rng: &mut RngStream,
) -> Result<FilterOutput> {
    let task = EqualizationTask::generate(channel, task_rng)?;
    let mut reservoir = Reservoir::fit_inverse_model(
        params.clone(),
        &task.head(&task.distorted)?,
        &task.head(&task.clean)?,
        reservoir_rng,
    )?;
    let recovered = reservoir.equalize(&task.distorted)?;
    let target = &task.clean.samples()[task.train..];
    let report = FilterReport {
        nrmse: nrmse(&recovered.samples()[task.train..], target)?,
        baseline_nrmse: nrmse(&task.distorted.samples()[task.train..], target)?,
        train_samples: task.train,
        test_samples: target.len(),
    };
    Ok(FilterOutput {
        task,
        recovered,
        reservoir,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelFilterReport {
    /// NRMSE of the sensor-distorted frames against the rendered ones.
    pub distorted_nrmse: f64,
    /// NRMSE of the equalized frames against the rendered ones.
    pub recovered_nrmse: f64,
    pub pixels: usize,
}

/// Steps of the first frame replayed before each pixel series, so the
/// channel history and the reservoir state start from a static scene.
pub const PIXEL_PRELUDE: usize = 50;

/// Treats every pixel's intensity over time as a signal: `p − ½` passes
/// through the channel (sensor distortion), is equalized by the trained
/// reservoir and mapped back with `+ ½`, clipped to `[0, 1]`.
pub fn filter_frames(
    frames: &[Frame],
    reservoir: &mut Reservoir,
    channel: &ChannelSpec,
    rng: &mut RngStream,
) -> Result<(Vec<Frame>, PixelFilterReport)> {
    let first = frames
        .first()
        .ok_or_else(|| Error::param("frames", "no frames to filter"))?;
    let (w, h) = (first.width(), first.height());
    if frames.iter().any(|f| f.width() != w || f.height() != h) {
        return Err(Error::dims(
            "filter_frames",
            format!("{w}x{h}"),
            "frames of mixed size",
        ));
    }
    let n = frames.len();
    let mut distorted_px = vec![0.0; w * h * n];
    let mut recovered_px = vec![0.0; w * h * n];
    let mut series = Vec::with_capacity(PIXEL_PRELUDE + n);
    for i in 0..w * h {
        series.clear();
        series.extend(std::iter::repeat_n(first.pixels()[i] - 0.5, PIXEL_PRELUDE));
        series.extend(frames.iter().map(|f| f.pixels()[i] - 0.5));
        let u = apply_channel(&TimeSeries::from_samples(series.clone())?, channel, rng)?;
        let y = reservoir.equalize(&u)?;
        for t in 0..n {
            distorted_px[t * w * h + i] = u.samples()[PIXEL_PRELUDE + t] + 0.5;
            recovered_px[t * w * h + i] = y.samples()[PIXEL_PRELUDE + t] + 0.5;
        }
    }
    let clean: Vec<f64> = frames
        .iter()
        .flat_map(|f| f.pixels().iter().copied())
        .collect();
    let report = PixelFilterReport {
        distorted_nrmse: nrmse(&distorted_px, &clean)?,
        recovered_nrmse: nrmse(&recovered_px, &clean)?,
        pixels: w * h,
    };
    let out = recovered_px
        .chunks_exact(w * h)
        .map(|c| Frame::new(w, h, c.iter().map(|v| v.clamp(0.0, 1.0)).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok((out, report))
}

/// `|θ̂ − θ|` in degrees, folded by the shape's rotational symmetry: 90°
/// for squares; disks have no orientation.
pub fn theta_error(tag: &str, estimate: f64, truth: f64) -> f64 {
    let period = match tag {
        t if t == Shape::Disk.tag() => return 0.0,
        t if t == Shape::Square.tag() => 90.0,
        _ => 360.0,
    };
    let d = (estimate - truth).rem_euclid(period);
    d.min(period - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariableErrors {
    pub x: f64,
    pub y: f64,
    pub h: f64,
    pub w: f64,
    pub theta: f64,
    pub phi_x: f64,
    pub phi_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TupleAccuracy {
    pub tag_accuracy: f64,
    pub mean_iou: f64,
    /// Fraction of frames with `|θ̂ − θ| ≤ 15°`.
    pub theta_within_15: f64,
    /// Mean absolute error per motion variable (θ folded by symmetry).
    pub mae: VariableErrors,
}

/// Scores tracked tuples against ground truth.
pub fn tuple_accuracy(tuples: &[SpatialTuple], truth: &[SpatialTuple]) -> Result<TupleAccuracy> {
    if tuples.len() != truth.len() || tuples.is_empty() {
        return Err(Error::dims("tuple_accuracy", truth.len(), tuples.len()));
    }
    let n = tuples.len() as f64;
    let mut sums = [0.0; 7];
    let (mut tags, mut ious, mut theta_ok) = (0usize, 0.0, 0usize);
    for (e, g) in tuples.iter().zip(truth) {
        if e.tag == g.tag {
            tags += 1;
        }
        ious += iou(&e.geom(), &g.geom());
        let dth = theta_error(&g.tag, e.theta, g.theta);
        if dth <= 15.0 {
            theta_ok += 1;
        }
        let (a, b) = (e.motion(), g.motion());
        for k in 0..7 {
            sums[k] += if k == 4 { dth } else { (a[k] - b[k]).abs() };
        }
    }
    let m = sums.map(|s| s / n);
    Ok(TupleAccuracy {
        tag_accuracy: tags as f64 / n,
        mean_iou: ious / n,
        theta_within_15: theta_ok as f64 / n,
        mae: VariableErrors {
            x: m[0],
            y: m[1],
            h: m[2],
            w: m[3],
            theta: m[4],
            phi_x: m[5],
            phi_y: m[6],
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub frames: usize,
    pub use_prior: bool,
    /// Classifier forward passes over the whole sequence.
    pub evaluations: usize,
    pub evaluations_per_frame: f64,
    /// Leading frames that were also searched without a prior.
    pub exhaustive_frames: usize,
    /// Mean forward passes of an exhaustive search over those frames.
    pub exhaustive_evaluations_per_frame: Option<f64>,
    /// `exhaustive_evaluations_per_frame / evaluations_per_frame`.
    pub evaluation_speedup: Option<f64>,
    pub accuracy: Option<TupleAccuracy>,
}

/// Wall-clock measurements, kept out of the reproducible report.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackingTiming {
    pub seconds_per_frame: f64,
    pub exhaustive_seconds_per_frame: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrackingOutput {
    pub tuples: Vec<SpatialTuple>,
    /// Forward passes spent on each frame.
    pub evaluations: Vec<usize>,
    pub report: TrackingReport,
    pub timing: TrackingTiming,
}

/// Extracts one tuple per frame. With `use_prior`, each non-background
/// tuple becomes the next frame's search prior. The first
/// `exhaustive_frames` frames are additionally searched without a prior to
/// measure what the prior saves.
pub fn run_tracking_stage(
    frames: &[Frame],
    truth: Option<&[SpatialTuple]>,
    net: &ConvNet,
    grid: &SearchGrid,
    use_prior: bool,
    exhaustive_frames: usize,
) -> Result<TrackingOutput> {
    if frames.is_empty() {
        return Err(Error::param("frames", "nothing to track"));
    }
    let start = Instant::now();
    let mut tuples = Vec::with_capacity(frames.len());
    let mut evaluations = Vec::with_capacity(frames.len());
    let mut prior: Option<SpatialTuple> = None;
    for f in frames {
        let e = extract_tuple(net, f, prior.as_ref(), grid)?;
        evaluations.push(e.evaluations);
        prior = (use_prior && !e.tuple.is_background()).then(|| e.tuple.clone());
        tuples.push(e.tuple);
    }
    let seconds_per_frame = start.elapsed().as_secs_f64() / frames.len() as f64;

    let k = if use_prior {
        exhaustive_frames.min(frames.len())
    } else {
        0
    };
    let (mut ex_evals, mut ex_secs) = (None, None);
    if k > 0 {
        let t0 = Instant::now();
        let mut total = 0usize;
        for f in &frames[..k] {
            total += extract_tuple(net, f, None, grid)?.evaluations;
        }
        ex_evals = Some(total as f64 / k as f64);
        ex_secs = Some(t0.elapsed().as_secs_f64() / k as f64);
    }
    let total: usize = evaluations.iter().sum();
    let per_frame = total as f64 / frames.len() as f64;
    let accuracy = truth.map(|t| tuple_accuracy(&tuples, t)).transpose()?;
    Ok(TrackingOutput {
        report: TrackingReport {
            frames: frames.len(),
            use_prior,
            evaluations: total,
            evaluations_per_frame: per_frame,
            exhaustive_frames: k,
            exhaustive_evaluations_per_frame: ex_evals,
            evaluation_speedup: ex_evals.map(|e| e / per_frame),
            accuracy,
        },
        timing: TrackingTiming {
            seconds_per_frame,
            exhaustive_seconds_per_frame: ex_secs,
        },
        tuples,
        evaluations,
    })
}

/// The seven motion variables of a tuple sequence as series.
pub fn motion_series(tuples: &[SpatialTuple]) -> Result<Vec<TimeSeries>> {
    (0..7)
        .map(|k| TimeSeries::from_samples(tuples.iter().map(|t| t.motion()[k]).collect()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableReport {
    pub name: String,
    /// Mean anomaly over the trailing `tail` steps.
    pub tail_mean_anomaly: f64,
    /// Steps after warm-up with anomaly at or above the alarm threshold.
    pub events: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalReport {
    pub steps: usize,
    pub tail: usize,
    pub warmup: usize,
    pub alarm_threshold: f64,
    pub jump: Option<usize>,
    pub variables: Vec<VariableReport>,
    /// Union of all variables' events, ascending.
    pub events: Vec<usize>,
    /// Events outside `[jump, jump + jump_window]`.
    pub events_outside_jump_region: usize,
    /// Steps from the jump to the first event at or after it.
    pub jump_detection_delay: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TemporalOutput {
    pub tracks: Vec<Track>,
    pub report: TemporalReport,
}

/// One memory per motion variable, each learning its own series online.
pub fn run_temporal_stage(
    series: &[TimeSeries],
    cfg: &TemporalConfig,
    jump: Option<usize>,
    rng: &RngStream,
) -> Result<TemporalOutput> {
    if series.len() != VARIABLES.len() {
        return Err(Error::dims("temporal stage", VARIABLES.len(), series.len()));
    }
    let steps = series[0].len();
    if steps < 100 || series.iter().any(|s| s.len() != steps) {
        return Err(Error::param(
            "tuples",
            "need at least 100 steps of equal length",
        ));
    }
    let mut tracks = Vec::with_capacity(series.len());
    let mut variables = Vec::with_capacity(series.len());
    for (k, ((name, enc), s)) in VARIABLES
        .iter()
        .zip(cfg.encoders.all())
        .zip(series)
        .enumerate()
    {
        let mut tm = TemporalMemory::new(
            cfg.memory.clone(),
            rng.substream(rng.stream().wrapping_add(k as u64)),
        )?;
        let track = track_variable(s, enc, &mut tm)?;
        let a = track.anomaly.samples();
        let tail = cfg.tail.clamp(1, steps);
        variables.push(VariableReport {
            name: name.to_string(),
            tail_mean_anomaly: mean(&a[steps - tail..]),
            events: alarm_events(a, cfg.alarm_threshold, cfg.warmup),
        });
        tracks.push(track);
    }
    let mut events: Vec<usize> = variables
        .iter()
        .flat_map(|v| v.events.iter().copied())
        .collect();
    events.sort_unstable();
    events.dedup();
    let in_region = |t: usize| jump.is_some_and(|j| t >= j && t <= j + cfg.jump_window);
    let report = TemporalReport {
        steps,
        tail: cfg.tail.clamp(1, steps),
        warmup: cfg.warmup,
        alarm_threshold: cfg.alarm_threshold,
        jump,
        events_outside_jump_region: events.iter().filter(|&&t| !in_region(t)).count(),
        jump_detection_delay: jump.and_then(|j| events.iter().find(|&&t| t >= j).map(|t| t - j)),
        variables,
        events,
    };
    Ok(TemporalOutput { tracks, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtjReport {
    pub kappa: f64,
    pub samples_per_point: usize,
    pub points: usize,
    /// Largest `|mean − tanh(κz)|` in binomial standard errors.
    pub max_z_score: f64,
    pub max_abs_deviation: f64,
    pub rms_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionReport {
    pub barrier_joules: f64,
    pub barrier_over_kt: f64,
    /// Retention of the configured magnet, or `None` if it saturates.
    pub magnet_retention_s: Option<f64>,
    /// `τ(U/kT = 1)`, which equals `e·τ₀`.
    pub one_kt_retention_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossbarReport {
    pub bits: Option<u32>,
    pub lambda: f64,
    /// Test NRMSE of the hardware readout fit with analog conductances.
    pub float_nrmse: f64,
    /// Test NRMSE of the same fit on quantized conductances.
    pub quantized_nrmse: f64,
    pub ratio: f64,
    /// Test NRMSE of the software readout, for reference.
    pub software_nrmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitalReport {
    pub total_bits: u32,
    pub frac_bits: u32,
    pub lut_size: usize,
    pub inputs: usize,
    pub instances: usize,
    pub max_error: f64,
    pub mean_error: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareReport {
    pub mtj: MtjReport,
    pub retention: RetentionReport,
    pub crossbar: CrossbarReport,
    pub digital: DigitalReport,
}

#[derive(Debug, Clone)]
pub struct HardwareOutput {
    pub curve: TransferCurve,
    pub retention: Vec<RetentionPoint>,
    pub report: HardwareReport,
}

pub fn mtj_demo(cfg: &HardwareConfig, rng: RngStream) -> Result<(TransferCurve, MtjReport)> {
    let m = &cfg.mtj;
    let inputs = grid(m.input_min, m.input_max, m.input_step)?;
    let curve = MtjNeuron::new(m.kappa, rng)?.transfer_curve(&inputs, m.samples_per_point)?;
    let report = MtjReport {
        kappa: m.kappa,
        samples_per_point: m.samples_per_point,
        points: curve.points.len(),
        max_z_score: curve.max_z_score(),
        max_abs_deviation: curve
            .points
            .iter()
            .map(|p| (p.mean - (m.kappa * p.input).tanh()).abs())
            .fold(0.0, f64::max),
        rms_error: curve.rms_error(),
    };
    Ok((curve, report))
}

pub fn retention_demo(cfg: &HardwareConfig) -> Result<(Vec<RetentionPoint>, RetentionReport)> {
    let r = &cfg.retention;
    let tau0 = cfg.magnet.tau0;
    let sweep = retention_sweep(&grid(r.u_min, r.u_max, r.u_step)?, tau0)?;
    let Barrier { joules, over_kt } = barrier_energy(&cfg.magnet)?;
    let magnet_retention_s = match retention_time(over_kt, tau0) {
        Ok(t) => Some(t),
        Err(Error::Saturation(_)) => None,
        Err(e) => return Err(e),
    };
    Ok((
        sweep,
        RetentionReport {
            barrier_joules: joules,
            barrier_over_kt: over_kt,
            magnet_retention_s,
            one_kt_retention_s: retention_time(1.0, tau0)?,
        },
    ))
}

/// Fits the crossbar readout on the training states of the equalization
/// task and scores it on the test segment, analog and quantized.
pub fn crossbar_demo(cfg: &HardwareReadoutConfig, filter: &FilterOutput) -> Result<CrossbarReport> {
    let task = &filter.task;
    let mut reservoir = filter.reservoir.clone();
    let len = task.clean.len();
    let inputs = Matrix::from_vec(len, 1, task.distorted.samples().to_vec())?;
    let teacher = Matrix::from_vec(len, 1, task.clean.samples().to_vec())?;
    let washout = reservoir.params().washout;
    let states = reservoir.harvest_states(&inputs, &teacher)?;
    let n = states.cols();
    let rows =
        |a: usize, b: usize| Matrix::from_vec(b - a, n, states.as_slice()[a * n..b * n].to_vec());
    let split = task.train - washout;
    let train = rows(0, split)?;
    let test = rows(split, states.rows())?;
    let targets = Matrix::from_vec(split, 1, task.clean.samples()[washout..task.train].to_vec())?;
    let truth = &task.clean.samples()[task.train..];
    let score = |c: &HardwareReadoutConfig| -> Result<f64> {
        let x = fit_hardware_readout(&train, &targets, c)?;
        nrmse(hardware_esn_readout(&x, &test)?.as_slice(), truth)
    };
    let float_nrmse = score(&HardwareReadoutConfig {
        bits: None,
        ..cfg.clone()
    })?;
    let quantized_nrmse = score(cfg)?;
    Ok(CrossbarReport {
        bits: cfg.bits,
        lambda: cfg.lambda,
        float_nrmse,
        quantized_nrmse,
        ratio: quantized_nrmse / float_nrmse,
        software_nrmse: filter.report.nrmse,
    })
}

/// Random neurons with weights, inputs and bias uniform on `[−1, 1]`,
/// evaluated in fixed point against `tanh` in double precision.
pub fn digital_demo(cfg: &HardwareConfig, rng: &mut RngStream) -> Result<DigitalReport> {
    let d = &cfg.digital;
    let lut = TanhLut::new(d.lut_size)?;
    let (mut max_error, mut sum) = (0.0f64, 0.0);
    for _ in 0..d.instances {
        let w: Vec<f64> = (0..d.inputs)
            .map(|_| rng.uniform_range(-1.0, 1.0))
            .collect();
        let x: Vec<f64> = (0..d.inputs)
            .map(|_| rng.uniform_range(-1.0, 1.0))
            .collect();
        let b = rng.uniform_range(-1.0, 1.0);
        let exact = (w.iter().zip(&x).map(|(a, c)| a * c).sum::<f64>() + b).tanh();
        let e = (digital_neuron_eval(&w, &x, b, d.format, &lut)?.activation - exact).abs();
        max_error = max_error.max(e);
        sum += e;
    }
    Ok(DigitalReport {
        total_bits: d.format.total_bits,
        frac_bits: d.format.frac_bits,
        lut_size: d.lut_size,
        inputs: d.inputs,
        instances: d.instances,
        max_error,
        mean_error: sum / d.instances.max(1) as f64,
        bound: digital_error_bound(d.inputs, d.format, &lut),
    })
}

pub fn run_hardware_stage(
    cfg: &HardwareConfig,
    filter: &FilterOutput,
    rng: &RngStream,
) -> Result<HardwareOutput> {
    let (curve, mtj) = mtj_demo(cfg, rng.substream(rng.stream().wrapping_add(1)))?;
    let (retention, retention_report) = retention_demo(cfg)?;
    let crossbar = crossbar_demo(&cfg.crossbar, filter)?;
    let digital = digital_demo(cfg, &mut rng.substream(rng.stream().wrapping_add(2)))?;
    Ok(HardwareOutput {
        curve,
        retention,
        report: HardwareReport {
            mtj,
            retention: retention_report,
            crossbar,
            digital,
        },
    })
}
