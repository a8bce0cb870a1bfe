//! End-to-end orchestration and on-disk artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Config, TemporalSource, VARIABLES};
use super::scene::generate_scene;
use super::stages::{
    filter_frames, motion_series, run_filter_stage, run_hardware_stage, run_temporal_stage,
    run_tracking_stage, CrossbarReport, FilterOutput, FilterReport, HardwareOutput, HardwareReport,
    PixelFilterReport, TemporalOutput, TemporalReport, TrackingReport, TrackingTiming,
};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::hardware::{RetentionPoint, TransferCurve};
use crate::rng::RngStream;
use crate::spatial::dataset::{train_detector, DetectorReport};
use crate::spatial::search::write_tuples_csv;
use crate::spatial::{ConvNet, SpatialTuple};

/// RNG stream of each stage under the run seed.
pub mod streams {
    pub const CHANNEL_TASK: u64 = 1;
    pub const RESERVOIR: u64 = 2;
    pub const SCENE: u64 = 3;
    pub const PIXEL_CHANNEL: u64 = 4;
    pub const DETECTOR: u64 = 5;
    pub const HARDWARE: u64 = 6;
    /// Temporal memories use `TEMPORAL + k` for variable `k`.
    pub const TEMPORAL: u64 = 100;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSummary {
    /// `trained` or the model path.
    pub source: String,
    pub final_loss: Option<f64>,
    pub dataset_size: Option<usize>,
    pub mined: Option<Vec<usize>>,
}

/// Every metric of a run. Wall-clock times live in `timing.json` so this
/// report is reproducible bit for bit from its config echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub filter: FilterReport,
    pub pixel_filter: Option<PixelFilterReport>,
    pub detector: DetectorSummary,
    pub tracking: TrackingReport,
    pub temporal: TemporalReport,
    pub hardware: HardwareReport,
    pub config: Config,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    /// Seconds per stage.
    pub stages: BTreeMap<String, f64>,
    pub tracking: TrackingTiming,
}

/// Creates `out` atomically: `fill` writes into a sibling staging
/// directory that is renamed into place only if it succeeds. An existing
/// `out` must be an empty directory.
pub fn write_atomically<T>(out: &Path, fill: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
    if out.exists() {
        let empty = out.is_dir() && fs::read_dir(out)?.next().is_none();
        if !empty {
            return Err(Error::param(
                "out",
                format!("{} exists and is not an empty directory", out.display()),
            ));
        }
    }
    let name = out
        .file_name()
        .ok_or_else(|| Error::param("out", "needs a final path component"))?
        .to_string_lossy()
        .into_owned();
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir(&staging)?;
    match fill(&staging) {
        Ok(v) => {
            if out.exists() {
                fs::remove_dir(out)?;
            }
            fs::rename(&staging, out)?;
            Ok(v)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.pgm")
}

pub fn write_frames(dir: &Path, frames: &[Frame]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        f.save_pgm(dir.join(frame_file_name(i)))?;
    }
    Ok(())
}

/// Loads `frame_*.pgm` from `dir` in name order.
pub fn read_frames(dir: &Path) -> Result<Vec<Frame>> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("frame_") && n.ends_with(".pgm"))
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::param(
            "frames",
            format!("no frame_*.pgm files in {}", dir.display()),
        ));
    }
    names.iter().map(Frame::load_pgm).collect()
}

pub fn write_tuples(path: &Path, tuples: &[SpatialTuple]) -> Result<()> {
    write_tuples_csv(std::io::BufWriter::new(fs::File::create(path)?), tuples)
}

pub fn write_filter_artifacts(dir: &Path, f: &FilterOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, ts) in [
        ("clean.csv", &f.task.clean),
        ("distorted.csv", &f.task.distorted),
        ("recovered.csv", &f.recovered),
    ] {
        ts.write_csv(fs::File::create(dir.join(name))?)?;
    }
    Ok(())
}

pub fn write_temporal_artifacts(dir: &Path, t: &TemporalOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, track) in VARIABLES.iter().zip(&t.tracks) {
        track.write_csv(fs::File::create(dir.join(format!("trace_{name}.csv")))?)?;
    }
    let mut w = csv::Writer::from_path(dir.join("events.csv"))?;
    w.write_record(["t", "variable", "anomaly"])?;
    for (name, (v, track)) in VARIABLES
        .iter()
        .zip(t.report.variables.iter().zip(&t.tracks))
    {
        for &e in &v.events {
            w.write_record([
                e.to_string(),
                name.to_string(),
                track.anomaly.samples()[e].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct RetentionRow {
    u_over_kt: f64,
    tau_s: f64,
}

pub fn write_mtj_artifacts(dir: &Path, curve: &TransferCurve) -> Result<()> {
    curve.write_csv(fs::File::create(dir.join("mtj_curve.csv"))?)?;
    write_json(&dir.join("mtj_curve.json"), &curve.meta())
}

pub fn write_retention_csv(path: &Path, points: &[RetentionPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(RetentionRow {
            u_over_kt: p.u_over_kt,
            tau_s: p.tau_s,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_crossbar_csv(path: &Path, c: &CrossbarReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["readout", "bits", "nrmse"])?;
    w.write_record(["software", "", &c.software_nrmse.to_string()])?;
    w.write_record(["crossbar_analog", "", &c.float_nrmse.to_string()])?;
    let bits = c.bits.map(|b| b.to_string()).unwrap_or_default();
    w.write_record(["crossbar_quantized", &bits, &c.quantized_nrmse.to_string()])?;
    w.flush()?;
    Ok(())
}

pub fn write_hardware_artifacts(dir: &Path, h: &HardwareOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_mtj_artifacts(dir, &h.curve)?;
    write_retention_csv(&dir.join("retention.csv"), &h.retention)?;
    write_crossbar_csv(&dir.join("crossbar.csv"), &h.report.crossbar)?;
    write_json(&dir.join("digital.json"), &h.report.digital)
}

/// Loads the configured detector, or trains one.
pub fn obtain_detector(
    cfg: &Config,
    base_dir: Option<&Path>,
) -> Result<(ConvNet, DetectorSummary)> {
    let sp = &cfg.spatial;
    match &sp.model {
        Some(path) => {
            let p = match base_dir {
                Some(b) => b.join(path),
                None => PathBuf::from(path),
            };
            let net = ConvNet::from_json(&fs::read_to_string(&p)?)?;
            Ok((
                net,
                DetectorSummary {
                    source: path.clone(),
                    final_loss: None,
                    dataset_size: None,
                    mined: None,
                },
            ))
        }
        None => {
            let (net, r) = train_detector(
                &sp.dataset,
                &sp.training,
                &sp.mining,
                &sp.grid,
                &mut RngStream::new(cfg.seed, streams::DETECTOR),
            )?;
            Ok((net, summary_of(&r)))
        }
    }
}

pub(crate) fn summary_of(r: &DetectorReport) -> DetectorSummary {
    DetectorSummary {
        source: "trained".into(),
        final_loss: Some(r.train.final_loss),
        dataset_size: Some(r.dataset_size),
        mined: Some(r.mined.clone()),
    }
}

fn timed<T>(timing: &mut Timing, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t0 = Instant::now();
    let v = f().map_err(|e| e.in_stage(stage))?;
    timing
        .stages
        .insert(stage.to_string(), t0.elapsed().as_secs_f64());
    log::info!("stage {stage} done in {:.2}s", t0.elapsed().as_secs_f64());
    Ok(v)
}

/// Runs every stage in order and writes the report and all artifacts into
/// `out`. Relative model paths resolve against `base_dir`.
pub fn run_pipeline(
    cfg: &Config,
    base_dir: Option<&Path>,
    out: &Path,
) -> Result<(RunReport, Timing)> {
    cfg.validate()?;
    write_atomically(out, |dir| {
        let mut timing = Timing::default();
        let seed = cfg.seed;

        let filter = timed(&mut timing, "filter", || {
            run_filter_stage(
                &cfg.channel,
                &cfg.reservoir,
                &mut RngStream::new(seed, streams::CHANNEL_TASK),
                &mut RngStream::new(seed, streams::RESERVOIR),
            )
        })?;
        write_filter_artifacts(&dir.join("filter"), &filter)?;

        let (frames, truth) = timed(&mut timing, "scene", || {
            generate_scene(&cfg.scene, &mut RngStream::new(seed, streams::SCENE))
        })?;
        write_frames(&dir.join("frames"), &frames)?;
        write_tuples(&dir.join("frames").join("truth.csv"), &truth)?;

        let (frames, pixel_filter) = if cfg.channel.filter_frames {
            let (filtered, report) = timed(&mut timing, "pixel_filter", || {
                let mut reservoir = filter.reservoir.clone();
                let mut rng = RngStream::new(seed, streams::PIXEL_CHANNEL);
                filter_frames(&frames, &mut reservoir, &cfg.channel.model, &mut rng)
            })?;
            write_frames(&dir.join("frames_filtered"), &filtered)?;
            (filtered, Some(report))
        } else {
            (frames, None)
        };

        let (net, detector) = timed(&mut timing, "detector", || obtain_detector(cfg, base_dir))?;
        write_json(&dir.join("model.json"), &net)?;

        let tracking = timed(&mut timing, "tracking", || {
            run_tracking_stage(
                &frames,
                Some(&truth),
                &net,
                &cfg.spatial.grid,
                cfg.spatial.use_prior,
                cfg.spatial.exhaustive_frames,
            )
        })?;
        timing.tracking = tracking.timing;
        write_tuples(&dir.join("tuples.csv"), &tracking.tuples)?;

        let temporal = timed(&mut timing, "temporal", || {
            let t = &cfg.temporal;
            let (tuples, jump) = match t.source {
                TemporalSource::GroundTruth => {
                    let mut spec = cfg.scene.clone();
                    spec.frames = t.steps;
                    spec.jump = t.jump;
                    (spec.ground_truth(t.steps)?, t.jump.map(|j| j.frame))
                }
                TemporalSource::Tracked => (tracking.tuples.clone(), None),
            };
            run_temporal_stage(
                &motion_series(&tuples)?,
                t,
                jump,
                &RngStream::new(seed, streams::TEMPORAL),
            )
        })?;
        write_temporal_artifacts(&dir.join("temporal"), &temporal)?;

        let hardware = timed(&mut timing, "hardware", || {
            run_hardware_stage(
                &cfg.hardware,
                &filter,
                &RngStream::new(seed, streams::HARDWARE),
            )
        })?;
        write_hardware_artifacts(&dir.join("hardware"), &hardware)?;

        let report = RunReport {
            seed,
            filter: filter.report,
            pixel_filter,
            detector,
            tracking: tracking.report,
            temporal: temporal.report,
            hardware: hardware.report,
            config: cfg.clone(),
        };
        write_json(&dir.join("report.json"), &report)?;
        write_json(&dir.join("timing.json"), &timing)?;
        Ok((report, timing))
    })
}
