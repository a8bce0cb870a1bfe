//! One entry point per CLI subcommand. Each writes its output directory
//! atomically and returns the report it stored as `report.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Config;
use super::run::{
    obtain_detector, read_frames, run_pipeline, streams, write_atomically, write_crossbar_csv,
    write_filter_artifacts, write_frames, write_json, write_mtj_artifacts, write_retention_csv,
    write_temporal_artifacts, write_tuples, DetectorSummary, RunReport,
};
use super::scene::generate_scene;
use super::stages::{
    crossbar_demo, digital_demo, motion_series, mtj_demo, retention_demo, run_filter_stage,
    run_temporal_stage, run_tracking_stage, CrossbarReport, DigitalReport, FilterOutput,
    FilterReport, MtjReport, RetentionReport, TemporalReport, TrackingReport, TrackingTiming,
};
use crate::error::Result;
use crate::rng::RngStream;
use crate::spatial::search::read_tuples_csv;
use crate::spatial::ConvNet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub tag: String,
}

/// Renders the configured scene to `frame_%05d.pgm` plus `truth.csv`.
pub fn gen_scene(cfg: &Config, out: &Path) -> Result<SceneReport> {
    cfg.validate()?;
    write_atomically(out, |dir| {
        let (frames, truth) =
            generate_scene(&cfg.scene, &mut RngStream::new(cfg.seed, streams::SCENE))?;
        write_frames(dir, &frames)?;
        write_tuples(&dir.join("truth.csv"), &truth)?;
        let report = SceneReport {
            frames: frames.len(),
            width: cfg.scene.width,
            height: cfg.scene.height,
            tag: cfg.scene.tag.tag().to_string(),
        };
        write_json(&dir.join("report.json"), &report)?;
        Ok(report)
    })
}

fn filter_output(cfg: &Config) -> Result<FilterOutput> {
    run_filter_stage(
        &cfg.channel,
        &cfg.reservoir,
        &mut RngStream::new(cfg.seed, streams::CHANNEL_TASK),
        &mut RngStream::new(cfg.seed, streams::RESERVOIR),
    )
}

/// Trains the equalizer and writes the three signals, the fitted reservoir
/// and the report.
pub fn filter(cfg: &Config, out: &Path) -> Result<FilterReport> {
    cfg.validate()?;
    write_atomically(out, |dir| {
        let f = filter_output(cfg)?;
        write_filter_artifacts(dir, &f)?;
        write_json(&dir.join("reservoir.json"), &f.reservoir)?;
        write_json(&dir.join("report.json"), &f.report)?;
        Ok(f.report)
    })
}

/// Trains the detector (ignoring any configured model path) and writes
/// `model.json`.
pub fn train_net(cfg: &Config, out: &Path) -> Result<DetectorSummary> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    cfg.spatial.model = None;
    write_atomically(out, |dir| {
        let (net, summary) = obtain_detector(&cfg, None)?;
        write_json(&dir.join("model.json"), &net)?;
        write_json(&dir.join("report.json"), &summary)?;
        Ok(summary)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackReport {
    pub tracking: TrackingReport,
    pub timing: TrackingTiming,
}

/// Tracks every frame in `frames_dir`. A `truth.csv` next to the frames
/// enables the accuracy table.
pub fn track(
    cfg: &Config,
    frames_dir: &Path,
    model: &Path,
    use_prior: bool,
    out: &Path,
) -> Result<TrackReport> {
    cfg.validate()?;
    let frames = read_frames(frames_dir)?;
    let net = ConvNet::from_json(&fs::read_to_string(model)?)?;
    let truth_path = frames_dir.join("truth.csv");
    let truth = if truth_path.exists() {
        Some(read_tuples_csv(fs::File::open(&truth_path)?)?)
    } else {
        None
    };
    write_atomically(out, |dir| {
        let t = run_tracking_stage(
            &frames,
            truth.as_deref(),
            &net,
            &cfg.spatial.grid,
            use_prior,
            cfg.spatial.exhaustive_frames,
        )?;
        write_tuples(&dir.join("tuples.csv"), &t.tuples)?;
        let report = TrackReport {
            tracking: t.report,
            timing: t.timing,
        };
        write_json(&dir.join("report.json"), &report)?;
        Ok(report)
    })
}

/// Feeds each motion variable of a tuple CSV to its own temporal memory.
pub fn predict(cfg: &Config, tuples: &Path, out: &Path) -> Result<TemporalReport> {
    cfg.validate()?;
    let tuples = read_tuples_csv(fs::File::open(tuples)?)?;
    let series = motion_series(&tuples)?;
    write_atomically(out, |dir| {
        let t = run_temporal_stage(
            &series,
            &cfg.temporal,
            None,
            &RngStream::new(cfg.seed, streams::TEMPORAL),
        )?;
        write_temporal_artifacts(dir, &t)?;
        write_json(&dir.join("report.json"), &t.report)?;
        Ok(t.report)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HwDemo {
    Mtj,
    Crossbar,
    Digital,
    Retention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HwReport {
    Mtj(MtjReport),
    Crossbar(CrossbarReport),
    Digital(DigitalReport),
    Retention(RetentionReport),
}

/// Runs one hardware demo. Seeds match the corresponding part of `run`.
pub fn hw(cfg: &Config, demo: HwDemo, out: &Path) -> Result<HwReport> {
    cfg.validate()?;
    let rng = RngStream::new(cfg.seed, streams::HARDWARE);
    let h = &cfg.hardware;
    write_atomically(out, |dir| {
        let report = match demo {
            HwDemo::Mtj => {
                let (curve, r) = mtj_demo(h, rng.substream(rng.stream().wrapping_add(1)))?;
                write_mtj_artifacts(dir, &curve)?;
                HwReport::Mtj(r)
            }
            HwDemo::Retention => {
                let (sweep, r) = retention_demo(h)?;
                write_retention_csv(&dir.join("retention.csv"), &sweep)?;
                HwReport::Retention(r)
            }
            HwDemo::Crossbar => {
                let r = crossbar_demo(&h.crossbar, &filter_output(cfg)?)?;
                write_crossbar_csv(&dir.join("crossbar.csv"), &r)?;
                HwReport::Crossbar(r)
            }
            HwDemo::Digital => HwReport::Digital(digital_demo(
                h,
                &mut rng.substream(rng.stream().wrapping_add(2)),
            )?),
        };
        write_json(&dir.join("report.json"), &report)?;
        Ok(report)
    })
}

/// The full pipeline. Relative model paths resolve against the directory
/// of `config_path`.
pub fn run(config_path: &Path, out: &Path) -> Result<RunReport> {
    let cfg = Config::load(config_path)?;
    let base = config_path.parent().filter(|p| !p.as_os_str().is_empty());
    Ok(run_pipeline(&cfg, base, out)?.0)
}
