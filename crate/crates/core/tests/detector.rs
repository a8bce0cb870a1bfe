use std::sync::OnceLock;

use neurocam::pipeline::run::{obtain_detector, streams};
use neurocam::pipeline::scene::{generate_scene, Signal, TrajectorySpec};
use neurocam::pipeline::stages::run_tracking_stage;
use neurocam::pipeline::Config;
use neurocam::spatial::render::render_shape;
use neurocam::spatial::search::propose_regions;
use neurocam::spatial::{
    extract_tuple, iou, BoxGeom, ConvNet, SearchGrid, Shape, SpatialTuple, BACKGROUND,
};
use neurocam::{Frame, RngStream};

/// Detector trained once from the bundled config and shared by every test.
fn detector() -> &'static ConvNet {
    static NET: OnceLock<ConvNet> = OnceLock::new();
    NET.get_or_init(|| obtain_detector(&Config::bundled(), None).unwrap().0)
}

fn grid() -> SearchGrid {
    Config::bundled().spatial.grid
}

fn scene_with(tag: Shape, g: BoxGeom) -> Frame {
    let mut f = Frame::zeros(64, 64);
    render_shape(&mut f, tag, &g, 1.0, 4);
    f
}

#[test]
fn finds_an_upright_square() {
    let truth = BoxGeom::axis_aligned(20.0, 30.0, 10.0, 10.0);
    let e = extract_tuple(detector(), &scene_with(Shape::Square, truth), None, &grid()).unwrap();
    assert_eq!(e.tuple.tag, "square");
    assert!(iou(&e.tuple.geom(), &truth) >= 0.5, "{:?}", e.tuple);
    assert!((e.tuple.x - 20.0).abs() <= 3.0 && (e.tuple.y - 30.0).abs() <= 3.0);
}

#[test]
fn recovers_square_rotation() {
    let truth = BoxGeom {
        theta: 30.0,
        ..BoxGeom::axis_aligned(36.0, 28.0, 18.0, 18.0)
    };
    let e = extract_tuple(detector(), &scene_with(Shape::Square, truth), None, &grid()).unwrap();
    assert_eq!(e.tuple.tag, "square");
    let d = (e.tuple.theta - 30.0).rem_euclid(90.0);
    assert!(d.min(90.0 - d) <= 15.0, "{:?}", e.tuple);
    assert!(iou(&e.tuple.geom(), &truth) >= 0.5);
}

#[test]
fn tells_disks_from_squares() {
    let truth = BoxGeom::axis_aligned(40.0, 24.0, 16.0, 16.0);
    let e = extract_tuple(detector(), &scene_with(Shape::Disk, truth), None, &grid()).unwrap();
    assert_eq!(e.tuple.tag, "disk");
}

#[test]
fn empty_frame_is_background() {
    let e = extract_tuple(detector(), &Frame::zeros(64, 64), None, &grid()).unwrap();
    assert_eq!(e.tuple.tag, BACKGROUND);
    assert!(e.tuple.is_background());
}

#[test]
fn prior_search_stays_in_the_prior_window() {
    let g = grid();
    let truth = BoxGeom::axis_aligned(30.0, 34.0, 16.0, 16.0);
    let prior = SpatialTuple::from_geom(
        "square",
        1.0,
        &BoxGeom::axis_aligned(28.0, 32.0, 16.0, 16.0),
    );
    let frame = scene_with(Shape::Square, truth);
    let with = extract_tuple(detector(), &frame, Some(&prior), &g).unwrap();
    let ps = g.nearest_scale(prior.w, prior.h);
    for c in &with.candidates {
        assert!((c.x - prior.x).abs() <= g.prior_radius && (c.y - prior.y).abs() <= g.prior_radius);
        assert!(c.scale.unwrap().abs_diff(ps) <= g.prior_scale_steps);
    }
    assert_eq!(
        with.evaluations,
        with.candidates.len() * g.transforms_per_box()
    );

    let without = extract_tuple(detector(), &frame, None, &g).unwrap();
    assert_eq!(without.candidates, propose_regions(64, 64, &g, None));
    assert!(without.evaluations >= 3 * with.evaluations);
    assert_eq!(with.tuple.tag, "square");
    assert!(iou(&with.tuple.geom(), &truth) >= 0.5);
}

#[test]
fn tracking_a_static_scene_is_stable() {
    let spec = TrajectorySpec {
        x: Signal::constant(30.0),
        y: Signal::constant(34.0),
        h: Signal::constant(16.0),
        w: Signal::constant(16.0),
        theta: Signal::constant(15.0),
        ..TrajectorySpec::lissajous(10)
    };
    let (frames, truth) = generate_scene(&spec, &mut RngStream::new(7, streams::SCENE)).unwrap();
    let g = grid();
    let out = run_tracking_stage(&frames, Some(&truth), detector(), &g, true, 1).unwrap();
    let steps = [g.stride as f64, g.stride as f64, 8.0, 8.0, 15.0, 10.0, 10.0];
    for (k, step) in steps.iter().enumerate() {
        let v: Vec<f64> = out.tuples.iter().map(|t| t.motion()[k]).collect();
        let spread =
            v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread <= *step, "variable {k} spreads {spread}: {v:?}");
    }
    let acc = out.report.accuracy.unwrap();
    assert_eq!(acc.tag_accuracy, 1.0);
    assert!(out.report.evaluation_speedup.unwrap() >= 3.0);
}
