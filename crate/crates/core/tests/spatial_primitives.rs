use neurocam::linalg::Matrix;
use neurocam::spatial::conv::{convolve2d, convolve_map, pool, Kernel};
use neurocam::spatial::dataset::shape_patches;
use neurocam::spatial::net::{ConvNet, Sample, TrainConfig, BACKGROUND};
use neurocam::spatial::search::{
    propose_regions, sample_patch, score_region, SearchGrid, SpatialTuple,
};
use neurocam::spatial::BoxGeom;
use neurocam::{Frame, RngStream};
use proptest::prelude::*;

fn conv_oracle(a: &Matrix, u: &Kernel) -> Matrix {
    let (m, n) = (a.rows(), a.cols());
    let (j, k) = (u.rows(), u.cols());
    let mut b = Matrix::zeros(m - j + 1, n - k + 1);
    for r in 0..m - j + 1 {
        for c in 0..n - k + 1 {
            let mut s = 0.0;
            for p in 0..j {
                for q in 0..k {
                    s += u.get(p, q) * a[(r + p, c + q)];
                }
            }
            b[(r, c)] = s;
        }
    }
    b
}

fn random_frame(w: usize, h: usize, rng: &mut RngStream) -> Frame {
    Frame::from_fn(w, h, |_, _| rng.uniform())
}

fn random_kernel(rng: &mut RngStream) -> Kernel {
    let j = 2 * rng.below(3) + 1;
    let k = 2 * rng.below(3) + 1;
    Kernel::new(
        j,
        k,
        (0..j * k).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
    )
    .unwrap()
}

#[test]
fn convolution_matches_quadruple_loop() {
    let mut rng = RngStream::new(1, 0);
    for _ in 0..200 {
        let w = 5 + rng.below(28);
        let h = 5 + rng.below(28);
        let f = random_frame(w, h, &mut rng);
        let u = random_kernel(&mut rng);
        let got = convolve2d(&f, &u).unwrap();
        let a = Matrix::from_vec(h, w, f.pixels().to_vec()).unwrap();
        let want = conv_oracle(&a, &u);
        assert_eq!(
            (got.rows(), got.cols()),
            (h - u.rows() + 1, w - u.cols() + 1)
        );
        for (g, o) in got.as_slice().iter().zip(want.as_slice()) {
            assert!((g - o).abs() <= 1e-12);
        }
    }
}

#[test]
fn pooling_hundred_to_thirty_three() {
    let mut rng = RngStream::new(2, 0);
    let b = Matrix::random_uniform(100, 100, -1.0, 1.0, &mut rng);
    let p = pool(&b, 3).unwrap();
    assert_eq!((p.rows(), p.cols()), (33, 33));
}

#[test]
fn pooling_equals_window_maximum() {
    let mut rng = RngStream::new(3, 0);
    for _ in 0..50 {
        let (r, c, win) = (1 + rng.below(20), 1 + rng.below(20), 1 + rng.below(4));
        if win > r && win > c {
            continue;
        }
        let b = Matrix::random_uniform(r, c, -1.0, 1.0, &mut rng);
        let p = pool(&b, win).unwrap();
        assert_eq!((p.rows(), p.cols()), (r / win, c / win));
        for i in 0..p.rows() {
            for j in 0..p.cols() {
                let mut m = f64::NEG_INFINITY;
                for di in 0..win {
                    for dj in 0..win {
                        m = m.max(b[(i * win + di, j * win + dj)]);
                    }
                }
                assert_eq!(p[(i, j)], m);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn convolution_is_linear(seed in 0u64..10_000, c in -3.0f64..3.0) {
        let mut rng = RngStream::new(seed, 0);
        let w = 3 + rng.below(12);
        let h = 3 + rng.below(12);
        let a1 = Matrix::random_uniform(h, w, -1.0, 1.0, &mut rng);
        let a2 = Matrix::random_uniform(h, w, -1.0, 1.0, &mut rng);
        let u = random_kernel(&mut rng);
        prop_assume!(u.rows() <= h && u.cols() <= w);
        let sum: Vec<f64> = a1.as_slice().iter().zip(a2.as_slice()).map(|(x, y)| x + y).collect();
        let lhs = convolve_map(&Matrix::from_vec(h, w, sum).unwrap(), &u).unwrap();
        let b1 = convolve_map(&a1, &u).unwrap();
        let b2 = convolve_map(&a2, &u).unwrap();
        for i in 0..lhs.as_slice().len() {
            prop_assert!((lhs.as_slice()[i] - b1.as_slice()[i] - b2.as_slice()[i]).abs() <= 1e-9);
        }
        let mut scaled = a1.clone();
        scaled.scale(c);
        let lhs = convolve_map(&scaled, &u).unwrap();
        for i in 0..lhs.as_slice().len() {
            prop_assert!((lhs.as_slice()[i] - c * b1.as_slice()[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn probabilities_are_a_shift_invariant_distribution(seed in 0u64..10_000, shift in -50.0f64..50.0) {
        let mut rng = RngStream::new(seed, 0);
        let mut net = ConvNet::random(vec![BACKGROUND.into(), "square".into(), "disk".into()], &mut rng).unwrap();
        let patch: Vec<f64> = (0..256).map(|_| rng.uniform()).collect();
        let p = net.probabilities(&patch).unwrap();
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        net.shift_logits(shift);
        let q = net.probabilities(&patch).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}

fn fd_batch(rng: &mut RngStream) -> Vec<Sample> {
    (0..6)
        .map(|i| Sample {
            patch: (0..256).map(|_| rng.uniform()).collect(),
            label: i % 3,
        })
        .collect()
}

#[test]
fn backprop_matches_central_differences() {
    let mut rng = RngStream::new(4, 0);
    let classes = vec![BACKGROUND.into(), "square".into(), "disk".into()];
    let mut net = ConvNet::random(classes, &mut rng).unwrap();
    // nonzero biases so every parameter group carries gradient
    for i in 36..40 {
        net.set_param(i, rng.uniform_range(-0.1, 0.1));
    }
    let batch = fd_batch(&mut rng);
    let (_, grad) = net.gradient(&batch).unwrap();
    let eps = 1e-5;
    let base = net.params();
    let mut worst = 0.0f64;
    for i in 0..net.param_count() {
        let mut plus = net.clone();
        plus.set_param(i, base[i] + eps);
        let mut minus = net.clone();
        minus.set_param(i, base[i] - eps);
        let fd = (plus.loss(&batch).unwrap() - minus.loss(&batch).unwrap()) / (2.0 * eps);
        let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-7);
        worst = worst.max(rel);
        assert!(rel < 1e-4, "param {i}: backprop {} vs fd {fd}", grad[i]);
    }
    assert!(worst < 1e-4);
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let mut rng = RngStream::new(5, 0);
    let mut net = ConvNet::random(vec!["square".into(), "disk".into()], &mut rng).unwrap();
    let before = net.clone();
    let data = shape_patches(40, &mut rng);
    let cfg = TrainConfig {
        epochs: 2,
        lr: 0.0,
        ..Default::default()
    };
    net.train(&data, &cfg, &mut rng).unwrap();
    let bits = |n: &ConvNet| n.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&before), bits(&net));
}

#[test]
fn squares_and_disks_are_separable() {
    let mut rng = RngStream::new(6, 0);
    let train = shape_patches(200, &mut rng);
    let holdout = shape_patches(200, &mut rng);
    let mut net = ConvNet::random(vec!["square".into(), "disk".into()], &mut rng).unwrap();
    let cfg = TrainConfig {
        epochs: 60,
        lr: 0.05,
        batch_size: 16,
        momentum: 0.9,
    };
    let report = net.train(&train, &cfg, &mut rng).unwrap();
    assert!(report.final_loss < report.initial_loss);
    assert_eq!(
        net.accuracy(&train[..1]).unwrap(),
        1.0,
        "first exemplar misclassified"
    );
    let acc = net.accuracy(&holdout).unwrap();
    assert!(acc >= 0.95, "holdout accuracy {acc}");
}

#[test]
fn small_frame_proposals_stay_inside() {
    let grid = SearchGrid::default();
    let c = propose_regions(16, 16, &grid, None);
    assert!(!c.is_empty());
    for b in &c {
        assert!(b.w <= 16.0);
        assert!(b.x - b.w / 2.0 >= 0.0 && b.x + b.w / 2.0 <= 16.0);
        assert!(b.y - b.h / 2.0 >= 0.0 && b.y + b.h / 2.0 <= 16.0);
    }
}

#[test]
fn candidate_count_matches_closed_form() {
    let grid = SearchGrid::default();
    let c = propose_regions(64, 64, &grid, None);
    for (si, &s) in grid.scales.iter().enumerate() {
        let per_axis = (64 - s) / 4 + 1;
        let n = c.iter().filter(|b| b.scale == Some(si)).count();
        assert_eq!(n, per_axis * per_axis, "scale {s}");
    }
    assert_eq!(c.len(), 792);
}

#[test]
fn prior_window_is_a_strict_subset() {
    let grid = SearchGrid::default();
    let full = propose_regions(64, 64, &grid, None);
    let prior = SpatialTuple::from_geom(
        "square",
        1.0,
        &BoxGeom::axis_aligned(32.0, 32.0, 16.0, 16.0),
    );
    let near = propose_regions(64, 64, &grid, Some(&prior));
    assert!(!near.is_empty());
    assert!(near.len() < full.len());
    let mut it = full.iter();
    for b in &near {
        assert!((b.x - 32.0).abs() <= 8.0 && (b.y - 32.0).abs() <= 8.0);
        let s = b.scale.unwrap();
        assert!((1..=3).contains(&s));
        // order-preserving subsequence of the full grid
        assert!(it.any(|f| f == b));
    }
}

fn plain_crop_patch(f: &Frame, x0: usize, y0: usize, s: usize) -> Frame {
    f.crop(x0, y0, s, s).unwrap().resize(16, 16)
}

#[test]
fn identity_transform_equals_resized_crop() {
    let mut rng = RngStream::new(7, 0);
    let net = ConvNet::random(
        vec![BACKGROUND.into(), "square".into(), "disk".into()],
        &mut rng,
    )
    .unwrap();
    let f = random_frame(64, 64, &mut rng);
    for &(x0, y0, s) in &[
        (0usize, 0usize, 16usize),
        (12, 20, 24),
        (32, 4, 32),
        (48, 48, 16),
    ] {
        let g = BoxGeom::axis_aligned(
            x0 as f64 + s as f64 / 2.0,
            y0 as f64 + s as f64 / 2.0,
            s as f64,
            s as f64,
        );
        let (tag, p) = score_region(&net, &f, &g).unwrap();
        let probs = net.forward(&plain_crop_patch(&f, x0, y0, s)).unwrap();
        let bg = net.background_index().unwrap();
        let (bi, bp) = probs.iter().enumerate().filter(|(i, _)| *i != bg).fold(
            (0, f64::NEG_INFINITY),
            |b, (i, &v)| if v > b.1 { (i, v) } else { b },
        );
        assert_eq!(tag, net.classes[bi]);
        assert!((p - bp).abs() <= 1e-12);
    }
}

#[test]
fn rotated_frame_scored_at_theta_matches_upright() {
    // affine intensity: bilinear interpolation reproduces it exactly, so
    // rotating the content and the sampling grid together cancels out
    let mut rng = RngStream::new(8, 0);
    let net = ConvNet::random(
        vec![BACKGROUND.into(), "square".into(), "disk".into()],
        &mut rng,
    )
    .unwrap();
    let (cx, cy) = (32.0, 32.0);
    let intensity = |x: f64, y: f64| 0.5 + 0.004 * (x - cx) - 0.003 * (y - cy);
    let upright = Frame::from_fn(64, 64, |c, r| intensity(c as f64 + 0.5, r as f64 + 0.5));
    for theta in [-45.0f64, -30.0, 15.0, 30.0, 45.0] {
        let (s, c) = theta.to_radians().sin_cos();
        // content rotated by −θ: F'(p) = F(c + R(θ)ᵀ(p − c))
        let rotated = Frame::from_fn(64, 64, |col, row| {
            let (dx, dy) = (col as f64 + 0.5 - cx, row as f64 + 0.5 - cy);
            intensity(cx + c * dx + s * dy, cy - s * dx + c * dy)
        });
        let g0 = BoxGeom::axis_aligned(cx, cy, 20.0, 20.0);
        let mut gt = g0;
        gt.theta = theta;
        let (t0, p0) = score_region(&net, &upright, &g0).unwrap();
        let (t1, p1) = score_region(&net, &rotated, &gt).unwrap();
        assert_eq!(t0, t1);
        assert!((p0 - p1).abs() <= 1e-6, "θ={theta}: {p0} vs {p1}");

        let mut a = Vec::new();
        let mut b = Vec::new();
        sample_patch(&upright, &g0, 16, &mut a);
        sample_patch(&rotated, &gt, 16, &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9);
        }
    }
}
