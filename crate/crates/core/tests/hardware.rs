use neurocam::hardware::*;
use neurocam::linalg::matvec;
use neurocam::reservoir::{Reservoir, ReservoirParams};
use neurocam::{Error, Matrix, RngStream};
use proptest::prelude::*;

#[test]
fn barrier_of_one_kt() {
    let t = 300.0;
    let mut p = MagnetParams::soft();
    // Ms·Hk·Ω·μ0/2 = k_B·T
    p.volume = 2.0 * K_B * t / (MU0 * p.ms * p.hk);
    p.temperature = t;
    let b = barrier_energy(&p).unwrap();
    assert!((b.over_kt - 1.0).abs() < 1e-12, "{}", b.over_kt);
}

#[test]
fn barrier_is_linear_in_volume() {
    let p = MagnetParams::soft();
    let q = MagnetParams {
        volume: 2.0 * p.volume,
        ..p
    };
    let (a, b) = (barrier_energy(&p).unwrap(), barrier_energy(&q).unwrap());
    assert!((b.joules / a.joules - 2.0).abs() < 1e-14);
}

#[test]
fn soft_magnet_by_hand() {
    // 8e5 · 8e3 = 6.4e9; · 1e-24 m³ = 6.4e-15; / 2 = 3.2e-15;
    // · 1.25663706212e-6 = 4.021238598784e-21 J.
    // k_B · 300 = 4.141947e-21 J, so U/kT = 0.970857087.
    let b = barrier_energy(&MagnetParams::soft()).unwrap();
    assert!((b.joules - 4.021238598784e-21).abs() < 1e-33);
    assert!((b.over_kt - 0.970_857_086_965).abs() < 1e-11);
}

#[test]
fn raw_product_drops_mu0() {
    let p = MagnetParams {
        raw_product: true,
        ..MagnetParams::soft()
    };
    assert!((barrier_energy(&p).unwrap().joules - 3.2e-15).abs() < 1e-27);
}

#[test]
fn retention_at_one_kt_is_e_tau0() {
    for tau0 in [1e-10, 2.5e-10, 5e-10, 1e-9] {
        assert_eq!(
            retention_time(1.0, tau0).unwrap(),
            std::f64::consts::E * tau0
        );
    }
    let lo = retention_time(1.0, 1e-10).unwrap();
    let hi = retention_time(1.0, 1e-9).unwrap();
    assert!(lo >= 0.27e-9 && hi <= 2.72e-9, "{lo:e} {hi:e}");
}

#[test]
fn retention_sweep_log_ratio() {
    let us: Vec<f64> = (0..=140).map(|i| i as f64 * 5.0).collect();
    let sweep = retention_sweep(&us, 1e-9).unwrap();
    for p in &sweep {
        assert!(((p.tau_s / 1e-9).ln() - p.u_over_kt).abs() <= 1e-12 * p.u_over_kt.max(1.0));
    }
    assert!(sweep.windows(2).all(|w| w[1].tau_s > w[0].tau_s));
}

proptest! {
    #[test]
    fn retention_is_strictly_increasing(a in -50.0..650.0f64, d in 1e-6..50.0f64, tau0 in 1e-10..1e-9f64) {
        prop_assert!(retention_time(a + d, tau0).unwrap() > retention_time(a, tau0).unwrap());
    }
}

fn empirical_mean(kappa: f64, m: f64, n: usize, seed: u64) -> f64 {
    let mut neuron = MtjNeuron::new(kappa, RngStream::new(seed, 0)).unwrap();
    (0..n).map(|_| neuron.sample(m).unwrap()).sum::<f64>() / n as f64
}

#[test]
fn unbiased_at_zero_input() {
    for kappa in [0.5, 3.0] {
        assert!(empirical_mean(kappa, 0.0, 100_000, 11).abs() <= 0.016);
    }
}

#[test]
fn mean_matches_tanh() {
    let m = empirical_mean(2.0, 0.5, 100_000, 12);
    assert!((m - 1f64.tanh()).abs() <= 0.0062, "{m}");
}

#[test]
fn transfer_curve_within_binomial_bounds() {
    let inputs = grid(-2.0, 2.0, 0.1).unwrap();
    let mut n = MtjNeuron::new(1.0, RngStream::new(0, 0)).unwrap();
    let c = n.transfer_curve(&inputs, 10_000).unwrap();
    assert!(c.max_z_score() <= 3.0, "{}", c.max_z_score());
    let max_dev = c
        .points
        .iter()
        .map(|p| (p.mean - p.input.tanh()).abs())
        .fold(0.0, f64::max);
    assert!(max_dev <= 0.03, "{max_dev}");
    assert!(c.rms_error() <= 3.0 * (1.0f64 / 10_000.0).sqrt());
    // odd symmetry within twice the 3σ sampling error
    let k = c.points.len();
    for i in 0..k / 2 {
        let (a, b) = (c.points[i], c.points[k - 1 - i]);
        assert!((a.input + b.input).abs() < 1e-12);
        assert!(
            (a.mean + b.mean).abs() <= 2.0 * 3.0 * a.stderr.max(b.stderr).max(1e-2),
            "{a:?} {b:?}"
        );
    }
}

#[test]
fn zero_gain_is_flat() {
    let mut n = MtjNeuron::new(0.0, RngStream::new(5, 0)).unwrap();
    let c = n
        .transfer_curve(&grid(-2.0, 2.0, 0.5).unwrap(), 10_000)
        .unwrap();
    assert!(c.points.iter().all(|p| p.mean.abs() <= 0.03));
}

#[test]
fn transfer_curve_csv_round_trip() {
    let mut n = MtjNeuron::new(1.5, RngStream::new(2, 0)).unwrap();
    let c = n.transfer_curve(&[-1.0, 0.0, 1.0], 100).unwrap();
    let mut buf = Vec::new();
    c.write_csv(&mut buf).unwrap();
    assert!(String::from_utf8(buf.clone())
        .unwrap()
        .starts_with("input,mean,stderr\n"));
    assert_eq!(TransferCurve::read_csv(&buf[..], c.meta()).unwrap(), c);
    assert!(n.transfer_curve(&[0.0], 0).is_err());
}

#[test]
fn rest_neuron_emits_pure_noise() {
    let mut n = GeneralNeuron::new(1e3, 1e-9, 1e-12, 1e6, 0.3).unwrap();
    let mut rng = RngStream::new(8, 0);
    let dt = n.time_constant() / 100.0;
    let out: Vec<f64> = (0..100_000)
        .map(|_| n.step(0.0, dt, &mut rng).unwrap())
        .collect();
    assert_eq!(n.q, 0.0);
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    let sd = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (out.len() - 1) as f64).sqrt();
    assert!((sd / 0.3 - 1.0).abs() <= 0.05, "{sd}");
}

#[test]
fn charge_follows_rc_curve() {
    let (r, c, i_in) = (2e3, 5e-10, 1e-6);
    let mut n = GeneralNeuron::new(r, c, 1.0, 1.0, 0.0).unwrap();
    let tau = r * c;
    let dt = tau / 100.0;
    let mut rng = RngStream::new(0, 0);
    for k in 1..=700 {
        n.step(i_in, dt, &mut rng).unwrap();
        let exact = i_in * tau * (1.0 - (-(k as f64) * dt / tau).exp());
        assert!(
            (n.q - exact).abs() <= 0.01 * exact,
            "step {k}: {} vs {exact}",
            n.q
        );
    }
    assert!((n.q / (i_in * tau) - 1.0).abs() <= 0.01);
}

#[test]
fn noiseless_neuron_is_deterministic_and_switches() {
    let run = |seed| {
        let mut n = GeneralNeuron::new(1.0, 1.0, 0.5, 2.0, 0.0).unwrap();
        let mut rng = RngStream::new(seed, 0);
        (0..300)
            .map(|_| n.step(1.0, 0.01, &mut rng).unwrap())
            .collect::<Vec<_>>()
    };
    let a = run(1);
    assert_eq!(a, run(2));
    let first = a.iter().position(|&v| v != 0.0).unwrap();
    // Q = 1 − 0.99^k crosses 0.5 at k = 69
    assert_eq!(first, 68);
    assert!(a[first] > 0.0 && a[first] < 1.0);
}

fn random_matrix(r: usize, c: usize, rng: &mut RngStream) -> Matrix {
    Matrix::random_uniform(r, c, -2.0, 2.0, rng)
}

#[test]
fn program_decode_round_trip() {
    let mut rng = RngStream::new(21, 0);
    for _ in 0..50 {
        let w = random_matrix(8, 8, &mut rng);
        let x = program_crossbar(&w, 1e-6, 1e-4, None).unwrap();
        let d = x.decode();
        for (a, b) in d.as_slice().iter().zip(w.as_slice()) {
            assert!((a - b).abs() <= 1e-9 * w.max_abs());
        }
    }
}

#[test]
fn quantized_round_trip_within_level_bound() {
    let mut rng = RngStream::new(22, 0);
    for _ in 0..50 {
        let w = random_matrix(8, 8, &mut rng);
        let x = program_crossbar(&w, 1e-6, 1e-4, Some(6)).unwrap();
        let bound = (1e-4 - 1e-6) * x.scale() / 64.0;
        assert!(x.quantization_bound() <= bound);
        let err = x
            .decode()
            .as_slice()
            .iter()
            .zip(w.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= bound, "{err} > {bound}");
    }
}

#[test]
fn crossbar_matvec_matches_core() {
    let mut rng = RngStream::new(23, 0);
    for _ in 0..100 {
        let (r, c) = (1 + rng.below(16), 1 + rng.below(16));
        let w = random_matrix(r, c, &mut rng);
        let v: Vec<f64> = (0..c).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let x = program_crossbar(&w, 1e-6, 1e-4, None).unwrap();
        let hw = x.matvec(&v).unwrap();
        let sw = matvec(&x.decode(), &v).unwrap();
        for (a, b) in hw.iter().zip(&sw) {
            assert!((a - b).abs() <= 1e-12, "{a} {b}");
        }
        assert!(x.matvec(&vec![0.0; c]).unwrap().iter().all(|&i| i == 0.0));
    }
}

#[test]
fn programming_rejects_bad_input() {
    let mut w = Matrix::identity(2);
    assert!(program_crossbar(&w, 1e-4, 1e-6, None).is_err());
    assert!(program_crossbar_with_range(&w, 1e-6, 1e-4, None, 0.5).is_err());
    w[(0, 1)] = f64::NAN;
    assert!(matches!(
        program_crossbar(&w, 1e-6, 1e-4, None),
        Err(Error::NonFinite(_))
    ));
}

#[test]
fn analog_crossbar_reproduces_reservoir_readout() {
    let mut rng = RngStream::new(4, 0);
    let params = ReservoirParams {
        n: 40,
        washout: 10,
        ..Default::default()
    };
    let mut res = Reservoir::init(params, 1, 1, &mut rng).unwrap();
    let w = random_matrix(1, 40, &mut rng);
    res.set_readout(w.clone()).unwrap();
    let inputs = Matrix::random_uniform(60, 1, -0.5, 0.5, &mut rng);
    let states = res.harvest_states(&inputs, &Matrix::zeros(60, 1)).unwrap();
    let x = program_crossbar(&w, 1e-6, 1e-4, None).unwrap();
    let hw = hardware_esn_readout(&x, &states).unwrap();
    for t in 0..states.rows() {
        res.set_state(states.row(t)).unwrap();
        assert!((hw[(t, 0)] - res.readout()[0]).abs() <= 1e-9);
    }
    let zeros = hardware_esn_readout(&x, &Matrix::zeros(5, 40)).unwrap();
    assert_eq!(zeros.max_abs(), 0.0);
}

#[test]
fn compensated_quantization_lands_on_grid() {
    let mut rng = RngStream::new(9, 0);
    let states = Matrix::random_uniform(200, 12, -1.0, 1.0, &mut rng);
    let w = random_matrix(2, 12, &mut rng);
    let q = compensated_quantization(&w, &states, 1e-3, 4).unwrap();
    let delta = w.max_abs() / 15.0;
    for v in q.as_slice() {
        let k = v / delta;
        assert!((k - k.round()).abs() < 1e-9 && k.abs() <= 15.0 + 1e-9);
    }
    // the compensated weights program onto the same grid without further error
    let x = program_crossbar_with_range(&q, 1e-6, 1e-4, Some(4), w.max_abs()).unwrap();
    for (a, b) in x.decode().as_slice().iter().zip(q.as_slice()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn compensation_beats_rounding_on_outputs() {
    let mut rng = RngStream::new(10, 0);
    let states = Matrix::random_uniform(400, 30, -1.0, 1.0, &mut rng);
    let w = random_matrix(1, 30, &mut rng);
    let err = |q: &Matrix| {
        (0..states.rows())
            .map(|t| {
                let d: f64 = q
                    .row(0)
                    .iter()
                    .zip(w.row(0))
                    .zip(states.row(t))
                    .map(|((a, b), s)| (a - b) * s)
                    .sum();
                d * d
            })
            .sum::<f64>()
    };
    let rounded = program_crossbar(&w, 1e-6, 1e-4, Some(4)).unwrap().decode();
    let comp = compensated_quantization(&w, &states, 1e-6, 4).unwrap();
    assert!(err(&comp) < err(&rounded));
}

#[test]
fn lfsr_full_period() {
    let mut seen = vec![false; 1 << 16];
    let mut s = 1u16;
    let mut ones = 0u32;
    for _ in 0..65_535 {
        assert!(!seen[s as usize], "state {s:#06x} repeated");
        seen[s as usize] = true;
        let (bit, next) = lfsr_next(s, LFSR_TAPS).unwrap();
        ones += bit as u32;
        s = next;
    }
    assert_eq!(s, 1);
    assert!(!seen[0]);
    assert_eq!(seen.iter().filter(|&&v| v).count(), 65_535);
    assert_eq!(ones, 32_768);
}

#[test]
fn lfsr_is_deterministic() {
    let mut a = Lfsr::new(0xACE1, LFSR_TAPS).unwrap();
    let mut b = Lfsr::new(0xACE1, LFSR_TAPS).unwrap();
    let wa: Vec<u32> = (0..100).map(|_| a.next_word(8)).collect();
    let wb: Vec<u32> = (0..100).map(|_| b.next_word(8)).collect();
    assert_eq!(wa, wb);
    assert!(wa.iter().all(|&w| w < 256));
}

#[test]
fn digital_neuron_zero_input() {
    let lut = TanhLut::new(1024).unwrap();
    let out =
        digital_neuron_eval(&[0.3; 8], &[0.0; 8], 0.0, FixedPointFormat::default(), &lut).unwrap();
    assert_eq!(out.activation, 0.0);
}

#[test]
fn digital_neuron_clamps_at_table_ends() {
    let lut = TanhLut::new(1024).unwrap();
    let f = FixedPointFormat::default();
    let hi = digital_neuron_eval(&[1.0, 1.0], &[3.0, 2.5], 0.0, f, &lut).unwrap();
    let lo = digital_neuron_eval(&[1.0, 1.0], &[-3.0, -2.5], 0.0, f, &lut).unwrap();
    assert_eq!(hi.activation, 4f64.tanh());
    assert_eq!(lo.activation, -(4f64.tanh()));
}

fn digital_error(
    rng: &mut RngStream,
    n: usize,
    fmt: FixedPointFormat,
    lut: &TanhLut,
    representable: bool,
) -> f64 {
    let draw = |rng: &mut RngStream| {
        let v = rng.uniform_range(-1.0, 1.0);
        if representable {
            (v / fmt.resolution()).round() * fmt.resolution()
        } else {
            v
        }
    };
    let w: Vec<f64> = (0..n).map(|_| draw(rng)).collect();
    let x: Vec<f64> = (0..n).map(|_| draw(rng)).collect();
    let b = draw(rng);
    let exact = (w.iter().zip(&x).map(|(a, c)| a * c).sum::<f64>() + b).tanh();
    (digital_neuron_eval(&w, &x, b, fmt, lut).unwrap().activation - exact).abs()
}

#[test]
fn digital_neuron_q16_12_eight_inputs() {
    let fmt = FixedPointFormat::default();
    let lut = TanhLut::new(1024).unwrap();
    let bound = digital_error_bound(8, fmt, &lut);
    let mut rng = RngStream::new(30, 0);
    for representable in [true, false] {
        for _ in 0..10_000 {
            let e = digital_error(&mut rng, 8, fmt, &lut, representable);
            assert!(e <= bound, "{e} > {bound}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn digital_bound_holds_across_widths(n in 8usize..=64, lut_size in 256usize..=4096, seed in any::<u64>()) {
        let fmt = FixedPointFormat::new(20, 12).unwrap();
        let lut = TanhLut::new(lut_size).unwrap();
        let mut rng = RngStream::new(seed, 0);
        let e = digital_error(&mut rng, n, fmt, &lut, true);
        prop_assert!(e <= digital_error_bound(n, fmt, &lut));
    }
}
