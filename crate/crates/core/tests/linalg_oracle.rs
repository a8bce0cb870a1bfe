use nalgebra::DMatrix;
use neurocam::linalg::{eigenvalues, spectral_radius};
use neurocam::{Matrix, RngStream};

fn oracle_radius(m: &Matrix) -> f64 {
    let d = DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice());
    d.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

fn sparse(n: usize, density: f64, rng: &mut RngStream) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for v in m.as_mut_slice() {
        let keep = rng.uniform();
        let val = rng.uniform_range(-1.0, 1.0);
        if keep < density {
            *v = val;
        }
    }
    m
}

#[test]
fn dense_random_matches_oracle() {
    let mut rng = RngStream::new(11, 0);
    for _ in 0..20 {
        let m = Matrix::random_uniform(20, 20, -1.0, 1.0, &mut rng);
        let got = spectral_radius(&m).unwrap();
        let want = oracle_radius(&m);
        assert!((got - want).abs() <= 1e-6 * want, "{got} vs {want}");
    }
}

#[test]
fn sparse_reservoir_sizes_match_oracle() {
    let mut rng = RngStream::new(12, 0);
    for &(n, density) in &[(100, 0.1), (300, 0.05), (300, 0.05), (300, 0.05)] {
        let m = sparse(n, density, &mut rng);
        let got = spectral_radius(&m).unwrap();
        let want = oracle_radius(&m);
        assert!((got - want).abs() <= 1e-6 * want, "n={n}: {got} vs {want}");
    }
}

#[test]
fn eigenvalue_sum_is_trace() {
    let mut rng = RngStream::new(13, 0);
    let m = Matrix::random_uniform(40, 40, -1.0, 1.0, &mut rng);
    let ev = eigenvalues(&m).unwrap();
    let re: f64 = ev.iter().map(|e| e.0).sum();
    let im: f64 = ev.iter().map(|e| e.1).sum();
    let trace: f64 = (0..40).map(|i| m[(i, i)]).sum();
    assert!((re - trace).abs() < 1e-9);
    assert!(im.abs() < 1e-9);
}
