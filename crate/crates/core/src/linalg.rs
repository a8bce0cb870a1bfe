//! Dense row-major matrices and the handful of solvers the pipeline needs.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims("Matrix::from_vec", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::dims("Matrix::from_rows", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Entries i.i.d. uniform on `[lo, hi)`.
    pub fn random_uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut RngStream) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.uniform_range(lo, hi))
            .collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dims(
                "matmul",
                format!("{} rows on the right", self.cols),
                other.rows,
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Dense matrix-vector product.
pub fn matvec(m: &Matrix, v: &[f64]) -> Result<Vec<f64>> {
    if m.cols != v.len() {
        return Err(Error::dims("matvec", m.cols, v.len()));
    }
    Ok((0..m.rows).map(|r| dot(m.row(r), v)).collect())
}

/// Solves `min_W ‖XW − Y‖² + λ‖W‖²` through the normal equations
/// `(XᵀX + λI) W = XᵀY` with a Cholesky factorization.
///
/// A non-positive or vanishing pivot is reported as [`Error::Singular`];
/// the system is never regularized behind the caller's back.
pub fn ridge_solve(x: &Matrix, y: &Matrix, lambda: f64) -> Result<Matrix> {
    if x.rows == 0 {
        return Err(Error::param("X", "needs at least one row"));
    }
    if x.rows != y.rows {
        return Err(Error::dims("ridge_solve", x.rows, y.rows));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::param(
            "lambda",
            format!("must be finite and >= 0, got {lambda}"),
        ));
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::NonFinite("ridge_solve input"));
    }
    let k = x.cols;
    let m = y.cols;

    // Upper triangle of XᵀX, then mirror.
    let mut gram = Matrix::zeros(k, k);
    let mut rhs = Matrix::zeros(k, m);
    for n in 0..x.rows {
        let xr = x.row(n);
        let yr = y.row(n);
        for a in 0..k {
            let xa = xr[a];
            if xa == 0.0 {
                continue;
            }
            let g = &mut gram.data[a * k..(a + 1) * k];
            for b in a..k {
                g[b] += xa * xr[b];
            }
            let r = &mut rhs.data[a * m..(a + 1) * m];
            for (o, &yv) in r.iter_mut().zip(yr) {
                *o += xa * yv;
            }
        }
    }
    for a in 0..k {
        gram[(a, a)] += lambda;
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }

    let chol = cholesky(&gram)?;
    Ok(cholesky_solve(&chol, &rhs))
}

/// Lower-triangular factor `L` with `A = L Lᵀ`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::dims(
            "cholesky",
            "square matrix",
            format!("{}x{}", a.rows, a.cols),
        ));
    }
    let n = a.rows;
    let max_diag = (0..n).fold(0.0_f64, |m, i| m.max(a[(i, i)].abs()));
    let tol = f64::EPSILON * n as f64 * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if !(d > tol) {
            return Err(Error::Singular { row: j, pivot: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ X = B` column by column.
pub fn cholesky_solve(l: &Matrix, b: &Matrix) -> Matrix {
    let n = l.rows;
    let m = b.cols;
    let mut x = b.clone();
    for c in 0..m {
        // forward: L z = b
        for i in 0..n {
            let mut s = x[(i, c)];
            for p in 0..i {
                s -= l[(i, p)] * x[(p, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        // backward: Lᵀ x = z
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for p in (i + 1)..n {
                s -= l[(p, i)] * x[(p, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

const QR_MAX_SWEEPS: usize = 60;

/// Largest eigenvalue modulus.
///
/// Computed from the full spectrum ([`eigenvalues`]). The leading
/// eigenvalues of sparse random matrices cluster tightly on the spectral edge,
/// which leaves plain power iteration with contraction ratios within 1e-3 of 1.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(0.0, f64::max))
}

/// All eigenvalues `(re, im)` of a real square matrix: reduction to upper
/// Hessenberg form by stabilized elimination, then Francis double-shift QR.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<(f64, f64)>> {
    if !m.is_square() {
        return Err(Error::dims(
            "eigenvalues",
            "square matrix",
            format!("{}x{}", m.rows, m.cols),
        ));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("eigenvalues input"));
    }
    let n = m.rows;
    if n == 0 {
        return Ok(Vec::new());
    }
    // 1-based working copy, (n+1)x(n+1)
    let w = n + 1;
    let mut a = vec![0.0; w * w];
    for r in 0..n {
        for c in 0..n {
            a[(r + 1) * w + (c + 1)] = m[(r, c)];
        }
    }
    hessenberg_in_place(&mut a, n);
    hessenberg_qr(&mut a, n)
}

fn hessenberg_in_place(a: &mut [f64], n: usize) {
    let w = n + 1;
    let at = |i: usize, j: usize| i * w + j;
    for mm in 2..n {
        let mut x = 0.0_f64;
        let mut piv = mm;
        for j in mm..=n {
            if a[at(j, mm - 1)].abs() > x.abs() {
                x = a[at(j, mm - 1)];
                piv = j;
            }
        }
        if piv != mm {
            for j in (mm - 1)..=n {
                a.swap(at(piv, j), at(mm, j));
            }
            for j in 1..=n {
                a.swap(at(j, piv), at(j, mm));
            }
        }
        if x != 0.0 {
            for i in (mm + 1)..=n {
                let mut y = a[at(i, mm - 1)];
                if y != 0.0 {
                    y /= x;
                    a[at(i, mm - 1)] = y;
                    for j in mm..=n {
                        a[at(i, j)] -= y * a[at(mm, j)];
                    }
                    for j in 1..=n {
                        a[at(j, mm)] += y * a[at(j, i)];
                    }
                }
            }
        }
    }
    // drop the stored multipliers below the subdiagonal
    for i in 3..=n {
        for j in 1..(i - 1) {
            a[at(i, j)] = 0.0;
        }
    }
}

#[allow(clippy::many_single_char_names)]
fn hessenberg_qr(a: &mut [f64], n: usize) -> Result<Vec<(f64, f64)>> {
    let w = n + 1;
    let at = |i: usize, j: usize| i * w + j;
    let sign = |a: f64, b: f64| if b >= 0.0 { a.abs() } else { -a.abs() };

    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0_f64;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += a[at(i, j)].abs();
        }
    }
    let mut nn = n as isize;
    let mut t = 0.0_f64;
    while nn >= 1 {
        let nu = nn as usize;
        let mut its = 0;
        loop {
            let nu = nn as usize;
            // look for a single small subdiagonal element
            let mut l = nu;
            while l >= 2 {
                let mut s = a[at(l - 1, l - 1)].abs() + a[at(l, l)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[at(l, l - 1)].abs() + s == s {
                    a[at(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[at(nu, nu)];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = a[at(nu - 1, nu - 1)];
            let mut ww = a[at(nu, nu - 1)] * a[at(nu - 1, nu)];
            if l == nu - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + ww;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + sign(z, p);
                    wr[nu - 1] = x + z;
                    wr[nu] = x + z;
                    if z != 0.0 {
                        wr[nu] = x - ww / z;
                    }
                    wi[nu - 1] = 0.0;
                    wi[nu] = 0.0;
                } else {
                    wr[nu - 1] = x + p;
                    wr[nu] = x + p;
                    wi[nu - 1] = -z;
                    wi[nu] = z;
                }
                nn -= 2;
                break;
            }
            if its == QR_MAX_SWEEPS {
                return Err(Error::NotConverged {
                    what: "Hessenberg QR eigenvalue sweep",
                    iterations: its,
                });
            }
            if its == 10 || its == 20 || its == 40 {
                // exceptional shift
                t += x;
                for i in 1..=nu {
                    a[at(i, i)] -= x;
                }
                let s = a[at(nu, nu - 1)].abs() + a[at(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                ww = -0.4375 * s * s;
            }
            its += 1;

            let (mut p, mut q, mut r, mut z);
            let mut mm = nu - 2;
            loop {
                z = a[at(mm, mm)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - ww) / a[at(mm + 1, mm)] + a[at(mm, mm + 1)];
                q = a[at(mm + 1, mm + 1)] - z - rr - ss;
                r = a[at(mm + 2, mm + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if mm == l {
                    break;
                }
                let u = a[at(mm, mm - 1)].abs() * (q.abs() + r.abs());
                let v =
                    p.abs() * (a[at(mm - 1, mm - 1)].abs() + z.abs() + a[at(mm + 1, mm + 1)].abs());
                if u + v == v {
                    break;
                }
                mm -= 1;
            }
            for i in (mm + 2)..=nu {
                a[at(i, i - 2)] = 0.0;
                if i != mm + 2 {
                    a[at(i, i - 3)] = 0.0;
                }
            }
            let mut k = mm;
            while k <= nu - 1 {
                if k != mm {
                    p = a[at(k, k - 1)];
                    q = a[at(k + 1, k - 1)];
                    r = 0.0;
                    if k != nu - 1 {
                        r = a[at(k + 2, k - 1)];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    if k == mm {
                        if l != mm {
                            a[at(k, k - 1)] = -a[at(k, k - 1)];
                        }
                    } else {
                        a[at(k, k - 1)] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        p = a[at(k, j)] + q * a[at(k + 1, j)];
                        if k != nu - 1 {
                            p += r * a[at(k + 2, j)];
                            a[at(k + 2, j)] -= p * z;
                        }
                        a[at(k + 1, j)] -= p * y;
                        a[at(k, j)] -= p * x;
                    }
                    let mmin = nu.min(k + 3);
                    for i in l..=mmin {
                        p = x * a[at(i, k)] + y * a[at(i, k + 1)];
                        if k != nu - 1 {
                            p += z * a[at(i, k + 2)];
                            a[at(i, k + 2)] -= p * r;
                        }
                        a[at(i, k + 1)] -= p * q;
                        a[at(i, k)] -= p;
                    }
                }
                k += 1;
            }
            if l >= nu - 1 {
                break;
            }
        }
        let _ = nu;
    }
    Ok((1..=n).map(|i| (wr[i], wi[i])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn triple_loop(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    #[test]
    fn matvec_identity_and_hand_case() {
        let v = vec![1.5, -2.0, 3.0];
        assert_eq!(matvec(&Matrix::identity(3), &v).unwrap(), v);
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matvec(&m, &[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn matvec_rejects_mismatch() {
        let m = Matrix::zeros(2, 3);
        assert!(matches!(
            matvec(&m, &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = RngStream::new(1, 0);
        let a = Matrix::random_uniform(5, 7, -1.0, 1.0, &mut rng);
        let b = Matrix::random_uniform(7, 4, -1.0, 1.0, &mut rng);
        let got = a.matmul(&b).unwrap();
        let want = triple_loop(&a, &b);
        for (g, w) in got.as_slice().iter().zip(want.as_slice()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn ridge_identity_returns_targets() {
        let y = Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5], vec![4.0, 4.0]]).unwrap();
        let w = ridge_solve(&Matrix::identity(3), &y, 0.0).unwrap();
        for (a, b) in w.as_slice().iter().zip(y.as_slice()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn ridge_recovers_planted_weights() {
        let mut rng = RngStream::new(2, 0);
        let x = Matrix::random_uniform(50, 6, -1.0, 1.0, &mut rng);
        let w0 = Matrix::random_uniform(6, 2, -3.0, 3.0, &mut rng);
        let y = x.matmul(&w0).unwrap();
        let w = ridge_solve(&x, &y, 0.0).unwrap();
        for (a, b) in w.as_slice().iter().zip(w0.as_slice()) {
            assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn ridge_reports_singular_at_zero_lambda() {
        // duplicated column
        let x = Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]).unwrap();
        let y = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        assert!(matches!(
            ridge_solve(&x, &y, 0.0),
            Err(Error::Singular { .. })
        ));
        assert!(ridge_solve(&x, &y, 1e-3).is_ok());
    }

    #[test]
    fn ridge_rejects_negative_lambda() {
        let x = Matrix::identity(2);
        assert!(ridge_solve(&x, &x, -1.0).is_err());
    }

    #[test]
    fn spectral_radius_diagonal_and_nilpotent() {
        let d = Matrix::diagonal(&[0.5, -0.9]);
        assert_relative_eq!(spectral_radius(&d).unwrap(), 0.9, max_relative = 1e-9);
        let nil = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(spectral_radius(&nil).unwrap(), 0.0);
    }

    #[test]
    fn spectral_radius_rotation_pair() {
        // eigenvalues 0.8·e^{±iπ/3} plus a smaller real one
        let c = 0.8 * (std::f64::consts::PI / 3.0).cos();
        let s = 0.8 * (std::f64::consts::PI / 3.0).sin();
        let m =
            Matrix::from_rows(&[vec![c, -s, 0.0], vec![s, c, 0.0], vec![0.0, 0.0, 0.3]]).unwrap();
        assert_relative_eq!(spectral_radius(&m).unwrap(), 0.8, max_relative = 1e-9);
    }

    #[test]
    fn eigenvalues_of_triangular_are_its_diagonal() {
        let m = Matrix::from_rows(&[
            vec![2.0, 1.0, 5.0],
            vec![0.0, -3.0, 4.0],
            vec![0.0, 0.0, 0.5],
        ])
        .unwrap();
        let mut ev: Vec<f64> = eigenvalues(&m).unwrap().iter().map(|e| e.0).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (g, w) in ev.iter().zip([-3.0, 0.5, 2.0]) {
            assert_relative_eq!(*g, w, epsilon = 1e-12);
        }
    }

    #[test]
    fn spectral_radius_rejects_non_square() {
        assert!(spectral_radius(&Matrix::zeros(2, 3)).is_err());
    }
}
