//! Valid-mode 2D convolution and non-overlapping max pooling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::linalg::Matrix;

/// A `rows × cols` convolution kernel with odd side lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>) -> Result<Self> {
        if rows % 2 == 0 || cols % 2 == 0 {
            return Err(Error::param(
                "kernel",
                format!("sides must be odd, got {rows}x{cols}"),
            ));
        }
        if weights.len() != rows * cols {
            return Err(Error::dims("Kernel::new", rows * cols, weights.len()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("kernel weights"));
        }
        Ok(Self {
            rows,
            cols,
            weights,
        })
    }

    pub fn identity() -> Self {
        Self {
            rows: 1,
            cols: 1,
            weights: vec![1.0],
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![1.0; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.weights[p * self.cols + q]
    }
}

/// `B = U * A` for a frame `A`.
pub fn convolve2d(a: &Frame, u: &Kernel) -> Result<Matrix> {
    let m = Matrix::from_vec(a.height(), a.width(), a.pixels().to_vec())?;
    convolve_map(&m, u)
}

/// Valid-mode sliding product `B[r, c] = Σ U[p, q]·A[r+p, c+q]` with output
/// `(m − j + 1) × (n − k + 1)`.
pub fn convolve_map(a: &Matrix, u: &Kernel) -> Result<Matrix> {
    if u.rows > a.rows() || u.cols > a.cols() {
        return Err(Error::dims(
            "convolve2d",
            format!("input at least {}x{}", u.rows, u.cols),
            format!("{}x{}", a.rows(), a.cols()),
        ));
    }
    let out_r = a.rows() - u.rows + 1;
    let out_c = a.cols() - u.cols + 1;
    let mut out = Matrix::zeros(out_r, out_c);
    for r in 0..out_r {
        for p in 0..u.rows {
            let src = &a.row(r + p);
            let w = &u.weights[p * u.cols..(p + 1) * u.cols];
            let dst = out.row_mut(r);
            for (c, o) in dst.iter_mut().enumerate() {
                let s = &src[c..c + u.cols];
                *o += w.iter().zip(s).map(|(x, y)| x * y).sum::<f64>();
            }
        }
    }
    Ok(out)
}

/// Non-overlapping `window × window` max pooling. Partial windows at the
/// right and bottom edges are dropped.
pub fn pool(b: &Matrix, window: usize) -> Result<Matrix> {
    if window == 0 {
        return Err(Error::param("window", "must be at least 1"));
    }
    if window > b.rows() && window > b.cols() {
        return Err(Error::dims(
            "pool",
            format!("a side of at least {window}"),
            format!("{}x{}", b.rows(), b.cols()),
        ));
    }
    let out_r = b.rows() / window;
    let out_c = b.cols() / window;
    let mut out = Matrix::zeros(out_r, out_c);
    for r in 0..out_r {
        for c in 0..out_c {
            let mut m = f64::NEG_INFINITY;
            for dr in 0..window {
                for &v in &b.row(r * window + dr)[c * window..(c + 1) * window] {
                    m = m.max(v);
                }
            }
            out[(r, c)] = m;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel() {
        let f = Frame::from_fn(5, 4, |x, y| (x + 2 * y) as f64 / 20.0);
        let b = convolve2d(&f, &Kernel::identity()).unwrap();
        assert_eq!(b.as_slice(), f.pixels());
    }

    #[test]
    fn constant_frame_with_ones() {
        let f = Frame::filled(7, 6, 0.3).unwrap();
        let b = convolve2d(&f, &Kernel::ones(3, 3).unwrap()).unwrap();
        assert_eq!((b.rows(), b.cols()), (4, 5));
        assert!(b.as_slice().iter().all(|v| (v - 2.7).abs() < 1e-14));
    }

    #[test]
    fn kernel_larger_than_frame() {
        let f = Frame::zeros(2, 5);
        assert!(convolve2d(&f, &Kernel::ones(3, 3).unwrap()).is_err());
    }

    #[test]
    fn even_kernel_rejected() {
        assert!(Kernel::new(2, 3, vec![0.0; 6]).is_err());
    }

    #[test]
    fn pool_hand_case() {
        let b = Matrix::from_rows(&[
            vec![1.0, 5.0, 2.0, 0.0],
            vec![3.0, 2.0, 8.0, 1.0],
            vec![-1.0, -2.0, 0.5, 0.25],
            vec![-3.0, -4.0, 0.75, 0.0],
        ])
        .unwrap();
        let p = pool(&b, 2).unwrap();
        assert_eq!(p.as_slice(), &[5.0, 8.0, -1.0, 0.75]);
    }

    #[test]
    fn pool_window_one_and_errors() {
        let b = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(pool(&b, 1).unwrap(), b);
        assert!(pool(&b, 0).is_err());
        assert!(pool(&b, 4).is_err());
        assert_eq!(pool(&b, 3).unwrap().rows(), 0);
    }
}
