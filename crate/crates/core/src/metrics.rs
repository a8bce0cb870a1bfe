//! Error metrics.

use crate::error::{Error, Result};

/// Root-mean-square error normalized by the variance of `target`:
/// `sqrt(mean((pred − target)²) / var(target))`.
pub fn nrmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::dims("nrmse", target.len(), pred.len()));
    }
    if target.len() < 2 {
        return Err(Error::param("target", "needs at least two samples"));
    }
    let n = target.len() as f64;
    let mean = target.iter().sum::<f64>() / n;
    let var = target.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::param("target", "has zero variance"));
    }
    let mse = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n;
    let v = (mse / var).sqrt();
    if !v.is_finite() {
        return Err(Error::NonFinite("nrmse"));
    }
    Ok(v)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_series_score_zero() {
        let x = [0.1, -0.4, 2.0, 3.5];
        assert_eq!(nrmse(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_on_bipolar_target() {
        // var = 0.25, rmse = 0.1 => sqrt(0.01 / 0.25) = 0.2
        let target: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let pred: Vec<f64> = target.iter().map(|t| t + 0.1).collect();
        assert!((nrmse(&pred, &target).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(nrmse(&[1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(nrmse(&[1.0, 2.0], &[3.0, 3.0]).is_err());
        assert!(nrmse(&[1.0], &[1.0]).is_err());
    }

    fn direct(pred: &[f64], target: &[f64]) -> f64 {
        let n = target.len() as f64;
        let m = target.iter().sum::<f64>() / n;
        let var = target.iter().map(|t| (t - m) * (t - m)).sum::<f64>() / n;
        let mse = pred
            .iter()
            .zip(target)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / n;
        (mse / var).sqrt()
    }

    proptest! {
        #[test]
        fn self_distance_is_zero(xs in prop::collection::vec(-1e3f64..1e3, 2..50)) {
            prop_assume!(xs.iter().any(|x| *x != xs[0]));
            prop_assert_eq!(nrmse(&xs, &xs).unwrap(), 0.0);
        }

        #[test]
        fn common_shift_matches_direct_formula(
            pairs in prop::collection::vec((-10f64..10.0, -10f64..10.0), 3..40),
            c in -100f64..100.0,
        ) {
            let pred: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let target: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(target.iter().any(|t| (t - target[0]).abs() > 1e-3));
            let ps: Vec<f64> = pred.iter().map(|p| p + c).collect();
            let ts: Vec<f64> = target.iter().map(|t| t + c).collect();
            let got = nrmse(&ps, &ts).unwrap();
            let want = direct(&ps, &ts);
            prop_assert!((got - want).abs() <= 1e-9 * want.max(1.0));
            // shifting both leaves the error and the target variance unchanged
            prop_assert!((got - nrmse(&pred, &target).unwrap()).abs() <= 1e-6 * want.max(1.0));
        }
    }
}
