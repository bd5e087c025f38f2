//! Sample moments with leave-one-out (jackknife) standard errors.
//!
//! Data are shifted by their first observation before centering, so a
//! constant input yields exactly zero variance and zero standard error.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

fn centered(xs: &[f64]) -> Vec<f64> {
    let shift = xs[0];
    let y: Vec<f64> = xs.iter().map(|x| x - shift).collect();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.into_iter().map(|v| v - mean).collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    let shift = xs[0];
    shift + xs.iter().map(|x| x - shift).sum::<f64>() / xs.len() as f64
}

/// Mean with the usual `s / √R` standard error.
pub fn mean_estimate(xs: &[f64]) -> Estimate {
    let r = xs.len() as f64;
    let se = if xs.len() > 1 { (sample_covariance(xs, xs) / r).sqrt() } else { 0.0 };
    Estimate { value: mean(xs), std_error: se }
}

pub fn sample_covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "covariance needs at least two replicates");
    let cx = centered(xs);
    let cy = centered(ys);
    cx.iter().zip(&cy).map(|(a, b)| a * b).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sample_variance(xs: &[f64]) -> f64 {
    sample_covariance(xs, xs)
}

/// Leave-one-out sample covariances; needs at least three replicates.
pub fn loo_covariances(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    assert_eq!(xs.len(), ys.len());
    let r = xs.len();
    assert!(r >= 3, "leave-one-out covariance needs at least three replicates");
    let cx = centered(xs);
    let cy = centered(ys);
    let total: f64 = cx.iter().zip(&cy).map(|(a, b)| a * b).sum();
    let rf = r as f64;
    cx.iter()
        .zip(&cy)
        .map(|(a, b)| (total - a * b * rf / (rf - 1.0)) / (rf - 2.0))
        .collect()
}

pub fn loo_variances(xs: &[f64]) -> Vec<f64> {
    loo_covariances(xs, xs)
}

pub fn loo_means(xs: &[f64]) -> Vec<f64> {
    let r = xs.len() as f64;
    let shift = xs[0];
    let total: f64 = xs.iter().map(|x| x - shift).sum();
    xs.iter().map(|x| shift + (total - (x - shift)) / (r - 1.0)).collect()
}

/// Jackknife standard error from leave-one-out replicates of a statistic.
pub fn jackknife_se(loo: &[f64]) -> f64 {
    let r = loo.len() as f64;
    if loo.len() < 2 {
        return 0.0;
    }
    let c = centered(loo);
    ((r - 1.0) / r * c.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

/// Sample covariance with its jackknife standard error. With only two
/// replicates the normal-theory value `|cov|·√2` stands in for the jackknife.
pub fn covariance_estimate(xs: &[f64], ys: &[f64]) -> Estimate {
    let value = sample_covariance(xs, ys);
    let std_error = if xs.len() >= 3 {
        jackknife_se(&loo_covariances(xs, ys))
    } else {
        value.abs() * 2f64.sqrt()
    };
    Estimate { value, std_error }
}

pub fn variance_estimate(xs: &[f64]) -> Estimate {
    covariance_estimate(xs, xs)
}
