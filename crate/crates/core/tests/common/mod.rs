#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use woe_core::density::{default_feature_names, ClassParams, Covariance};
use woe_core::{CovarianceMode, GaussianClassModel, HypothesisSet};

pub fn h(labels: &[usize]) -> HypothesisSet {
    HypothesisSet::new(labels.iter().copied()).unwrap()
}

pub fn random_spd<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut s = &a * a.transpose() / n as f64;
    for i in 0..n {
        s[(i, i)] += 0.5;
    }
    (&s + s.transpose()) * 0.5
}

pub fn random_priors<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|r| r / total).collect();
    // Land exactly on Σ = 1 up to one rounding.
    let rest: f64 = p[1..].iter().sum();
    p[0] = 1.0 - rest;
    p
}

pub fn random_model<R: Rng>(
    k: usize,
    n: usize,
    mode: CovarianceMode,
    rng: &mut R,
) -> GaussianClassModel {
    let priors = random_priors(k, rng);
    let classes = priors
        .into_iter()
        .map(|prior| {
            let mean = (0..n)
                .map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let covariance = match mode {
                CovarianceMode::Full => Covariance::Full(random_spd(n, rng)),
                CovarianceMode::Diagonal => {
                    Covariance::Diagonal((0..n).map(|_| rng.random_range(0.3..2.0)).collect())
                }
            };
            ClassParams {
                prior,
                mean,
                covariance,
            }
        })
        .collect();
    GaussianClassModel::from_parts(mode, default_feature_names(n), classes).unwrap()
}

pub fn one_d(means: &[f64], variances: &[f64], priors: &[f64]) -> GaussianClassModel {
    GaussianClassModel::from_parts(
        CovarianceMode::Diagonal,
        default_feature_names(1),
        means
            .iter()
            .zip(variances)
            .zip(priors)
            .map(|((&m, &v), &p)| ClassParams {
                prior: p,
                mean: vec![m],
                covariance: Covariance::Diagonal(vec![v]),
            })
            .collect(),
    )
    .unwrap()
}

/// Draws a point near the bulk of a random class.
pub fn random_point<R: Rng>(model: &GaussianClassModel, rng: &mut R) -> Vec<f64> {
    let c = rng.random_range(0..model.priors().len());
    let p = model.class_params(c);
    p.mean
        .iter()
        .map(|m| m + 1.5 * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Closed-form bivariate normal density, written out without any matrix
/// factorisation.
pub fn bivariate_pdf(x: f64, y: f64, mx: f64, my: f64, sx: f64, sy: f64, rho: f64) -> f64 {
    let zx = (x - mx) / sx;
    let zy = (y - my) / sy;
    let q = (zx * zx - 2.0 * rho * zx * zy + zy * zy) / (1.0 - rho * rho);
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * sx * sy * (1.0 - rho * rho).sqrt())
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}
