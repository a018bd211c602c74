//! Simulated data sets and fitted models reused across test targets.

#![allow(dead_code)]

use std::f64::consts::PI;

use gamforge::basis::BasisOptions;
use gamforge::diagnostics::QqData;
use gamforge::engine::assemble_design;
use gamforge::{fit, parse_formula, Dataset, Family, FitControl, FittedGam, Method};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// One fixed-λ gaussian problem `(X, S, y)` with p ≤ 20 and n ≤ 100.
/// Even instances are dense random ridge problems, odd ones come from
/// assembled spline designs with random smoothing parameters.
pub fn normal_equation_instance(rng: &mut ChaCha8Rng, inst: usize) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
    let n = rng.random_range(25..=100);
    if inst.is_multiple_of(2) {
        let p = rng.random_range(2..=20.min(n - 5));
        let x = DMatrix::from_fn(n, p, |_, _| normal(rng));
        let r = rng.random_range(1..=p);
        let b = DMatrix::from_fn(r, p, |_, _| normal(rng));
        let lambda = 10f64.powf(rng.random_range(-3.0..3.0));
        let y: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
        (x, b.transpose() * b * lambda, y)
    } else {
        let k = rng.random_range(4..=9);
        let text = if inst % 4 == 1 {
            format!("y ~ z + s(x, k={k})")
        } else {
            format!("y ~ s(x, bs=\"cr\", k={k}) + s(z, k=5)")
        };
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let zs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = xs.iter().map(|&v| (5.0 * v).sin() + 0.3 * normal(rng)).collect();
        let data = Dataset::from_columns([("x", xs), ("z", zs), ("y", y.clone())]).unwrap();
        let a = assemble_design(&parse_formula(&text).unwrap(), &data, BasisOptions::default()).unwrap();
        let lambda: Vec<f64> = a
            .smooths
            .iter()
            .map(|_| 10f64.powf(rng.random_range(-2.0..2.0)))
            .collect();
        let s = a.total_penalty(&lambda);
        (a.x, s, y)
    }
}

/// `y = sin(5x) + z² + 0.3ε`, fitted with two smooths by REML.
pub fn two_covariate_model() -> FittedGam {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 150;
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let z: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let y: Vec<f64> = x
        .iter()
        .zip(&z)
        .map(|(a, b)| (5.0 * a).sin() + b * b + 0.3 * normal(&mut rng))
        .collect();
    let d = Dataset::from_columns([("x", x), ("z", z), ("y", y)]).unwrap();
    fit(
        &parse_formula("y ~ s(x, k=6) + s(z, bs=\"cr\", k=5)").unwrap(),
        &d,
        Family::gaussian(),
        Method::Reml,
        &FitControl::default(),
    )
    .unwrap()
}

pub fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    m.column_iter().map(|c| c.mean()).collect()
}

pub fn sample_cov(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() as f64;
    let mean = m.row_mean();
    let centred = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] - mean[j]);
    centred.transpose() * centred / (n - 1.0)
}

/// Standard error of a chain mean by non-overlapping batch means.
pub fn batch_se(x: &[f64], batches: usize) -> f64 {
    let len = x.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| x[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|v| (v - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// n = 200, `sin(2πx) + 0.5ε`, REML.
pub fn gaussian_fit(seed: u64) -> FittedGam {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&v| (2.0 * PI * v).sin() + 0.5 * normal(&mut rng))
        .collect();
    let d = Dataset::from_columns([("x", x), ("y", y)]).unwrap();
    fit(
        &parse_formula("y ~ s(x)").unwrap(),
        &d,
        Family::gaussian(),
        Method::Reml,
        &FitControl::default(),
    )
    .unwrap()
}

/// n = 200, counts with mean `exp(1 + sin 2πx)`, GCV.
pub fn poisson_fit(seed: u64) -> FittedGam {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&v| Family::poisson().sample_one((1.0 + (2.0 * PI * v).sin()).exp(), 1.0, &mut rng))
        .collect();
    let d = Dataset::from_columns([("x", x), ("y", y)]).unwrap();
    fit(
        &parse_formula("y ~ s(x)").unwrap(),
        &d,
        Family::poisson(),
        Method::Gcv,
        &FitControl::default(),
    )
    .unwrap()
}

/// Fraction of sample quantiles inside the reference band.
pub fn qq_coverage(q: &QqData) -> f64 {
    let s = q.table.num("sample").unwrap();
    let lo = q.table.num("band_lower").unwrap();
    let hi = q.table.num("band_upper").unwrap();
    let inside = (0..s.len()).filter(|&i| lo[i] <= s[i] && s[i] <= hi[i]).count();
    inside as f64 / s.len() as f64
}

/// Band simulation draws from its own seed so it shares no stream with the
/// data generator.
pub const QQ_SEED_OFFSET: u64 = 10_000;

/// Poisson counts over a lat/lon box with a depth effect, fitted by GCV.
pub fn survey_model() -> FittedGam {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let n = 400;
    let lat: Vec<f64> = (0..n).map(|_| rng.random_range(40.0..50.0)).collect();
    let lon: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..0.0)).collect();
    let depth: Vec<f64> = (0..n).map(|_| rng.random_range(10.0..200.0)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let eta = 0.3 + ((lat[i] - 40.0) / 3.0).sin() + ((lon[i] + 10.0) / 4.0).cos() - depth[i] / 200.0;
            Family::poisson().sample_one(eta.exp(), 1.0, &mut rng)
        })
        .collect();
    let d = Dataset::from_columns([("lat", lat), ("lon", lon), ("depth", depth), ("count", y)]).unwrap();
    fit(
        &parse_formula("count ~ s(lat, lon, k=30) + s(depth, bs=\"cr\", k=6)").unwrap(),
        &d,
        Family::poisson(),
        Method::Gcv,
        &FitControl::default(),
    )
    .unwrap()
}
