//! Independent reference computations shared by the oracle tests and the
//! acceptance run.

#![allow(dead_code)]

use gamforge::{Dataset, FittedGam};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Second derivatives at the knots of the natural cubic interpolant of `y`.
pub fn natural_second_derivs(knots: &[f64], y: &[f64]) -> Vec<f64> {
    let k = knots.len();
    let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
    let mut a = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    a[(0, 0)] = 1.0;
    a[(k - 1, k - 1)] = 1.0;
    for j in 1..k - 1 {
        a[(j, j - 1)] = h[j - 1];
        a[(j, j)] = 2.0 * (h[j - 1] + h[j]);
        a[(j, j + 1)] = h[j];
        rhs[j] = 6.0 * ((y[j + 1] - y[j]) / h[j] - (y[j] - y[j - 1]) / h[j - 1]);
    }
    a.lu().solve(&rhs).unwrap().iter().copied().collect()
}

fn interval(knots: &[f64], x: f64) -> usize {
    knots.windows(2).position(|w| x <= w[1]).unwrap_or(knots.len() - 2)
}

pub fn spline_value(knots: &[f64], y: &[f64], m: &[f64], x: f64) -> f64 {
    let j = interval(knots, x);
    let (a, b) = (knots[j], knots[j + 1]);
    let h = b - a;
    m[j] * (b - x).powi(3) / (6.0 * h)
        + m[j + 1] * (x - a).powi(3) / (6.0 * h)
        + (y[j] / h - m[j] * h / 6.0) * (b - x)
        + (y[j + 1] / h - m[j + 1] * h / 6.0) * (x - a)
}

fn spline_second(knots: &[f64], m: &[f64], x: f64) -> f64 {
    let j = interval(knots, x);
    let t = (x - knots[j]) / (knots[j + 1] - knots[j]);
    m[j] * (1.0 - t) + m[j + 1] * t
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f((a + b) / 2.0) + f(b))
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = (a + b) / 2.0;
    let left = simpson(f, a, m);
    let right = simpson(f, m, b);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        left + right + (left + right - whole) / 15.0
    } else {
        adaptive_simpson(f, a, m, left, tol / 2.0, depth - 1) + adaptive_simpson(f, m, b, right, tol / 2.0, depth - 1)
    }
}

/// ∫ f over the knot range, integrating each knot interval separately so the
/// kinks of the piecewise-linear second derivatives fall on endpoints.
fn integrate(knots: &[f64], f: &dyn Fn(f64) -> f64) -> f64 {
    knots
        .windows(2)
        .map(|w| {
            let whole = simpson(f, w[0], w[1]);
            adaptive_simpson(f, w[0], w[1], whole, 1e-12 * whole.abs().max(1e-3), 12)
        })
        .sum()
}

pub fn random_x(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-2.0..3.0f64).powi(3)).collect()
}

/// `∫ b_i'' b_j''` for the natural cubic cardinal splines on `knots`, by
/// adaptive Simpson quadrature.
pub fn cr_penalty_by_quadrature(knots: &[f64]) -> DMatrix<f64> {
    let k = knots.len();
    let seconds: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut e = vec![0.0; k];
            e[i] = 1.0;
            natural_second_derivs(knots, &e)
        })
        .collect();
    DMatrix::from_fn(k, k, |i, j| {
        let (mi, mj) = (&seconds[i], &seconds[j]);
        integrate(knots, &|t| spline_second(knots, mi, t) * spline_second(knots, mj, t))
    })
}

/// `(XᵀX + S)⁻¹ Xᵀ y` by plain LU.
pub fn dense_normal_equations(x: &DMatrix<f64>, s: &DMatrix<f64>, y: &[f64]) -> DVector<f64> {
    let a = x.transpose() * x + s;
    a.lu().solve(&(x.transpose() * DVector::from_column_slice(y))).unwrap()
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn gu_wahba(x: f64) -> f64 {
    0.2 * x.powi(11) * (10.0 * (1.0 - x)).powi(6) + 10.0 * (10.0 * x).powi(3) * (1.0 - x).powi(10)
}

/// `x` uniform on [0, 1], `y = f(x) + σ·ε`.
pub fn one_covariate(n: usize, seed: u64, f: impl Fn(f64) -> f64, sigma: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&v| f(v) + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Dataset::from_columns([("x", x), ("y", y)]).unwrap()
}

/// RMSE between fitted smooth and truth on a 200-point grid, both centred.
pub fn centred_rmse(m: &FittedGam, truth: impl Fn(f64) -> f64) -> f64 {
    let grid: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
    let nd = Dataset::from_columns([("x", grid.clone())]).unwrap();
    let (x, _) = m.prediction_matrix(&nd).unwrap();
    let f_hat: Vec<f64> = (x * m.beta_vec()).iter().copied().collect();
    let f_true: Vec<f64> = grid.iter().map(|&v| truth(v)).collect();
    let mh = f_hat.iter().sum::<f64>() / 200.0;
    let mt = f_true.iter().sum::<f64>() / 200.0;
    (f_hat
        .iter()
        .zip(&f_true)
        .map(|(a, b)| ((a - mh) - (b - mt)).powi(2))
        .sum::<f64>()
        / 200.0)
        .sqrt()
}
