//! Cubic regression splines parameterised by their values at the knots.
//!
//! With knots `x_0 < … < x_{k-1}` and spacings `h_j`, a natural cubic spline
//! is fixed by its knot values `β` because the knot second derivatives solve
//! `B δ_inner = D β` with `δ_0 = δ_{k-1} = 0`. The k×k matrix `F` mapping
//! `β ↦ δ` gives both the basis (each column is the cardinal spline for one
//! knot) and the exact wiggliness penalty `Fᵀ M F`, where `M` is the Gram
//! matrix of the piecewise-linear second derivative.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::BasisError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CrKnots", into = "CrKnots")]
pub struct CrBasis {
    knots: Vec<f64>,
    second_deriv: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct CrKnots {
    knots: Vec<f64>,
}

impl From<CrBasis> for CrKnots {
    fn from(b: CrBasis) -> Self {
        CrKnots { knots: b.knots }
    }
}

impl TryFrom<CrKnots> for CrBasis {
    type Error = BasisError;
    fn try_from(k: CrKnots) -> Result<Self, Self::Error> {
        CrBasis::new(k.knots)
    }
}

impl CrBasis {
    pub fn new(knots: Vec<f64>) -> Result<Self, BasisError> {
        if knots.len() < 3 {
            return Err(BasisError::InvalidKnots(format!(
                "need at least 3 knots, got {}",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(BasisError::InvalidKnots(
                "knots must be finite and strictly increasing".into(),
            ));
        }
        let f = second_derivative_map(&knots);
        Ok(CrBasis { knots, second_deriv: f })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn dim(&self) -> usize {
        self.knots.len()
    }

    fn f(&self) -> &DMatrix<f64> {
        &self.second_deriv
    }

    /// Exact ∫ f''(x)² dx as a quadratic form in the knot values.
    pub fn penalty(&self) -> DMatrix<f64> {
        let k = self.dim();
        let mut m = DMatrix::zeros(k, k);
        for j in 0..k - 1 {
            let h = self.knots[j + 1] - self.knots[j];
            m[(j, j)] += h / 3.0;
            m[(j + 1, j + 1)] += h / 3.0;
            m[(j, j + 1)] += h / 6.0;
            m[(j + 1, j)] += h / 6.0;
        }
        let f = self.f();
        let s = f.transpose() * m * f;
        crate::linalg::symmetrize(&s)
    }

    /// Fill `row` with the basis values at `x`; returns true when `x` lies
    /// outside the knot range (linear extrapolation).
    pub fn eval_row(&self, x: f64, row: &mut [f64]) -> bool {
        let k = self.dim();
        let kn = &self.knots;
        let f = self.f();
        row.iter_mut().for_each(|v| *v = 0.0);
        if x < kn[0] {
            let h = kn[1] - kn[0];
            let dx = x - kn[0];
            for i in 0..k {
                row[i] = dx * (-h / 3.0 * f[(0, i)] - h / 6.0 * f[(1, i)]);
            }
            row[0] += 1.0 - dx / h;
            row[1] += dx / h;
            return true;
        }
        if x > kn[k - 1] {
            let h = kn[k - 1] - kn[k - 2];
            let dx = x - kn[k - 1];
            for i in 0..k {
                row[i] = dx * (h / 6.0 * f[(k - 2, i)] + h / 3.0 * f[(k - 1, i)]);
            }
            row[k - 1] += 1.0 + dx / h;
            row[k - 2] -= dx / h;
            return true;
        }
        let j = interval(kn, x);
        let h = kn[j + 1] - kn[j];
        let am = (kn[j + 1] - x) / h;
        let ap = (x - kn[j]) / h;
        let cm = ((kn[j + 1] - x).powi(3) / h - h * (kn[j + 1] - x)) / 6.0;
        let cp = ((x - kn[j]).powi(3) / h - h * (x - kn[j])) / 6.0;
        for i in 0..k {
            row[i] = cm * f[(j, i)] + cp * f[(j + 1, i)];
        }
        row[j] += am;
        row[j + 1] += ap;
        false
    }

    pub fn eval(&self, x: &[f64]) -> (DMatrix<f64>, Vec<bool>) {
        let k = self.dim();
        let mut out = DMatrix::zeros(x.len(), k);
        let mut flags = Vec::with_capacity(x.len());
        let mut row = vec![0.0; k];
        for (r, &xi) in x.iter().enumerate() {
            flags.push(self.eval_row(xi, &mut row));
            for c in 0..k {
                out[(r, c)] = row[c];
            }
        }
        (out, flags)
    }
}

/// Index j of the knot interval `[x_j, x_{j+1}]` containing `x`.
fn interval(knots: &[f64], x: f64) -> usize {
    let k = knots.len();
    let idx = knots.partition_point(|&v| v <= x);
    idx.saturating_sub(1).min(k - 2)
}

fn second_derivative_map(knots: &[f64]) -> DMatrix<f64> {
    let k = knots.len();
    let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
    let mut d = DMatrix::zeros(k - 2, k);
    let mut b = DMatrix::zeros(k - 2, k - 2);
    for i in 0..k - 2 {
        d[(i, i)] = 1.0 / h[i];
        d[(i, i + 1)] = -1.0 / h[i] - 1.0 / h[i + 1];
        d[(i, i + 2)] = 1.0 / h[i + 1];
        b[(i, i)] = (h[i] + h[i + 1]) / 3.0;
        if i + 1 < k - 2 {
            b[(i, i + 1)] = h[i + 1] / 6.0;
            b[(i + 1, i)] = h[i + 1] / 6.0;
        }
    }
    let inner = b.cholesky().expect("tridiagonal B is diagonally dominant").solve(&d);
    let mut f = DMatrix::zeros(k, k);
    f.view_mut((1, 0), (k - 2, k)).copy_from(&inner);
    f
}
