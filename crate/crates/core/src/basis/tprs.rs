//! Low-rank thin plate regression splines for one or two covariates.
//!
//! The full thin plate spline on the unique covariate rows has radial matrix
//! `E_ij = η(‖x_i − x_j‖)` and polynomial null space `T`. The rank-k basis
//! keeps the k eigenvectors of `E` with largest |eigenvalue| (`U_k`, `D_k`),
//! absorbs the side condition `Tᵀδ = 0` through an orthonormal `Z` with
//! `TᵀU_k Z = 0`, and rotates the result so that the penalty is diagonal:
//!
//! ```text
//! radial columns  e(x)ᵀ U_k Z V        penalty  Λ  (ZᵀD_kZ = VΛVᵀ)
//! null space      1, x_1, …, x_d       penalty  0
//! ```
//!
//! Columns are ordered penalized-first, so the last d columns are the linear
//! functions. Covariates are shifted and divided by a single common scale
//! (keeping the radial metric isotropic) before construction; the penalty is
//! converted back to original units.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::BasisError;
use crate::linalg::{null_space_of_transpose, serde_matrix, sym_eigen_desc, sym_eigen_sorted_by};

/// Unique covariate rows beyond this count are thinned before the dense
/// eigen-decomposition.
pub const MAX_CENTERS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpBasis {
    dim: usize,
    shift: Vec<f64>,
    scale: f64,
    /// Unique rows in rescaled units.
    centers: Vec<Vec<f64>>,
    #[serde(with = "serde_matrix")]
    radial_coef: DMatrix<f64>,
    /// Diagonal penalty in original covariate units (zeros for the null space).
    penalty_diag: Vec<f64>,
    /// Eigenvalues of the radial matrix that were kept, by decreasing magnitude.
    #[serde(default)]
    retained: Vec<f64>,
}

fn eta(dim: usize, r: f64) -> f64 {
    match dim {
        1 => r * r * r / 12.0,
        _ => {
            if r <= 0.0 {
                0.0
            } else {
                r * r * r.ln() / (8.0 * std::f64::consts::PI)
            }
        }
    }
}

/// Null-space dimension for m = 2: 2 in 1-D, 3 in 2-D.
pub fn null_space_dim(dim: usize) -> usize {
    dim + 1
}

impl TpBasis {
    /// Build a rank-`k` basis from covariate columns (each of length n).
    pub fn new(cols: &[&[f64]], k: usize, m: i32, rescale: bool) -> Result<Self, BasisError> {
        let dim = cols.len();
        if !(1..=2).contains(&dim) {
            return Err(BasisError::Dimension(dim));
        }
        if m != 2 {
            return Err(BasisError::PenaltyOrder(m));
        }
        let n = cols[0].len();
        if cols.iter().any(|c| c.len() != n) || n == 0 {
            return Err(BasisError::InvalidData(
                "covariate columns differ in length or are empty".into(),
            ));
        }
        let null_dim = null_space_dim(dim);
        if k <= null_dim {
            return Err(BasisError::RankTooSmall { k, null_dim });
        }

        let (shift, scale) = if rescale {
            let shift: Vec<f64> = cols
                .iter()
                .map(|c| c.iter().cloned().fold(f64::INFINITY, f64::min))
                .collect();
            let scale = cols
                .iter()
                .zip(&shift)
                .map(|(c, lo)| c.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - lo)
                .fold(0.0f64, f64::max);
            (shift, if scale > 0.0 { scale } else { 1.0 })
        } else {
            (vec![0.0; dim], 1.0)
        };

        let mut rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..dim).map(|d| (cols[d][i] - shift[d]) / scale).collect())
            .collect();
        rows.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        rows.dedup();
        if rows.len() > MAX_CENTERS {
            let nu = rows.len();
            rows = (0..MAX_CENTERS).map(|i| rows[i * nu / MAX_CENTERS].clone()).collect();
        }
        let nu = rows.len();
        if nu < k {
            return Err(BasisError::TooFewUnique { needed: k, found: nu });
        }

        let mut e = DMatrix::zeros(nu, nu);
        for i in 0..nu {
            for j in 0..i {
                let v = eta(dim, dist(&rows[i], &rows[j]));
                e[(i, j)] = v;
                e[(j, i)] = v;
            }
        }
        let (vals, vecs) = sym_eigen_sorted_by(&e, f64::abs);
        let uk = vecs.columns(0, k).into_owned();
        let dk: Vec<f64> = vals.iter().take(k).copied().collect();

        let mut t = DMatrix::zeros(nu, null_dim);
        for (i, r) in rows.iter().enumerate() {
            t[(i, 0)] = 1.0;
            for d in 0..dim {
                t[(i, d + 1)] = r[d];
            }
        }
        let a = uk.transpose() * &t;
        let z = null_space_of_transpose(&a);
        let p = z.transpose() * DMatrix::from_diagonal(&DVector::from_vec(dk.clone())) * &z;
        let (lambda, v) = sym_eigen_desc(&p);
        let radial_coef = &uk * &z * &v;

        let unit = scale.powi(4 - dim as i32); // scale^(2m - d)
        let mut penalty_diag: Vec<f64> = lambda.iter().map(|l| l.max(0.0) / unit).collect();
        penalty_diag.extend(std::iter::repeat_n(0.0, null_dim));

        Ok(TpBasis {
            dim,
            shift,
            scale,
            centers: rows,
            radial_coef,
            penalty_diag,
            retained: dk,
        })
    }

    pub fn k(&self) -> usize {
        self.penalty_diag.len()
    }

    pub fn null_dim(&self) -> usize {
        null_space_dim(self.dim)
    }

    pub fn covariate_dim(&self) -> usize {
        self.dim
    }

    pub fn penalty(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(self.penalty_diag.clone()))
    }

    /// Eigenvalues of the radial matrix kept by the truncation.
    pub fn retained_eigenvalues(&self) -> &[f64] {
        &self.retained
    }

    /// Diagonal of the penalty (original units).
    pub fn penalty_eigenvalues(&self) -> &[f64] {
        &self.penalty_diag
    }

    /// Centre locations in original units, one vector per covariate.
    pub fn centers(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|d| self.centers.iter().map(|r| r[d] * self.scale + self.shift[d]).collect())
            .collect()
    }

    /// Index of the constant column.
    pub fn constant_column(&self) -> usize {
        self.k() - self.null_dim()
    }

    pub fn eval(&self, cols: &[&[f64]]) -> DMatrix<f64> {
        let n = cols.first().map(|c| c.len()).unwrap_or(0);
        let k = self.k();
        let nr = self.radial_coef.ncols();
        let nu = self.centers.len();
        let mut out = DMatrix::zeros(n, k);
        let mut e = DVector::zeros(nu);
        let mut u = vec![0.0; self.dim];
        for i in 0..n {
            for d in 0..self.dim {
                u[d] = (cols[d][i] - self.shift[d]) / self.scale;
            }
            for (j, c) in self.centers.iter().enumerate() {
                e[j] = eta(self.dim, dist(&u, c));
            }
            let radial = self.radial_coef.tr_mul(&e);
            for j in 0..nr {
                out[(i, j)] = radial[j];
            }
            out[(i, nr)] = 1.0;
            for d in 0..self.dim {
                out[(i, nr + 1 + d)] = u[d];
            }
        }
        out
    }

    /// True for points outside the bounding box of the centres.
    pub fn outside_range(&self, cols: &[&[f64]]) -> Vec<bool> {
        let n = cols.first().map(|c| c.len()).unwrap_or(0);
        let bounds: Vec<(f64, f64)> = (0..self.dim)
            .map(|d| {
                self.centers
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                        (lo.min(r[d]), hi.max(r[d]))
                    })
            })
            .collect();
        (0..n)
            .map(|i| {
                (0..self.dim).any(|d| {
                    let u = (cols[d][i] - self.shift[d]) / self.scale;
                    u < bounds[d].0 - 1e-12 || u > bounds[d].1 + 1e-12
                })
            })
            .collect()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
