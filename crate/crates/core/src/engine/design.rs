//! Model-matrix assembly: intercept, parametric columns, constrained smooth
//! blocks, and the per-smooth penalties embedded at their column ranges.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::FitError;
use crate::basis::{apply_constraint, columns_for, smooth_basis, BasisOptions, BasisSystem};
use crate::data::Dataset;
use crate::formula::ModelFormula;
use crate::linalg::sym_eigen_desc;

pub const INTERCEPT_LABEL: &str = "(Intercept)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Intercept,
    Parametric,
    Smooth,
}

/// Coefficient range `[start, end)` owned by one model term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermRange {
    pub label: String,
    pub kind: TermKind,
    pub start: usize,
    pub end: usize,
}

impl TermRange {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// A smooth term's constrained basis, its column range, and the factor that
/// normalises its penalty before the smoothing parameter multiplies it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothTerm {
    pub basis: BasisSystem,
    pub start: usize,
    pub end: usize,
    pub penalty_scale: f64,
    /// Rank and log pseudo-determinant of the normalised penalty block.
    pub penalty_rank: usize,
    pub penalty_log_det: f64,
}

impl SmoothTerm {
    pub fn label(&self) -> &str {
        &self.basis.label
    }

    /// Normalised penalty block (`penalty_scale * S_j`).
    pub fn scaled_penalty(&self) -> DMatrix<f64> {
        &self.basis.penalty * self.penalty_scale
    }

    /// Full p×p penalty with this smooth's block in place and zeros elsewhere.
    pub fn embedded_penalty(&self, p: usize) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(p, p);
        let k = self.end - self.start;
        s.view_mut((self.start, self.start), (k, k))
            .copy_from(&self.scaled_penalty());
        s
    }
}

/// Output of [`assemble_design`].
#[derive(Debug, Clone)]
pub struct Assembled {
    pub x: DMatrix<f64>,
    pub smooths: Vec<SmoothTerm>,
    pub terms: Vec<TermRange>,
    pub parametric: Vec<String>,
    pub intercept: bool,
}

impl Assembled {
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// `Σ_j λ_j S_j` embedded in the full coefficient space.
    pub fn total_penalty(&self, lambda: &[f64]) -> DMatrix<f64> {
        total_penalty(&self.smooths, self.p(), lambda)
    }

    /// Total penalty null-space dimension (unpenalised coefficients).
    pub fn null_space_dim(&self) -> usize {
        self.p() - self.smooths.iter().map(|s| s.penalty_rank).sum::<usize>()
    }
}

pub(crate) fn total_penalty(smooths: &[SmoothTerm], p: usize, lambda: &[f64]) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(p, p);
    for (term, &l) in smooths.iter().zip(lambda) {
        let k = term.end - term.start;
        let mut block = s.view_mut((term.start, term.start), (k, k));
        block += term.scaled_penalty() * l;
    }
    s
}

/// Normalise a penalty so that its positive generalised eigenvalues with
/// respect to `XⱼᵀXⱼ` have geometric mean one. The factor depends only on
/// the function space and the penalty functional, not on how the basis is
/// parameterised.
fn penalty_normalisation(xj: &DMatrix<f64>, s: &DMatrix<f64>) -> f64 {
    let xtx = xj.transpose() * xj;
    let k = xtx.nrows();
    let l = match xtx.clone().cholesky() {
        Some(c) => c.l(),
        None => {
            let eps = 1e-8 * xtx.trace() / k as f64;
            match (&xtx + DMatrix::identity(k, k) * eps).cholesky() {
                Some(c) => c.l(),
                None => return 1.0,
            }
        }
    };
    let linv = match l.clone().try_inverse() {
        Some(v) => v,
        None => return 1.0,
    };
    let m = &linv * s * linv.transpose();
    let (vals, _) = sym_eigen_desc(&m);
    let max = vals.iter().cloned().fold(0.0f64, f64::max);
    let pos: Vec<f64> = vals.iter().copied().filter(|&v| v > 1e-10 * max).collect();
    if pos.is_empty() {
        return 1.0;
    }
    let mean_log = pos.iter().map(|v| v.ln()).sum::<f64>() / pos.len() as f64;
    (-mean_log).exp()
}

fn rank_and_log_pdet(s: &DMatrix<f64>) -> (usize, f64) {
    let (vals, _) = sym_eigen_desc(s);
    let max = vals.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return (0, 0.0);
    }
    let pos: Vec<f64> = vals.iter().copied().filter(|&v| v > 1e-8 * max).collect();
    (pos.len(), pos.iter().map(|v| v.ln()).sum())
}

/// Build the model matrix and penalties for `formula` on `data`.
pub fn assemble_design(formula: &ModelFormula, data: &Dataset, opts: BasisOptions) -> Result<Assembled, FitError> {
    if let Some(bad) = formula.unsupported_smooths().first() {
        return Err(FitError::UnsupportedBasis(bad.basis.to_string()));
    }
    let mut needed = formula.covariates();
    needed.insert(0, formula.response.clone());
    for name in &needed {
        data.column(name)?;
    }
    data.require_finite(&needed)?;
    let n = data.n_rows();

    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    let mut terms = Vec::new();
    let mut col = 0usize;
    if formula.intercept {
        blocks.push(DMatrix::from_element(n, 1, 1.0));
        terms.push(TermRange {
            label: INTERCEPT_LABEL.into(),
            kind: TermKind::Intercept,
            start: 0,
            end: 1,
        });
        col = 1;
    }
    for name in &formula.parametric {
        let v = data.column(name)?;
        blocks.push(DMatrix::from_column_slice(n, 1, v));
        terms.push(TermRange {
            label: name.clone(),
            kind: TermKind::Parametric,
            start: col,
            end: col + 1,
        });
        col += 1;
    }

    let mut smooths = Vec::new();
    for spec in &formula.smooths {
        let raw = smooth_basis(spec, data, opts)?;
        let cols = columns_for(&spec.variables, data)?;
        let b = if formula.intercept {
            apply_constraint(&raw, &cols)?
        } else {
            raw
        };
        let k = b.k();
        let scale = penalty_normalisation(&b.design, &b.penalty);
        let (rank, log_det) = rank_and_log_pdet(&(&b.penalty * scale));
        blocks.push(b.design.clone());
        terms.push(TermRange {
            label: b.label.clone(),
            kind: TermKind::Smooth,
            start: col,
            end: col + k,
        });
        smooths.push(SmoothTerm {
            basis: b,
            start: col,
            end: col + k,
            penalty_scale: scale,
            penalty_rank: rank,
            penalty_log_det: log_det,
        });
        col += k;
    }

    if col == 0 {
        return Err(FitError::EmptyModel);
    }
    if n < col {
        return Err(FitError::TooFewRows { n, p: col });
    }
    let mut x = DMatrix::zeros(n, col);
    let mut at = 0;
    for b in &blocks {
        x.view_mut((0, at), (n, b.ncols())).copy_from(b);
        at += b.ncols();
    }
    Ok(Assembled {
        x,
        smooths,
        terms,
        parametric: formula.parametric.clone(),
        intercept: formula.intercept,
    })
}

/// Model matrix for new data, using the bases and constraints fixed at fit time.
pub fn prediction_matrix(
    intercept: bool,
    parametric: &[String],
    smooths: &[SmoothTerm],
    p: usize,
    data: &Dataset,
) -> Result<(DMatrix<f64>, Vec<bool>), FitError> {
    let n = data.n_rows();
    let mut x = DMatrix::zeros(n, p);
    let mut col = 0;
    if intercept {
        x.column_mut(0).fill(1.0);
        col = 1;
    }
    for name in parametric {
        let v = data.column(name)?;
        x.set_column(col, &DVector::from_column_slice(v));
        col += 1;
    }
    let mut extrapolated = vec![false; n];
    for s in smooths {
        let (m, flags) = s.basis.evaluate_data(data)?;
        x.view_mut((0, s.start), (n, s.end - s.start)).copy_from(&m);
        for (e, f) in extrapolated.iter_mut().zip(flags) {
            *e |= f;
        }
    }
    Ok((x, extrapolated))
}
