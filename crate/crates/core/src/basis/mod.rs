//! Spline bases, wiggliness penalties, identifiability constraints and their
//! tidy exports.

pub mod cr;
pub mod tprs;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cr::CrBasis;
pub use tprs::TpBasis;

use crate::data::Dataset;
use crate::formula::{BasisCode, SmoothSpec};
use crate::linalg::{householder_complement, serde_matrix};
use crate::tidy::{Column, TidyTable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BasisError {
    #[error("need at least {needed} distinct values to place knots, found {found}")]
    TooFewDistinct { needed: usize, found: usize },
    #[error("need at least {needed} unique covariate rows, found {found} after removing duplicates")]
    TooFewUnique { needed: usize, found: usize },
    #[error("invalid knots: {0}")]
    InvalidKnots(String),
    #[error("basis rank k = {k} must exceed the penalty null space dimension {null_dim}")]
    RankTooSmall { k: usize, null_dim: usize },
    #[error("smooths of {0} covariates are not supported")]
    Dimension(usize),
    #[error("penalty order m = {0} is not supported (only m = 2)")]
    PenaltyOrder(i32),
    #[error("unsupported basis: {0}")]
    Unsupported(String),
    #[error("constraint already applied")]
    AlreadyConstrained,
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
}

/// Place `k` knots at evenly spaced quantiles of the distinct values of `x`,
/// endpoints included.
pub fn place_knots(x: &[f64], k: usize) -> Result<Vec<f64>, BasisError> {
    let mut u: Vec<f64> = x.iter().copied().filter(|v| v.is_finite()).collect();
    u.sort_by(f64::total_cmp);
    u.dedup();
    if k < 2 || u.len() < k {
        return Err(BasisError::TooFewDistinct {
            needed: k.max(2),
            found: u.len(),
        });
    }
    let m = u.len() - 1;
    Ok((0..k)
        .map(|i| {
            // exact rational position i*m/(k-1)
            let num = i * m;
            let lo = num / (k - 1);
            let rem = num % (k - 1);
            if rem == 0 {
                u[lo]
            } else {
                let t = rem as f64 / (k - 1) as f64;
                u[lo] + t * (u[lo + 1] - u[lo])
            }
        })
        .collect())
}

/// The underlying spline family of a [`BasisSystem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BasisKind {
    Cr(CrBasis),
    Tp(TpBasis),
}

impl BasisKind {
    fn eval(&self, cols: &[&[f64]]) -> (DMatrix<f64>, Vec<bool>) {
        match self {
            BasisKind::Cr(b) => b.eval(cols[0]),
            BasisKind::Tp(b) => (b.eval(cols), b.outside_range(cols)),
        }
    }

    fn penalty(&self) -> DMatrix<f64> {
        match self {
            BasisKind::Cr(b) => b.penalty(),
            BasisKind::Tp(b) => b.penalty(),
        }
    }

    fn null_dim(&self) -> usize {
        match self {
            BasisKind::Cr(_) => 2,
            BasisKind::Tp(b) => b.null_dim(),
        }
    }

    fn code(&self) -> BasisCode {
        match self {
            BasisKind::Cr(_) => BasisCode::Cr,
            BasisKind::Tp(_) => BasisCode::Tp,
        }
    }

    fn constant_column(&self) -> Option<usize> {
        match self {
            BasisKind::Cr(_) => None,
            BasisKind::Tp(b) => Some(b.constant_column()),
        }
    }

    fn knots(&self) -> Vec<Vec<f64>> {
        match self {
            BasisKind::Cr(b) => vec![b.knots().to_vec()],
            BasisKind::Tp(b) => b.centers(),
        }
    }
}

/// Evaluated basis, penalty and constraint for one smooth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSystem {
    pub label: String,
    pub variables: Vec<String>,
    pub kind: BasisKind,
    /// Basis evaluated at the construction data (after the constraint, if any).
    #[serde(skip)]
    pub design: DMatrix<f64>,
    #[serde(with = "serde_matrix")]
    pub penalty: DMatrix<f64>,
    /// Maps constrained coefficients to unconstrained ones (identity when unconstrained).
    #[serde(with = "serde_matrix")]
    pub constraint: DMatrix<f64>,
    pub constrained: bool,
    pub null_dim: usize,
    pub labels: Vec<String>,
}

fn column_labels(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("F{i}")).collect()
}

impl BasisSystem {
    fn from_kind(label: String, variables: Vec<String>, kind: BasisKind, cols: &[&[f64]]) -> Self {
        let (design, _) = kind.eval(cols);
        let k = design.ncols();
        BasisSystem {
            label,
            variables,
            penalty: kind.penalty(),
            null_dim: kind.null_dim(),
            kind,
            design,
            constraint: DMatrix::identity(k, k),
            constrained: false,
            labels: column_labels(k),
        }
    }

    /// Number of (possibly constrained) basis functions.
    pub fn k(&self) -> usize {
        self.penalty.nrows()
    }

    pub fn code(&self) -> BasisCode {
        self.kind.code()
    }

    /// Knot locations (cr) or centres (tp), one vector per covariate.
    pub fn knots(&self) -> Vec<Vec<f64>> {
        self.kind.knots()
    }

    /// Evaluate the basis at new covariate values; the flag marks rows outside
    /// the construction range.
    pub fn evaluate(&self, cols: &[&[f64]]) -> (DMatrix<f64>, Vec<bool>) {
        let (raw, flags) = self.kind.eval(cols);
        if self.constrained {
            (raw * &self.constraint, flags)
        } else {
            (raw, flags)
        }
    }

    pub fn evaluate_data(&self, data: &Dataset) -> Result<(DMatrix<f64>, Vec<bool>), BasisError> {
        let cols = columns_for(&self.variables, data)?;
        Ok(self.evaluate(&cols))
    }
}

pub(crate) fn columns_for<'a>(vars: &[String], data: &'a Dataset) -> Result<Vec<&'a [f64]>, BasisError> {
    vars.iter()
        .map(|v| data.get(v).ok_or_else(|| BasisError::UnknownVariable(v.clone())))
        .collect()
}

/// Cubic regression spline basis at `x` for the given knots.
pub fn cr_basis(x: &[f64], knots: &[f64]) -> Result<BasisSystem, BasisError> {
    let b = CrBasis::new(knots.to_vec())?;
    Ok(BasisSystem::from_kind(
        "s(x)".into(),
        vec!["x".into()],
        BasisKind::Cr(b),
        &[x],
    ))
}

/// Thin plate regression spline basis of rank `k` for 1 or 2 covariates.
pub fn tprs_basis(cols: &[&[f64]], k: usize, m: i32) -> Result<BasisSystem, BasisError> {
    let b = TpBasis::new(cols, k, m, true)?;
    let vars: Vec<String> = match cols.len() {
        1 => vec!["x".into()],
        _ => (1..=cols.len()).map(|i| format!("x{i}")).collect(),
    };
    let label = format!("s({})", vars.join(","));
    Ok(BasisSystem::from_kind(label, vars, BasisKind::Tp(b), cols))
}

/// Options controlling basis construction from a [`SmoothSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisOptions {
    /// Rescale covariates before building radial bases.
    pub rescale: bool,
}

impl Default for BasisOptions {
    fn default() -> Self {
        BasisOptions { rescale: true }
    }
}

/// Unconstrained basis for a smooth term built from `data`.
pub fn smooth_basis(spec: &SmoothSpec, data: &Dataset, opts: BasisOptions) -> Result<BasisSystem, BasisError> {
    let cols = columns_for(&spec.variables, data)?;
    if cols.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(BasisError::InvalidData("non-finite covariate value".into()));
    }
    let k = spec.effective_k();
    let kind = match &spec.basis {
        BasisCode::Cr => {
            if spec.dim() != 1 {
                return Err(BasisError::Dimension(spec.dim()));
            }
            if spec.m != 2 {
                return Err(BasisError::PenaltyOrder(spec.m));
            }
            BasisKind::Cr(CrBasis::new(place_knots(cols[0], k)?)?)
        }
        BasisCode::Tp => BasisKind::Tp(TpBasis::new(&cols, k, spec.m, opts.rescale)?),
        BasisCode::Unsupported(code) => return Err(BasisError::Unsupported(code.clone())),
    };
    Ok(BasisSystem::from_kind(
        spec.label(),
        spec.variables.clone(),
        kind,
        &cols,
    ))
}

/// Reparameterise `b` so that every basis column sums to zero over `x_fit`.
///
/// Bases that contain an explicit constant column (thin plate) drop it and
/// centre the remaining columns, which leaves the penalty untouched; other
/// bases use a Householder complement of the column-sum vector.
pub fn apply_constraint(b: &BasisSystem, x_fit: &[&[f64]]) -> Result<BasisSystem, BasisError> {
    if b.constrained {
        return Err(BasisError::AlreadyConstrained);
    }
    let (raw, _) = b.kind.eval(x_fit);
    let sums = DVector::from_iterator(raw.ncols(), raw.column_iter().map(|c| c.sum()));
    let k = raw.ncols();
    let z = match b.kind.constant_column() {
        Some(c) if sums[c] != 0.0 => {
            let mut z = DMatrix::zeros(k, k - 1);
            let mut col = 0;
            for j in 0..k {
                if j == c {
                    continue;
                }
                z[(j, col)] = 1.0;
                z[(c, col)] = -sums[j] / sums[c];
                col += 1;
            }
            z
        }
        _ => householder_complement(&sums),
    };
    let penalty = crate::linalg::symmetrize(&(z.transpose() * &b.penalty * &z));
    let design = &b.design * &z;
    Ok(BasisSystem {
        label: b.label.clone(),
        variables: b.variables.clone(),
        kind: b.kind.clone(),
        design,
        penalty,
        constraint: z,
        constrained: true,
        null_dim: b.null_dim.saturating_sub(1),
        labels: column_labels(k - 1),
    })
}

/// Evenly spaced grid of `n` points over the range of `x`.
pub(crate) fn range_grid(x: &[f64], n: usize) -> Vec<f64> {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Full crossing of per-variable grids, first variable varying slowest.
pub(crate) fn cross(grids: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = grids.iter().map(Vec::len).product();
    let mut out: Vec<Vec<f64>> = grids.iter().map(|_| Vec::with_capacity(total)).collect();
    for idx in 0..total {
        let mut rem = idx;
        for d in (0..grids.len()).rev() {
            let len = grids[d].len();
            out[d].push(grids[d][rem % len]);
            rem /= len;
        }
    }
    out
}

/// Long-format table of every basis function of `b` evaluated on the
/// covariate grid `grid` (one vector per variable).
pub fn basis_system_tidy(b: &BasisSystem, grid: &[Vec<f64>]) -> TidyTable {
    let cols: Vec<&[f64]> = grid.iter().map(Vec::as_slice).collect();
    let (m, _) = b.evaluate(&cols);
    let n = m.nrows();
    let k = m.ncols();
    let mut smooth = Vec::with_capacity(n * k);
    let mut bf = Vec::with_capacity(n * k);
    let mut value = Vec::with_capacity(n * k);
    let mut covs: Vec<Vec<f64>> = vec![Vec::with_capacity(n * k); grid.len()];
    for j in 0..k {
        for i in 0..n {
            smooth.push(b.label.clone());
            bf.push(j as i64 + 1);
            value.push(m[(i, j)]);
            for (d, g) in grid.iter().enumerate() {
                covs[d].push(g[i]);
            }
        }
    }
    let rows = n * k;
    let mut t = TidyTable::new();
    t.push(".smooth", Column::Str(smooth)).expect("fresh table");
    t.push(".type", Column::Str(vec![b.code().to_string(); rows]))
        .expect("same length");
    t.push(".by", Column::Str(vec![String::new(); rows]))
        .expect("same length");
    for (name, c) in b.variables.iter().zip(covs) {
        t.push(name.clone(), Column::Num(c)).expect("same length");
    }
    t.push(".bf", Column::Int(bf)).expect("same length");
    t.push(".value", Column::Num(value)).expect("same length");
    t
}

/// Unconstrained basis functions of `spec`, built from `data` and evaluated
/// on `n_eval` evenly spaced points per covariate spanning the data.
pub fn basis_tidy(spec: &SmoothSpec, data: &Dataset, n_eval: usize) -> Result<TidyTable, BasisError> {
    let b = smooth_basis(spec, data, BasisOptions::default())?;
    let cols = columns_for(&spec.variables, data)?;
    let grids: Vec<Vec<f64>> = cols.iter().map(|c| range_grid(c, n_eval)).collect();
    Ok(basis_system_tidy(&b, &cross(&grids)))
}

/// Long-format penalty matrix: `.smooth, .row, .col, .value`, row-major.
pub fn penalty_tidy(b: &BasisSystem, label: &str) -> TidyTable {
    let k = b.k();
    let mut rows = Vec::with_capacity(k * k);
    let mut cols = Vec::with_capacity(k * k);
    let mut vals = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            rows.push(b.labels[i].clone());
            cols.push(b.labels[j].clone());
            vals.push(b.penalty[(i, j)]);
        }
    }
    TidyTable::new()
        .with(".smooth", Column::Str(vec![label.to_string(); k * k]))
        .and_then(|t| t.with(".row", Column::Str(rows)))
        .and_then(|t| t.with(".col", Column::Str(cols)))
        .and_then(|t| t.with(".value", Column::Num(vals)))
        .expect("columns share length")
}
