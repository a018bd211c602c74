//! Dense symmetric linear algebra used throughout the fitting code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// How a symmetric system was solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveKind {
    Cholesky,
    /// Cholesky after adding `1e-10 * trace / p` to the diagonal.
    Jittered,
    /// Minimum-norm solution from the eigen-decomposition.
    PseudoInverse,
}

impl SolveKind {
    pub fn is_singular(self) -> bool {
        self != SolveKind::Cholesky
    }
}

fn jittered(a: &DMatrix<f64>) -> DMatrix<f64> {
    let p = a.nrows().max(1);
    let eps = 1e-10 * a.trace().abs().max(f64::MIN_POSITIVE) / p as f64;
    let mut j = a.clone();
    for i in 0..a.nrows() {
        j[(i, i)] += eps;
    }
    j
}

/// Factorisation of a symmetric positive (semi-)definite matrix that can
/// solve systems and produce the inverse.
pub enum SymFactor {
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>, SolveKind),
    Eigen(SymmetricEigen<f64, nalgebra::Dyn>),
}

impl SymFactor {
    pub fn new(a: &DMatrix<f64>) -> SymFactor {
        if let Some(c) = a.clone().cholesky() {
            return SymFactor::Chol(c, SolveKind::Cholesky);
        }
        if let Some(c) = jittered(a).cholesky() {
            return SymFactor::Chol(c, SolveKind::Jittered);
        }
        SymFactor::Eigen(SymmetricEigen::new(a.clone()))
    }

    pub fn kind(&self) -> SolveKind {
        match self {
            SymFactor::Chol(_, k) => *k,
            SymFactor::Eigen(_) => SolveKind::PseudoInverse,
        }
    }

    fn eig_threshold(e: &SymmetricEigen<f64, nalgebra::Dyn>) -> f64 {
        let max = e.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        max * 1e-12 * e.eigenvalues.len() as f64
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            SymFactor::Chol(c, _) => c.solve(b),
            SymFactor::Eigen(e) => {
                let tol = Self::eig_threshold(e);
                let mut coef = e.eigenvectors.transpose() * b;
                for (c, &l) in coef.iter_mut().zip(e.eigenvalues.iter()) {
                    *c = if l > tol { *c / l } else { 0.0 };
                }
                &e.eigenvectors * coef
            }
        }
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            SymFactor::Chol(c, _) => c.solve(b),
            SymFactor::Eigen(e) => {
                let tol = Self::eig_threshold(e);
                let mut coef = e.eigenvectors.transpose() * b;
                for (i, &l) in e.eigenvalues.iter().enumerate() {
                    let s = if l > tol { 1.0 / l } else { 0.0 };
                    coef.row_mut(i).scale_mut(s);
                }
                &e.eigenvectors * coef
            }
        }
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = match self {
            SymFactor::Chol(c, _) => c.l_dirty().nrows(),
            SymFactor::Eigen(e) => e.eigenvalues.len(),
        };
        let inv = self.solve_mat(&DMatrix::identity(n, n));
        symmetrize(&inv)
    }

    /// log-determinant; for the pseudo-inverse route, of the positive part.
    pub fn log_det(&self) -> f64 {
        match self {
            SymFactor::Chol(c, _) => 2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
            SymFactor::Eigen(e) => {
                let tol = Self::eig_threshold(e);
                e.eigenvalues.iter().filter(|&&l| l > tol).map(|l| l.ln()).sum()
            }
        }
    }
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigen-decomposition with eigenvalues sorted in decreasing order.
pub fn sym_eigen_desc(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    sym_eigen_sorted_by(a, |x| x)
}

/// Eigen-decomposition sorted by decreasing `key(eigenvalue)`.
pub fn sym_eigen_sorted_by(a: &DMatrix<f64>, key: impl Fn(f64) -> f64) -> (DVector<f64>, DMatrix<f64>) {
    let e = SymmetricEigen::new(symmetrize(a));
    let n = e.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        key(e.eigenvalues[j])
            .partial_cmp(&key(e.eigenvalues[i]))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let vals = DVector::from_iterator(n, order.iter().map(|&i| e.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = e.eigenvectors.column(src).into_owned();
        // fix the sign so the largest-magnitude entry is positive
        let (imax, _) =
            col.iter().enumerate().fold(
                (0, 0.0f64),
                |(bi, bv), (i, v)| if v.abs() > bv + 1e-12 { (i, v.abs()) } else { (bi, bv) },
            );
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        vecs.set_column(dst, &col);
    }
    (vals, vecs)
}

/// Numerical rank from eigenvalues above `1e-8 * max |eigenvalue|`.
pub fn sym_rank(a: &DMatrix<f64>) -> usize {
    let e = SymmetricEigen::new(symmetrize(a));
    let max = e.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return 0;
    }
    e.eigenvalues.iter().filter(|&&v| v > 1e-8 * max).count()
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(a)).eigenvalues.min()
}

/// Orthonormal basis (K×(K−1)) for the complement of `c`, via one
/// Householder reflection.
pub fn householder_complement(c: &DVector<f64>) -> DMatrix<f64> {
    let k = c.len();
    let norm = c.norm();
    let mut v = c.clone();
    let sign = if c[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign * norm;
    let vv = v.dot(&v);
    let h = if vv > 0.0 {
        DMatrix::identity(k, k) - (&v * v.transpose()) * (2.0 / vv)
    } else {
        DMatrix::identity(k, k)
    };
    h.columns(1, k - 1).into_owned()
}

/// Orthonormal basis for the null space of `Aᵀ` where `A` is K×M with full
/// column rank: a K×(K−M) matrix `Z` with `AᵀZ = 0`.
pub fn null_space_of_transpose(a: &DMatrix<f64>) -> DMatrix<f64> {
    let k = a.nrows();
    let m = a.ncols();
    let ata = a.transpose() * a;
    let proj = match ata.clone().cholesky() {
        Some(c) => a * c.solve(&a.transpose()),
        None => a * SymFactor::new(&ata).solve_mat(&a.transpose()),
    };
    let comp = DMatrix::identity(k, k) - proj;
    let (_, vecs) = sym_eigen_desc(&comp);
    vecs.columns(0, k - m).into_owned()
}

/// Lower-triangular-like factor `L` with `L Lᵀ = cov`, tolerating positive
/// semi-definite input. Returns `None` when `cov` has an eigenvalue below
/// `-1e-8 * trace`.
pub fn psd_factor(cov: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let cov = symmetrize(cov);
    if cov.iter().all(|&v| v == 0.0) {
        return Some(DMatrix::zeros(cov.nrows(), cov.ncols()));
    }
    if let Some(c) = cov.clone().cholesky() {
        return Some(c.l());
    }
    let e = SymmetricEigen::new(cov.clone());
    let tr = cov.trace().abs();
    if e.eigenvalues.iter().any(|&l| l < -1e-8 * tr) {
        return None;
    }
    let mut f = e.eigenvectors.clone();
    for (j, &l) in e.eigenvalues.iter().enumerate() {
        f.column_mut(j).scale_mut(l.max(0.0).sqrt());
    }
    Some(f)
}


/// Row-major `{rows, cols, data}` serde representation for dense matrices.
pub mod serde_matrix {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            data.extend(m.row(i).iter().copied());
        }
        Repr {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let r = Repr::deserialize(d)?;
        if r.rows * r.cols != r.data.len() {
            return Err(serde::de::Error::custom(format!(
                "matrix data has {} entries, expected {}x{}",
                r.data.len(),
                r.rows,
                r.cols
            )));
        }
        Ok(DMatrix::from_row_slice(r.rows, r.cols, &r.data))
    }
}
