//! Penalized iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};

use super::FitControl;
use crate::family::{Family, FamilyName, Link};
use crate::linalg::{SolveKind, SymFactor};

/// Converged (or best) state of the inner loop at fixed smoothing parameters.
#[derive(Debug, Clone)]
pub struct PirlsState {
    pub beta: DVector<f64>,
    pub eta: DVector<f64>,
    pub mu: DVector<f64>,
    /// Working weights at `beta`.
    pub weights: DVector<f64>,
    /// Working response at `beta`.
    pub z: DVector<f64>,
    pub deviance: f64,
    /// Deviance plus `βᵀSβ`.
    pub pen_deviance: f64,
    /// `XᵀWX` and `XᵀWz` at `beta`.
    pub xtwx: DMatrix<f64>,
    pub xtwz: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub solve: SolveKind,
    /// Penalized deviance after each accepted iteration.
    pub trace: Vec<f64>,
}

impl PirlsState {
    /// `tr((XᵀWX + S)⁻¹ XᵀWX)`.
    pub fn edf_total(&self, penalty: &DMatrix<f64>) -> f64 {
        let f = SymFactor::new(&(&self.xtwx + penalty));
        f.solve_mat(&self.xtwx).trace()
    }
}

/// Error raised when no finite iterate exists.
#[derive(Debug, Clone)]
pub struct PirlsFailure(pub String);

fn is_gaussian_identity(f: &Family) -> bool {
    f.name == FamilyName::Gaussian && f.link == Link::Identity
}

fn working(family: &Family, y: &[f64], eta: &DVector<f64>, mu: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = y.len();
    let mut w = DVector::zeros(n);
    let mut z = DVector::zeros(n);
    for i in 0..n {
        let d = family.dmu_deta(eta[i]);
        let v = family.variance_unchecked(mu[i]);
        let d = if d.abs() < 1e-300 { 1e-300 } else { d };
        w[i] = (d * d / v).max(1e-300);
        z[i] = eta[i] + (y[i] - mu[i]) / d;
    }
    (w, z)
}

fn cross_products(x: &DMatrix<f64>, w: &DVector<f64>, z: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mut xw = x.clone();
    for mut col in xw.column_iter_mut() {
        col.component_mul_assign(w);
    }
    let xtwx = crate::linalg::symmetrize(&(xw.transpose() * x));
    let xtwz = xw.transpose() * z;
    (xtwx, xtwz)
}

fn mean_from(family: &Family, eta: &DVector<f64>) -> DVector<f64> {
    eta.map(|e| family.clamp_mean(family.inv_link(e)))
}

fn penalized_deviance(
    family: &Family,
    y: &[f64],
    mu: &DVector<f64>,
    beta: &DVector<f64>,
    penalty: &DMatrix<f64>,
) -> (f64, f64) {
    let dev = family.deviance(y, mu.as_slice(), None);
    let pen = beta.dot(&(penalty * beta));
    (dev, dev + pen)
}

/// Minimise `D(β) + βᵀSβ` for total penalty `S = Σ λ_j S_j`.
pub fn pirls_fit(
    x: &DMatrix<f64>,
    penalty: &DMatrix<f64>,
    family: &Family,
    y: &[f64],
    control: &FitControl,
) -> Result<PirlsState, PirlsFailure> {
    let n = y.len();
    let p = x.ncols();
    if is_gaussian_identity(family) {
        let w = DVector::from_element(n, 1.0);
        let z = DVector::from_column_slice(y);
        let (xtwx, xtwz) = cross_products(x, &w, &z);
        let f = SymFactor::new(&(&xtwx + penalty));
        let beta = f.solve(&xtwz);
        let eta = x * &beta;
        let mu = eta.clone();
        let (deviance, pen_deviance) = penalized_deviance(family, y, &mu, &beta, penalty);
        if !pen_deviance.is_finite() {
            return Err(PirlsFailure("non-finite deviance".into()));
        }
        return Ok(PirlsState {
            beta,
            eta,
            mu,
            weights: w,
            z,
            deviance,
            pen_deviance,
            xtwx,
            xtwz,
            iterations: 1,
            converged: true,
            solve: f.kind(),
            trace: vec![pen_deviance],
        });
    }

    let mut mu = DVector::from_iterator(n, y.iter().map(|&v| family.initial_mean(v)));
    let mut eta = DVector::from_iterator(
        n,
        mu.iter().map(|&m| {
            family
                .link_eval(m)
                .unwrap_or_else(|_| family.link_eval(family.clamp_mean(m)).unwrap_or(0.0))
        }),
    );
    let mut beta: Option<DVector<f64>> = None;
    let mut old_pen = f64::INFINITY;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut solve = SolveKind::Cholesky;

    for it in 0..control.pirls_max_iter {
        iterations = it + 1;
        let (w, z) = working(family, y, &eta, &mu);
        let (xtwx, xtwz) = cross_products(x, &w, &z);
        let f = SymFactor::new(&(&xtwx + penalty));
        solve = f.kind();
        let mut cand = f.solve(&xtwz);
        let mut cand_eta = x * &cand;
        let mut cand_mu = mean_from(family, &cand_eta);
        let (_, mut pen) = penalized_deviance(family, y, &cand_mu, &cand, penalty);

        // rounding noise in the deviance is not an increase
        let ceiling = old_pen + 1e-12 * old_pen.abs();
        if let Some(prev) = &beta {
            let mut halvings = 0;
            while (!pen.is_finite() || pen > ceiling) && halvings < 10 {
                cand = (&cand + prev) * 0.5;
                cand_eta = x * &cand;
                cand_mu = mean_from(family, &cand_eta);
                pen = penalized_deviance(family, y, &cand_mu, &cand, penalty).1;
                halvings += 1;
            }
        }
        if !pen.is_finite() {
            if beta.is_some() {
                break;
            }
            return Err(PirlsFailure(
                "non-finite penalized deviance at the first iterate".into(),
            ));
        }
        let delta = (old_pen - pen).abs();
        let accepted_improvement = pen <= ceiling || beta.is_none();
        let step = beta
            .as_ref()
            .map_or(f64::INFINITY, |b| (&cand - b).amax() / (1.0 + cand.amax()));
        if accepted_improvement {
            beta = Some(cand);
            eta = cand_eta;
            mu = cand_mu;
            trace.push(pen);
        }
        // the objective is flat near the optimum, so also wait for the
        // coefficients to settle
        if old_pen.is_finite() && delta / (pen.abs() + 0.1) < control.pirls_tol && step < control.pirls_tol {
            converged = true;
            break;
        }
        if !accepted_improvement {
            // step-halving could not reduce the objective; the current
            // iterate is as good as this loop can do
            converged = delta / (old_pen.abs() + 0.1) < control.pirls_tol.sqrt();
            break;
        }
        old_pen = pen;
    }

    let beta = beta.unwrap_or_else(|| DVector::zeros(p));
    let (w, z) = working(family, y, &eta, &mu);
    let (xtwx, xtwz) = cross_products(x, &w, &z);
    let (deviance, pen_deviance) = penalized_deviance(family, y, &mu, &beta, penalty);
    Ok(PirlsState {
        beta,
        eta,
        mu,
        weights: w,
        z,
        deviance,
        pen_deviance,
        xtwx,
        xtwz,
        iterations,
        converged,
        solve,
        trace,
    })
}
