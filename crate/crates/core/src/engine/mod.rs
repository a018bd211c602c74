//! Model fitting: design assembly, penalized IRLS, smoothness selection and
//! the fitted-model object every downstream module reads from.

pub mod criterion;
pub mod design;
pub mod io;
pub mod optimize;
pub mod pirls;
pub mod summary;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use criterion::Method;
pub use design::{assemble_design, prediction_matrix, Assembled, SmoothTerm, TermKind, TermRange, INTERCEPT_LABEL};
pub use io::{load_model, read_model, save_model, write_model, ModelIoError, MODEL_FORMAT, MODEL_VERSION};
pub use optimize::{criterion_score, optimize_lambda, LambdaSearch};
pub use pirls::{pirls_fit, PirlsState};
pub use summary::{edf, model_constant, model_edf, overview};

use crate::basis::{BasisError, BasisOptions};
use crate::data::{DataError, Dataset};
use crate::family::{Family, FamilyError, FamilyName, Link};
use crate::formula::ModelFormula;
use crate::linalg::{serde_matrix, sym_eigen_desc, symmetrize, SolveKind, SymFactor};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("unsupported basis: {0}")]
    UnsupportedBasis(String),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error("the model has no terms")]
    EmptyModel,
    #[error("{n} rows cannot identify {p} coefficients")]
    TooFewRows { n: usize, p: usize },
    #[error("penalized IRLS failed at lambda = {lambda:?}: {message}")]
    Pirls { lambda: Vec<f64>, message: String },
    #[error("invalid fit control: {0}")]
    Control(String),
}

/// Tuning of the inner and outer optimisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitControl {
    /// Relative change in penalized deviance that stops PIRLS.
    pub pirls_tol: f64,
    pub pirls_max_iter: usize,
    /// Bounds and size of the log10 smoothing-parameter grid.
    pub grid_lower: f64,
    pub grid_upper: f64,
    pub grid_points: usize,
    /// Golden-section iterations after each grid scan.
    pub refine_iters: usize,
    pub max_cycles: usize,
    /// Relative criterion improvement below which coordinate cycling stops.
    pub cycle_tol: f64,
    /// Multiplier on the effective degrees of freedom inside GCV; values
    /// above one favour smoother fits.
    #[serde(default = "unit")]
    pub gcv_gamma: f64,
    /// Rescale covariates before building thin plate bases.
    pub rescale: bool,
    /// Evaluate grid scans on the rayon pool.
    pub parallel: bool,
    /// Recorded with the fit; the search itself draws no random numbers.
    pub seed: Option<u64>,
}

impl Default for FitControl {
    fn default() -> Self {
        FitControl {
            pirls_tol: 1e-8,
            pirls_max_iter: 200,
            grid_lower: -6.0,
            grid_upper: 6.0,
            grid_points: 13,
            refine_iters: 30,
            max_cycles: 10,
            cycle_tol: 1e-7,
            gcv_gamma: 1.0,
            rescale: true,
            parallel: true,
            seed: None,
        }
    }
}

fn unit() -> f64 {
    1.0
}

impl FitControl {
    pub fn validate(&self) -> Result<(), FitError> {
        if !(self.pirls_tol > 0.0) {
            return Err(FitError::Control("pirls_tol must be positive".into()));
        }
        if self.pirls_max_iter == 0 {
            return Err(FitError::Control("pirls_max_iter must be at least 1".into()));
        }
        if self.grid_points < 2 || !(self.grid_lower < self.grid_upper) {
            return Err(FitError::Control(
                "lambda grid needs two points and lower < upper".into(),
            ));
        }
        if self.max_cycles == 0 {
            return Err(FitError::Control("max_cycles must be at least 1".into()));
        }
        Ok(())
    }
}

mod formula_text {
    use crate::formula::{parse_formula, print_formula, ModelFormula};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(f: &ModelFormula, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&print_formula(f))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ModelFormula, D::Error> {
        let text = String::deserialize(d)?;
        parse_formula(&text).map_err(serde::de::Error::custom)
    }
}

/// A fitted generalized additive model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedGam {
    #[serde(with = "formula_text")]
    pub formula: ModelFormula,
    pub family: Family,
    /// Criterion actually used to select the smoothing parameters.
    pub method: Method,
    pub requested_method: Method,
    pub control: FitControl,
    pub intercept: bool,
    pub parametric: Vec<String>,
    pub smooths: Vec<SmoothTerm>,
    pub terms: Vec<TermRange>,
    pub beta: Vec<f64>,
    /// Bayesian posterior covariance `(XᵀWX + Sλ)⁻¹ φ̂`.
    #[serde(with = "serde_matrix")]
    pub vb: DMatrix<f64>,
    /// Multipliers of the normalised penalties, one per smooth.
    pub lambda: Vec<f64>,
    pub phi: f64,
    pub edf_per_coef: Vec<f64>,
    pub deviance: f64,
    pub null_deviance: f64,
    /// Criterion value at the selected smoothing parameters.
    #[serde(with = "io::nullable_f64")]
    pub score: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `XᵀWX` and `XᵀWz` at the estimate; with fixed weights they rebuild
    /// the fit at other smoothing parameters.
    #[serde(with = "serde_matrix")]
    pub xtwx: DMatrix<f64>,
    pub xtwz: Vec<f64>,
    /// Approximate covariance of `ln λ`.
    #[serde(with = "serde_matrix")]
    pub rho_cov: DMatrix<f64>,
    /// Response and covariates the model was fitted to.
    pub training: Dataset,
    pub eta: Vec<f64>,
    pub fitted: Vec<f64>,
    pub warnings: Vec<String>,
}

impl FittedGam {
    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn n(&self) -> usize {
        self.fitted.len()
    }

    pub fn response(&self) -> &str {
        &self.formula.response
    }

    pub fn y(&self) -> &[f64] {
        self.training
            .get(&self.formula.response)
            .expect("training data holds the response")
    }

    pub fn beta_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta)
    }

    pub fn covariates(&self) -> Vec<String> {
        self.formula.covariates()
    }

    pub fn smooth(&self, label: &str) -> Option<&SmoothTerm> {
        self.smooths.iter().find(|s| s.label() == label)
    }

    pub fn term(&self, label: &str) -> Option<&TermRange> {
        self.terms.iter().find(|t| t.label == label)
    }

    pub fn term_labels(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.label.clone()).collect()
    }

    /// Smoothing parameters on the scale of each smooth's own penalty matrix.
    pub fn sp(&self) -> Vec<f64> {
        self.smooths
            .iter()
            .zip(&self.lambda)
            .map(|(s, l)| l * s.penalty_scale)
            .collect()
    }

    /// `Σ λ_j S_j` at the given smoothing parameters.
    pub fn total_penalty(&self, lambda: &[f64]) -> DMatrix<f64> {
        design::total_penalty(&self.smooths, self.p(), lambda)
    }

    /// Model matrix for new data and a per-row extrapolation flag.
    pub fn prediction_matrix(&self, data: &Dataset) -> Result<(DMatrix<f64>, Vec<bool>), FitError> {
        prediction_matrix(self.intercept, &self.parametric, &self.smooths, self.p(), data)
    }

    /// Coefficient estimate and covariance at other smoothing parameters,
    /// holding the working weights at their fitted values.
    pub fn refit_fixed_weights(&self, lambda: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let a = &self.xtwx + self.total_penalty(lambda);
        let f = SymFactor::new(&a);
        let beta = f.solve(&DVector::from_column_slice(&self.xtwz));
        (beta, f.inverse() * self.phi)
    }
}

fn pearson_scale(family: &Family, y: &[f64], mu: &DVector<f64>, edf: f64) -> f64 {
    if family.fixed_scale() {
        return 1.0;
    }
    let n = y.len() as f64;
    let stat: f64 = y
        .iter()
        .zip(mu.iter())
        .map(|(&yi, &m)| (yi - m) * (yi - m) / family.variance_unchecked(m))
        .sum();
    stat / (n - edf).max(1.0)
}

fn null_deviance(family: &Family, y: &[f64], intercept: bool) -> f64 {
    let m = if intercept {
        family.clamp_mean(y.iter().sum::<f64>() / y.len() as f64)
    } else {
        family.clamp_mean(family.inv_link(0.0))
    };
    let mu = vec![m; y.len()];
    family.deviance(y, &mu, None)
}

/// Curvature of the restricted likelihood in `ρ = ln λ`, inverted to a
/// covariance with eigenvalues capped at 4.
fn log_lambda_covariance(problem: &optimize::Problem, lambda: &[f64], phi: f64) -> Result<DMatrix<f64>, FitError> {
    let m = lambda.len();
    if m == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let gaussian = problem.family.name == FamilyName::Gaussian && problem.family.link == Link::Identity;
    let score = |rho: &[f64]| -> Result<f64, FitError> {
        let l: Vec<f64> = rho.iter().map(|r| r.exp()).collect();
        let (st, s) = problem.fit_at(&l)?;
        Ok(if gaussian {
            criterion::reml_gaussian(&st, &s, problem.smooths, &l)
        } else {
            criterion::laml(&st, &s, problem.smooths, &l, phi)
        })
    };
    let rho0: Vec<f64> = lambda.iter().map(|l| l.ln()).collect();
    let h = 0.02;
    let f0 = score(&rho0)?;
    let shifted = |d: &[(usize, f64)]| -> Result<f64, FitError> {
        let mut r = rho0.clone();
        for &(i, v) in d {
            r[i] += v;
        }
        score(&r)
    };
    let mut hess = DMatrix::zeros(m, m);
    for i in 0..m {
        let fp = shifted(&[(i, h)])?;
        let fm = shifted(&[(i, -h)])?;
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let pp = shifted(&[(i, h), (j, h)])?;
            let pm = shifted(&[(i, h), (j, -h)])?;
            let mp = shifted(&[(i, -h), (j, h)])?;
            let mm = shifted(&[(i, -h), (j, -h)])?;
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let (vals, vecs) = sym_eigen_desc(&hess);
    let inv = DVector::from_iterator(
        m,
        vals.iter()
            .map(|&v| 1.0 / if v.is_finite() { v.max(0.25) } else { 0.25 }),
    );
    Ok(symmetrize(&(&vecs * DMatrix::from_diagonal(&inv) * vecs.transpose())))
}

/// Fit `formula` to `data`: assemble the design, select smoothing parameters,
/// and run the final PIRLS.
pub fn fit(
    formula: &ModelFormula,
    data: &Dataset,
    family: Family,
    method: Method,
    control: &FitControl,
) -> Result<FittedGam, FitError> {
    control.validate()?;
    let assembled = assemble_design(
        formula,
        data,
        BasisOptions {
            rescale: control.rescale,
        },
    )?;
    let y = data.column(&formula.response)?;
    family.validate_response(y)?;

    let mut warnings = Vec::new();
    let is_gaussian = family.name == FamilyName::Gaussian && family.link == Link::Identity;
    let effective = if method == Method::Reml && !is_gaussian {
        warnings.push(format!(
            "REML is implemented for the gaussian family with identity link only; {} {} smoothing parameters were selected by GCV",
            family.name, family.link
        ));
        Method::Gcv
    } else {
        method
    };

    let problem = optimize::Problem {
        x: &assembled.x,
        smooths: &assembled.smooths,
        family: &family,
        y,
        control,
        method: effective,
    };
    let search = optimize::search(&problem)?;
    let lambda = search.lambda;
    let (state, penalty) = problem.fit_at(&lambda)?;
    if !state.converged {
        warnings.push(format!("PIRLS did not converge in {} iterations", state.iterations));
    }
    if state.solve != SolveKind::Cholesky {
        warnings.push("penalized system was not positive definite; a regularised solve was used".into());
    }

    let f = SymFactor::new(&(&state.xtwx + &penalty));
    let a_inv = f.inverse();
    let influence = &a_inv * &state.xtwx;
    let edf_per_coef: Vec<f64> = influence.diagonal().iter().copied().collect();
    let edf_total: f64 = edf_per_coef.iter().sum();
    let phi = pearson_scale(&family, y, &state.mu, edf_total);
    let vb = symmetrize(&(a_inv * phi));
    let score = if lambda.is_empty() {
        criterion_score(
            effective,
            control.gcv_gamma,
            &state,
            &penalty,
            &assembled.smooths,
            &lambda,
        )
    } else {
        search.score
    };
    let rho_cov = log_lambda_covariance(&problem, &lambda, phi)?;

    let mut needed = formula.covariates();
    needed.insert(0, formula.response.clone());
    let training = data.select(&needed)?;

    Ok(FittedGam {
        formula: formula.clone(),
        family,
        method: effective,
        requested_method: method,
        control: control.clone(),
        intercept: assembled.intercept,
        parametric: assembled.parametric,
        smooths: assembled.smooths,
        terms: assembled.terms,
        beta: state.beta.iter().copied().collect(),
        vb,
        lambda,
        phi,
        edf_per_coef,
        deviance: state.deviance,
        null_deviance: null_deviance(&family, y, formula.intercept),
        score,
        converged: state.converged,
        iterations: state.iterations,
        xtwx: state.xtwx,
        xtwz: state.xtwz.iter().copied().collect(),
        rho_cov,
        training,
        eta: state.eta.iter().copied().collect(),
        fitted: state.mu.iter().copied().collect(),
        warnings,
    })
}
