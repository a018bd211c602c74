//! Smoothness selection criteria evaluated at a converged PIRLS state.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::design::SmoothTerm;
use super::pirls::PirlsState;
use crate::linalg::SymFactor;

/// Criterion used to choose the smoothing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gcv,
    Reml,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Gcv => "gcv",
            Method::Reml => "reml",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gcv" => Ok(Method::Gcv),
            "reml" => Ok(Method::Reml),
            other => Err(format!("unknown method `{other}` (expected gcv or reml)")),
        }
    }
}

/// `log|Σ λ_j S_j|₊` for block-diagonal penalties.
pub fn log_pdet_penalty(smooths: &[SmoothTerm], lambda: &[f64]) -> f64 {
    smooths
        .iter()
        .zip(lambda)
        .map(|(s, &l)| s.penalty_rank as f64 * l.ln() + s.penalty_log_det)
        .sum()
}

/// Dimension of the null space of the total penalty.
pub fn penalty_null_dim(smooths: &[SmoothTerm], p: usize) -> usize {
    p - smooths.iter().map(|s| s.penalty_rank).sum::<usize>()
}

/// `n·D / (n − edf)²`, or `+∞` once the model is saturated.
pub fn gcv_score(n: usize, deviance: f64, edf: f64) -> f64 {
    let nf = n as f64;
    if edf >= nf {
        return f64::INFINITY;
    }
    nf * deviance / ((nf - edf) * (nf - edf))
}

/// Negative restricted log-likelihood of a gaussian model with the scale
/// profiled out (additive constants dropped).
pub fn reml_gaussian(state: &PirlsState, penalty: &DMatrix<f64>, smooths: &[SmoothTerm], lambda: &[f64]) -> f64 {
    let n = state.mu.len();
    let p = state.beta.len();
    let mp = penalty_null_dim(smooths, p) as f64;
    let dof = n as f64 - mp;
    if dof <= 0.0 {
        return f64::INFINITY;
    }
    let phi = state.pen_deviance / dof;
    if !(phi > 0.0) {
        return f64::INFINITY;
    }
    let log_det_a = SymFactor::new(&(&state.xtwx + penalty)).log_det();
    0.5 * (dof * (1.0 + (2.0 * std::f64::consts::PI * phi).ln()) + log_det_a - log_pdet_penalty(smooths, lambda))
}

/// Laplace approximate negative restricted log-likelihood at known scale
/// `phi` (constants in the smoothing parameters dropped).
pub fn laml(state: &PirlsState, penalty: &DMatrix<f64>, smooths: &[SmoothTerm], lambda: &[f64], phi: f64) -> f64 {
    let log_det_a = SymFactor::new(&(&state.xtwx + penalty)).log_det();
    state.pen_deviance / (2.0 * phi) + 0.5 * log_det_a - 0.5 * log_pdet_penalty(smooths, lambda)
}
