//! Versioned JSON persistence for fitted models.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FittedGam, TermKind};
use crate::linalg::min_eigenvalue;

pub const MODEL_FORMAT: &str = "gamforge-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("not a model file: expected format `{MODEL_FORMAT}`, found `{0}`")]
    Format(String),
    #[error("model schema version {found} is not supported (expected {MODEL_VERSION})")]
    Version { found: u32 },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("malformed model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    format: &'a str,
    version: u32,
    model: &'a FittedGam,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    model: FittedGam,
}

/// Non-finite floats are written as `null` and read back as NaN.
pub(crate) mod nullable_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

pub fn write_model<W: Write>(model: &FittedGam, out: W) -> Result<(), ModelIoError> {
    let env = EnvelopeOut {
        format: MODEL_FORMAT,
        version: MODEL_VERSION,
        model,
    };
    serde_json::to_writer_pretty(out, &env)?;
    Ok(())
}

pub fn read_model<R: Read>(mut input: R) -> Result<FittedGam, ModelIoError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let header: Header = serde_json::from_str(&text)?;
    if header.format != MODEL_FORMAT {
        return Err(ModelIoError::Format(header.format));
    }
    if header.version != MODEL_VERSION {
        return Err(ModelIoError::Version { found: header.version });
    }
    let env: EnvelopeIn = serde_json::from_str(&text)?;
    validate(&env.model)?;
    Ok(env.model)
}

pub fn save_model(model: &FittedGam, path: &Path) -> Result<(), ModelIoError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_model(model, &mut w)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<FittedGam, ModelIoError> {
    read_model(std::io::BufReader::new(std::fs::File::open(path)?))
}

fn invalid(msg: impl Into<String>) -> ModelIoError {
    ModelIoError::Invalid(msg.into())
}

/// Re-check the invariants a fitted model must satisfy.
pub fn validate(m: &FittedGam) -> Result<(), ModelIoError> {
    let p = m.p();
    if m.vb.shape() != (p, p) || m.xtwx.shape() != (p, p) || m.xtwz.len() != p || m.edf_per_coef.len() != p {
        return Err(invalid("coefficient-sized arrays disagree in length"));
    }
    if m.beta.iter().chain(m.vb.iter()).any(|v| !v.is_finite()) {
        return Err(invalid("non-finite coefficient or covariance entry"));
    }
    let asym = (&m.vb - m.vb.transpose()).abs().max();
    if asym > 1e-10 * (1.0 + m.vb.abs().max()) {
        return Err(invalid("posterior covariance is not symmetric"));
    }
    if p > 0 && min_eigenvalue(&m.vb) < -1e-8 * m.vb.trace().abs() {
        return Err(invalid("posterior covariance is not positive semi-definite"));
    }
    if m.lambda.len() != m.smooths.len() || m.lambda.iter().any(|l| !(*l >= 0.0)) {
        return Err(invalid("one non-negative smoothing parameter per smooth is required"));
    }
    let m_rho = m.smooths.len();
    if m.rho_cov.shape() != (m_rho, m_rho) {
        return Err(invalid("smoothing-parameter covariance has the wrong shape"));
    }
    if !(m.phi > 0.0) {
        return Err(invalid("scale must be positive"));
    }
    let mut next = 0;
    for t in &m.terms {
        if t.start != next || t.end <= t.start {
            return Err(invalid("term ranges do not partition the coefficients"));
        }
        next = t.end;
    }
    if next != p {
        return Err(invalid("term ranges do not cover the coefficients"));
    }
    let smooth_terms: Vec<_> = m.terms.iter().filter(|t| t.kind == TermKind::Smooth).collect();
    if smooth_terms.len() != m.smooths.len() || m.smooths.len() != m.formula.smooths.len() {
        return Err(invalid("smooth terms disagree with the formula"));
    }
    for ((s, t), spec) in m.smooths.iter().zip(&smooth_terms).zip(&m.formula.smooths) {
        let k = s.end - s.start;
        if s.start != t.start || s.end != t.end || s.label() != spec.label() {
            return Err(invalid(format!("smooth `{}` does not match its term", s.label())));
        }
        if s.basis.penalty.shape() != (k, k) || s.basis.constraint.ncols() != k {
            return Err(invalid(format!("smooth `{}` has inconsistent matrices", s.label())));
        }
    }
    if m.training.n_rows() != m.n() || m.eta.len() != m.n() {
        return Err(invalid("training data and fitted values disagree in length"));
    }
    if m.training.get(m.response()).is_none() {
        return Err(invalid("training data lacks the response"));
    }
    // the stored bases must reproduce the stored linear predictor
    let (x, _) = m
        .prediction_matrix(&m.training)
        .map_err(|e| invalid(format!("cannot rebuild the model matrix: {e}")))?;
    let eta = x * m.beta_vec();
    let scale = 1.0 + m.eta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let worst = eta.iter().zip(&m.eta).fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
    if worst > 1e-8 * scale {
        return Err(invalid(format!(
            "stored bases do not reproduce the fitted linear predictor (max difference {worst:e})"
        )));
    }
    Ok(())
}
