//! Effective degrees of freedom and model overview tables.

use super::{FittedGam, TermKind};
use crate::tidy::{Column, TidyTable};

/// Per-smooth effective degrees of freedom: columns `.smooth`, `.edf`.
pub fn edf(model: &FittedGam) -> TidyTable {
    let labels: Vec<String> = model.smooths.iter().map(|s| s.label().to_string()).collect();
    let values: Vec<f64> = model
        .smooths
        .iter()
        .map(|s| model.edf_per_coef[s.start..s.end].iter().sum())
        .collect();
    TidyTable::new()
        .with(".smooth", Column::Str(labels))
        .and_then(|t| t.with(".edf", Column::Num(values)))
        .expect("columns have equal length")
}

/// Total effective degrees of freedom, parametric terms included.
pub fn model_edf(model: &FittedGam) -> f64 {
    model.edf_per_coef.iter().sum()
}

/// The intercept coefficient, if the model has one.
pub fn model_constant(model: &FittedGam) -> Option<f64> {
    model
        .terms
        .iter()
        .find(|t| t.kind == TermKind::Intercept)
        .map(|t| model.beta[t.start])
}

/// One row per model term: `term`, `type`, `k`, `edf`.
pub fn overview(model: &FittedGam) -> TidyTable {
    let mut term = Vec::new();
    let mut kind = Vec::new();
    let mut k = Vec::new();
    let mut e = Vec::new();
    for t in &model.terms {
        term.push(t.label.clone());
        let ty = match t.kind {
            TermKind::Intercept | TermKind::Parametric => "parametric".to_string(),
            TermKind::Smooth => model
                .smooth(&t.label)
                .map(|s| s.basis.code().to_string())
                .unwrap_or_default(),
        };
        kind.push(ty);
        k.push(t.len() as i64);
        e.push(model.edf_per_coef[t.start..t.end].iter().sum());
    }
    TidyTable::new()
        .with("term", Column::Str(term))
        .and_then(|t| t.with("type", Column::Str(kind)))
        .and_then(|t| t.with("k", Column::Int(k)))
        .and_then(|t| t.with("edf", Column::Num(e)))
        .expect("columns have equal length")
}
