//! Generalized additive models with penalized regression splines.
//!
//! The crate covers the whole modelling loop: parsing model formulas,
//! building spline bases and wiggliness penalties, fitting by penalized IRLS
//! with automatic smoothness selection, drawing from the Bayesian posterior
//! of a fitted model, tidy inspection of smooths and fitted values, and
//! simulation-based residual diagnostics. Every output is a [`TidyTable`].

pub mod basis;
pub mod data;
pub mod diagnostics;
pub mod engine;
pub mod family;
pub mod formula;
pub mod inspect;
pub mod linalg;
pub mod posterior;
pub mod tidy;

pub use data::Dataset;
pub use engine::{fit, FitControl, FitError, FittedGam, Method};
pub use family::{Family, FamilyName, Link};
pub use formula::{parse_formula, print_formula, BasisCode, ModelFormula, SmoothSpec};
pub use tidy::{Column, TidyTable};
