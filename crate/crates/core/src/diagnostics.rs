//! Residual diagnostics: residuals, QQ data with simulated reference bands,
//! and the four appraisal panels as tidy tables.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use thiserror::Error;

use crate::engine::FittedGam;
use crate::family::Family;
use crate::posterior::quantile_sorted;
use crate::tidy::{Column, TidyTable};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("simulated reference bands need at least 2 replicates, got {0}")]
    TooFewSimulations(usize),
    #[error("level {0} must lie in (0, 1)")]
    Level(f64),
    #[error("histogram needs at least one bin")]
    Bins,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualType {
    Deviance,
    Pearson,
    Response,
}

impl std::str::FromStr for ResidualType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deviance" => Ok(ResidualType::Deviance),
            "pearson" => Ok(ResidualType::Pearson),
            "response" => Ok(ResidualType::Response),
            other => Err(format!("unknown residual type `{other}`")),
        }
    }
}

fn residual(family: &Family, kind: ResidualType, y: f64, mu: f64) -> f64 {
    match kind {
        ResidualType::Response => y - mu,
        ResidualType::Pearson => (y - mu) / family.variance_unchecked(mu).sqrt(),
        ResidualType::Deviance => {
            let d = family.unit_deviance(y, mu).sqrt();
            if y > mu {
                d
            } else if y < mu {
                -d
            } else {
                0.0
            }
        }
    }
}

fn residuals_at(family: &Family, kind: ResidualType, y: &[f64], mu: &[f64]) -> Vec<f64> {
    y.iter().zip(mu).map(|(&a, &m)| residual(family, kind, a, m)).collect()
}

/// Residuals of the training fit.
pub fn residuals(model: &FittedGam, kind: ResidualType) -> Vec<f64> {
    residuals_at(&model.family, kind, model.y(), &model.fitted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QqMethod {
    Simulate,
    Normal,
}

impl std::str::FromStr for QqMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simulate" => Ok(QqMethod::Simulate),
            "normal" => Ok(QqMethod::Normal),
            other => Err(format!("unknown QQ method `{other}` (expected simulate or normal)")),
        }
    }
}

/// QQ points with pointwise reference bands: columns `theoretical`,
/// `sample`, `band_lower`, `band_upper`.
#[derive(Debug, Clone)]
pub struct QqData {
    pub table: TidyTable,
    pub method: QqMethod,
    pub level: f64,
    pub n_sim: usize,
}

fn qq_table(theoretical: Vec<f64>, sample: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> TidyTable {
    TidyTable::new()
        .with("theoretical", Column::Num(theoretical))
        .and_then(|t| t.with("sample", Column::Num(sample)))
        .and_then(|t| t.with("band_lower", Column::Num(lower)))
        .and_then(|t| t.with("band_upper", Column::Num(upper)))
        .expect("columns share length")
}

fn check_level(level: f64) -> Result<(), DiagnosticsError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(DiagnosticsError::Level(level))
    }
}

/// Normal-theory QQ data for arbitrary residuals: theoretical quantiles at
/// `(i − 0.5)/n` and pointwise bands from the asymptotic variance of normal
/// order statistics.
pub fn qq_normal(resid: &[f64], level: f64) -> Result<QqData, DiagnosticsError> {
    check_level(level)?;
    let n = resid.len();
    let mut sample = resid.to_vec();
    sample.sort_by(f64::total_cmp);
    let norm = Normal::standard();
    let z = norm.inverse_cdf((1.0 + level) / 2.0);
    let mut th = Vec::with_capacity(n);
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for i in 0..n {
        let p = (i as f64 + 0.5) / n as f64;
        let q = norm.inverse_cdf(p);
        let se = (p * (1.0 - p) / n as f64).sqrt() / norm.pdf(q);
        th.push(q);
        lo.push(q - z * se);
        hi.push(q + z * se);
    }
    Ok(QqData {
        table: qq_table(th, sample, lo, hi),
        method: QqMethod::Normal,
        level,
        n_sim: 0,
    })
}

/// QQ data for the deviance residuals of `model`.
///
/// With [`QqMethod::Simulate`], `n_sim` response vectors are drawn from the
/// fitted distribution and their residuals against the same fitted means are
/// sorted; the theoretical quantile is the mean of each order statistic and
/// the band its pointwise `(1 ± level)/2` quantiles. Replicate `r` uses rng
/// stream `r` of `seed`.
pub fn qq_data(
    model: &FittedGam,
    method: QqMethod,
    n_sim: usize,
    level: f64,
    seed: u64,
) -> Result<QqData, DiagnosticsError> {
    let resid = residuals(model, ResidualType::Deviance);
    if method == QqMethod::Normal {
        return qq_normal(&resid, level);
    }
    check_level(level)?;
    if n_sim < 2 {
        return Err(DiagnosticsError::TooFewSimulations(n_sim));
    }
    let fam = model.family;
    let mu = &model.fitted;
    let phi = model.phi;
    let reps: Vec<Vec<f64>> = (0..n_sim)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let y: Vec<f64> = mu.iter().map(|&m| fam.sample_one(m, phi, &mut rng)).collect();
            let mut res = residuals_at(&fam, ResidualType::Deviance, &y, mu);
            res.sort_by(f64::total_cmp);
            res
        })
        .collect();
    let n = resid.len();
    let mut sample = resid;
    sample.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let mut th = Vec::with_capacity(n);
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    let mut col = vec![0.0; n_sim];
    for i in 0..n {
        for (c, rep) in col.iter_mut().zip(&reps) {
            *c = rep[i];
        }
        th.push(col.iter().sum::<f64>() / n_sim as f64);
        col.sort_by(f64::total_cmp);
        lo.push(quantile_sorted(&col, alpha));
        hi.push(quantile_sorted(&col, 1.0 - alpha));
    }
    Ok(QqData {
        table: qq_table(th, sample, lo, hi),
        method,
        level,
        n_sim,
    })
}

/// Equal-width, right-open bins over the range of `x` (the last bin also
/// holds the maximum): columns `bin_left`, `bin_right`, `count`.
pub fn histogram(x: &[f64], bins: usize) -> Result<TidyTable, DiagnosticsError> {
    if bins == 0 {
        return Err(DiagnosticsError::Bins);
    }
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, width) = if x.is_empty() {
        (0.0, 1.0 / bins as f64)
    } else {
        if hi <= lo {
            hi = lo + 1.0;
        }
        (lo, (hi - lo) / bins as f64)
    };
    let mut counts = vec![0i64; bins];
    for &v in x {
        let b = (((v - lo) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[b] += 1;
    }
    let left: Vec<f64> = (0..bins).map(|b| lo + width * b as f64).collect();
    let right: Vec<f64> = (0..bins).map(|b| lo + width * (b + 1) as f64).collect();
    Ok(TidyTable::new()
        .with("bin_left", Column::Num(left))
        .and_then(|t| t.with("bin_right", Column::Num(right)))
        .and_then(|t| t.with("count", Column::Int(counts)))
        .expect("columns share length"))
}

/// The four appraisal panels.
#[derive(Debug, Clone)]
pub struct Appraisal {
    pub qq: QqData,
    /// `.eta`, `.residual`
    pub resid_vs_eta: TidyTable,
    pub histogram: TidyTable,
    /// `.fitted`, `.observed`
    pub obs_vs_fit: TidyTable,
}

pub fn appraise_data(
    model: &FittedGam,
    method: QqMethod,
    n_sim: usize,
    bins: usize,
    seed: u64,
) -> Result<Appraisal, DiagnosticsError> {
    let qq = qq_data(model, method, n_sim, 0.95, seed)?;
    let resid = residuals(model, ResidualType::Deviance);
    let resid_vs_eta = TidyTable::new()
        .with(".eta", Column::Num(model.eta.clone()))
        .and_then(|t| t.with(".residual", Column::Num(resid.clone())))
        .expect("columns share length");
    let obs_vs_fit = TidyTable::new()
        .with(".fitted", Column::Num(model.fitted.clone()))
        .and_then(|t| t.with(".observed", Column::Num(model.y().to_vec())))
        .expect("columns share length");
    Ok(Appraisal {
        qq,
        resid_vs_eta,
        histogram: histogram(&resid, bins)?,
        obs_vs_fit,
    })
}
