//! Tidy inspection of fitted models: covariate grids and slices, smooth
//! estimates with credible intervals, and fitted values.

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::basis::{basis_system_tidy, columns_for, cross, penalty_tidy, range_grid};
use crate::data::Dataset;
use crate::engine::{FitError, FittedGam};
use crate::posterior::{term_design, PosteriorError};
use crate::tidy::{Column, TableError, TidyTable};

#[derive(Debug, Error)]
pub enum InspectError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("unknown covariate `{name}`; model covariates: {}", valid.join(", "))]
    UnknownCovariate { name: String, valid: Vec<String> },
    #[error("unknown smooth `{label}`; available smooths: {}", valid.join(", "))]
    UnknownSmooth { label: String, valid: Vec<String> },
    #[error("coverage {0} must lie in (0, 1)")]
    Coverage(f64),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
}

/// How [`evenly`] spaces its points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spacing {
    Count(usize),
    By(f64),
}

/// Inclusive arithmetic sequence from `lower` to `upper`.
///
/// With `By(step)` the last point is the largest `lower + i·step` not
/// exceeding `upper`; it is exactly `upper` when the range is a multiple of
/// the step.
pub fn evenly(lower: f64, upper: f64, spacing: Spacing) -> Result<Vec<f64>, InspectError> {
    if !(lower.is_finite() && upper.is_finite() && lower < upper) {
        return Err(InspectError::Grid(format!(
            "need finite lower < upper, got {lower} and {upper}"
        )));
    }
    match spacing {
        Spacing::Count(n) => {
            if n < 2 {
                return Err(InspectError::Grid(format!("need at least 2 points, got {n}")));
            }
            let step = (upper - lower) / (n - 1) as f64;
            let mut v: Vec<f64> = (0..n).map(|i| lower + step * i as f64).collect();
            v[n - 1] = upper;
            Ok(v)
        }
        Spacing::By(by) => {
            if !(by > 0.0 && by.is_finite()) {
                return Err(InspectError::Grid(format!("step must be positive, got {by}")));
            }
            let span = (upper - lower) / by;
            let steps = (span + 1e-9).floor();
            if steps > 1e7 {
                return Err(InspectError::Grid(format!("step {by} gives too many points")));
            }
            let steps = steps as usize;
            let mut v: Vec<f64> = (0..=steps).map(|i| lower + by * i as f64).collect();
            if (span - steps as f64).abs() < 1e-9 {
                v[steps] = upper;
            }
            Ok(v)
        }
    }
}

/// [`evenly`] over the range of the values in `x`.
pub fn evenly_over(x: &[f64], spacing: Spacing) -> Result<Vec<f64>, InspectError> {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    evenly(lo, hi, spacing)
}

fn median(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    crate::posterior::quantile_sorted(&s, 0.5)
}

/// Full crossing of the given covariate grids (first grid varying slowest);
/// every other model covariate is held at its training median.
pub fn data_slice(model: &FittedGam, grids: &[(String, Vec<f64>)]) -> Result<Dataset, InspectError> {
    let covs = model.covariates();
    for (name, g) in grids {
        if !covs.contains(name) {
            return Err(InspectError::UnknownCovariate {
                name: name.clone(),
                valid: covs.clone(),
            });
        }
        if g.is_empty() {
            return Err(InspectError::Grid(format!("grid for `{name}` is empty")));
        }
    }
    let values: Vec<Vec<f64>> = grids.iter().map(|(_, g)| g.clone()).collect();
    let crossed = cross(&values);
    let n = crossed.first().map_or(1, Vec::len);
    let mut out = Dataset::new();
    for (name, col) in grids.iter().map(|(n, _)| n).zip(crossed) {
        out.insert(name.clone(), col).map_err(FitError::from)?;
    }
    for name in &covs {
        if out.get(name).is_none() {
            let typical = median(model.training.column(name).map_err(FitError::from)?);
            out.insert(name.clone(), vec![typical; n]).map_err(FitError::from)?;
        }
    }
    Ok(out)
}

/// Convex hull (counter-clockwise, no collinear points) of 2-D points.
fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn outside_hull(hull: &[(f64, f64)], p: (f64, f64), scale: f64) -> bool {
    if hull.len() < 3 {
        return true;
    }
    let tol = 1e-9 * scale;
    (0..hull.len()).any(|i| {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let c = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        c < -tol * len
    })
}

fn extrapolation_flags(model: &FittedGam, vars: &[String], cols: &[&[f64]], basis_flags: Vec<bool>) -> Vec<bool> {
    if vars.len() != 2 {
        return basis_flags;
    }
    let (Some(a), Some(b)) = (model.training.get(&vars[0]), model.training.get(&vars[1])) else {
        return basis_flags;
    };
    let hull = convex_hull(a.iter().copied().zip(b.iter().copied()).collect());
    let scale = hull.iter().fold(1.0f64, |m, p| m.max(p.0.abs()).max(p.1.abs()));
    (0..cols[0].len())
        .map(|i| outside_hull(&hull, (cols[0][i], cols[1][i]), scale))
        .collect()
}

fn select_smooths(model: &FittedGam, select: Option<&[String]>) -> Result<Vec<usize>, InspectError> {
    let labels: Vec<String> = model.smooths.iter().map(|s| s.label().to_string()).collect();
    match select {
        None => Ok((0..model.smooths.len()).collect()),
        Some(sel) => sel
            .iter()
            .map(|l| {
                labels
                    .iter()
                    .position(|x| x == l)
                    .ok_or_else(|| InspectError::UnknownSmooth {
                        label: l.clone(),
                        valid: labels.clone(),
                    })
            })
            .collect(),
    }
}

/// Basis functions of one fitted smooth (as used in the model, i.e. after
/// the identifiability constraint) on `n` points per covariate spanning the
/// training data.
pub fn basis_functions(model: &FittedGam, label: &str, n: usize) -> Result<TidyTable, InspectError> {
    let j = select_smooths(model, Some(&[label.to_string()]))?[0];
    if n < 2 {
        return Err(InspectError::Grid(format!("need at least 2 grid points, got {n}")));
    }
    let b = &model.smooths[j].basis;
    let train = columns_for(&b.variables, &model.training).map_err(FitError::from)?;
    let grid = cross(&train.iter().map(|c| range_grid(c, n)).collect::<Vec<_>>());
    Ok(basis_system_tidy(b, &grid))
}

/// Penalty matrices of the selected smooths (all by default), unscaled,
/// stacked in long format.
pub fn penalty_matrices(model: &FittedGam, select: Option<&[String]>) -> Result<TidyTable, InspectError> {
    let mut out = TidyTable::new();
    for j in select_smooths(model, select)? {
        let s = &model.smooths[j];
        out.append(&penalty_tidy(&s.basis, s.label()))?;
    }
    Ok(out)
}

/// Evaluate smooths with standard errors on a grid over the training range
/// (`n` points per covariate) or at the rows of `data`.
///
/// Columns: `.smooth, .type, .by, .estimate, .se`, one column per covariate
/// of any selected smooth (`NA` where a smooth does not use it), and
/// `.extrapolated` (outside the training range in 1-D, outside the convex
/// hull of the training points in 2-D).
pub fn smooth_estimates(
    model: &FittedGam,
    select: Option<&[String]>,
    n: usize,
    data: Option<&Dataset>,
) -> Result<TidyTable, InspectError> {
    let chosen = select_smooths(model, select)?;
    if data.is_none() && n < 2 {
        return Err(InspectError::Grid(format!("need at least 2 grid points, got {n}")));
    }
    let mut cov_names: Vec<String> = Vec::new();
    for &j in &chosen {
        for v in &model.smooths[j].basis.variables {
            if !cov_names.contains(v) {
                cov_names.push(v.clone());
            }
        }
    }

    let mut smooth = Vec::new();
    let mut kind = Vec::new();
    let mut est = Vec::new();
    let mut se = Vec::new();
    let mut ext = Vec::new();
    let mut covs: Vec<Vec<f64>> = vec![Vec::new(); cov_names.len()];
    for &j in &chosen {
        let s = &model.smooths[j];
        let vars = &s.basis.variables;
        let grid: Vec<Vec<f64>> = match data {
            Some(d) => columns_for(vars, d)
                .map_err(FitError::from)?
                .iter()
                .map(|c| c.to_vec())
                .collect(),
            None => {
                let train = columns_for(vars, &model.training).map_err(FitError::from)?;
                cross(&train.iter().map(|c| range_grid(c, n)).collect::<Vec<_>>())
            }
        };
        let cols: Vec<&[f64]> = grid.iter().map(Vec::as_slice).collect();
        let (xj, flags) = s.basis.evaluate(&cols);
        let flags = extrapolation_flags(model, vars, &cols, flags);
        let k = s.end - s.start;
        let bj = model.beta_vec().rows(s.start, k).into_owned();
        let vj = model.vb.view((s.start, s.start), (k, k)).into_owned();
        let fit = &xj * bj;
        let xv = &xj * vj;
        let rows = xj.nrows();
        for i in 0..rows {
            smooth.push(s.label().to_string());
            kind.push(s.basis.code().to_string());
            est.push(fit[i]);
            se.push(xv.row(i).dot(&xj.row(i)).max(0.0).sqrt());
            ext.push(flags[i]);
            for (c, name) in cov_names.iter().enumerate() {
                let v = vars.iter().position(|v| v == name).map_or(f64::NAN, |d| grid[d][i]);
                covs[c].push(v);
            }
        }
    }
    let total = est.len();
    let mut t = TidyTable::new();
    t.push(".smooth", Column::Str(smooth))?;
    t.push(".type", Column::Str(kind))?;
    t.push(".by", Column::Str(vec![String::new(); total]))?;
    t.push(".estimate", Column::Num(est))?;
    t.push(".se", Column::Num(se))?;
    for (name, c) in cov_names.into_iter().zip(covs) {
        t.push(name, Column::Num(c))?;
    }
    t.push(".extrapolated", Column::Bool(ext))?;
    Ok(t)
}

fn normal_quantile(coverage: f64) -> Result<f64, InspectError> {
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(InspectError::Coverage(coverage));
    }
    let n = Normal::standard();
    Ok(n.inverse_cdf((1.0 + coverage) / 2.0))
}

/// Add `.lower_ci` / `.upper_ci = .estimate ∓ z·.se`; existing interval
/// columns are replaced.
pub fn add_confint(table: &TidyTable, coverage: f64) -> Result<TidyTable, InspectError> {
    let z = normal_quantile(coverage)?;
    let est = table.num(".estimate")?;
    let se = table.num(".se")?;
    let lower: Vec<f64> = est.iter().zip(se).map(|(e, s)| e - z * s).collect();
    let upper: Vec<f64> = est.iter().zip(se).map(|(e, s)| e + z * s).collect();
    let mut out = table.clone();
    out.push(".lower_ci", Column::Num(lower))?;
    out.push(".upper_ci", Column::Num(upper))?;
    Ok(out)
}

/// Scale of [`fitted_values`] output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Response,
    Link,
}

impl std::str::FromStr for Scale {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "response" => Ok(Scale::Response),
            "link" => Ok(Scale::Link),
            other => Err(format!("unknown scale `{other}` (expected response or link)")),
        }
    }
}

/// Point predictions with pointwise credible intervals.
///
/// Columns: `.row`, the model covariates, `.parameter`, `.fitted`, `.se`,
/// `.lower_ci`, `.upper_ci`. Intervals are formed on the link scale and
/// mapped through the inverse link; `.se` on the response scale uses the
/// delta method.
pub fn fitted_values(
    model: &FittedGam,
    data: &Dataset,
    terms: Option<&[String]>,
    scale: Scale,
    coverage: f64,
) -> Result<TidyTable, InspectError> {
    let z = normal_quantile(coverage)?;
    let x: DMatrix<f64> = term_design(model, data, terms)?;
    let eta = &x * model.beta_vec();
    let xv = &x * &model.vb;
    let n = x.nrows();
    let fam = model.family;
    let mut fitted = Vec::with_capacity(n);
    let mut se = Vec::with_capacity(n);
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for i in 0..n {
        let s = xv.row(i).dot(&x.row(i)).max(0.0).sqrt();
        let e = eta[i];
        match scale {
            Scale::Link => {
                fitted.push(e);
                se.push(s);
                lo.push(e - z * s);
                hi.push(e + z * s);
            }
            Scale::Response => {
                fitted.push(fam.inv_link(e));
                se.push(fam.dmu_deta(e).abs() * s);
                lo.push(fam.inv_link(e - z * s));
                hi.push(fam.inv_link(e + z * s));
            }
        }
    }
    let mut t = TidyTable::new();
    t.push(".row", Column::Int((1..=n as i64).collect()))?;
    for name in model.covariates() {
        let col = data.column(&name).map_err(FitError::from)?;
        t.push(name, Column::Num(col.to_vec()))?;
    }
    t.push(".parameter", Column::Str(vec!["location".into(); n]))?;
    t.push(".fitted", Column::Num(fitted))?;
    t.push(".se", Column::Num(se))?;
    t.push(".lower_ci", Column::Num(lo))?;
    t.push(".upper_ci", Column::Num(hi))?;
    Ok(t)
}

/// The model's inverse link as a function value.
pub fn inv_link_of(model: &FittedGam) -> impl Fn(f64) -> f64 + Copy + Send + Sync {
    let fam = model.family;
    move |eta| fam.inv_link(eta)
}
