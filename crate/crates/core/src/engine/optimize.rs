//! Smoothing parameter search: per-coordinate log-grid scan followed by
//! golden-section refinement, cycled over smooths.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::criterion::{gcv_score, reml_gaussian, Method};
use super::design::{total_penalty, Assembled, SmoothTerm};
use super::pirls::{pirls_fit, PirlsState};
use super::{FitControl, FitError};
use crate::family::Family;

/// Score a converged state under `method`.
pub fn criterion_score(
    method: Method,
    gcv_gamma: f64,
    state: &PirlsState,
    penalty: &DMatrix<f64>,
    smooths: &[SmoothTerm],
    lambda: &[f64],
) -> f64 {
    match method {
        Method::Gcv => gcv_score(state.mu.len(), state.deviance, gcv_gamma * state.edf_total(penalty)),
        Method::Reml => reml_gaussian(state, penalty, smooths, lambda),
    }
}

pub(crate) struct Problem<'a> {
    pub x: &'a DMatrix<f64>,
    pub smooths: &'a [SmoothTerm],
    pub family: &'a Family,
    pub y: &'a [f64],
    pub control: &'a FitControl,
    pub method: Method,
}

impl Problem<'_> {
    pub fn fit_at(&self, lambda: &[f64]) -> Result<(PirlsState, DMatrix<f64>), FitError> {
        let s = total_penalty(self.smooths, self.x.ncols(), lambda);
        let st = pirls_fit(self.x, &s, self.family, self.y, self.control).map_err(|e| FitError::Pirls {
            lambda: lambda.to_vec(),
            message: e.0,
        })?;
        Ok((st, s))
    }

    fn score_log10(&self, rho: &[f64]) -> Result<f64, FitError> {
        let lambda: Vec<f64> = rho.iter().map(|r| 10f64.powf(*r)).collect();
        let (st, s) = self.fit_at(&lambda)?;
        let v = criterion_score(self.method, self.control.gcv_gamma, &st, &s, self.smooths, &lambda);
        Ok(if v.is_nan() { f64::INFINITY } else { v })
    }
}

/// Lower score wins; ties go to the smaller smoothing parameter.
fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    a.1 < b.1 || (a.1 == b.1 && a.0 < b.0)
}

fn scan(problem: &Problem, rho: &[f64], j: usize) -> Result<(f64, f64), FitError> {
    let c = problem.control;
    let step = (c.grid_upper - c.grid_lower) / (c.grid_points - 1) as f64;
    let eval = |i: usize| -> Result<(f64, f64), FitError> {
        let g = c.grid_lower + step * i as f64;
        let mut r = rho.to_vec();
        r[j] = g;
        Ok((g, problem.score_log10(&r)?))
    };
    let results: Vec<Result<(f64, f64), FitError>> = if c.parallel {
        (0..c.grid_points).into_par_iter().map(eval).collect()
    } else {
        (0..c.grid_points).map(eval).collect()
    };
    let mut best: Option<(f64, f64)> = None;
    for r in results {
        let r = r?;
        if best.is_none_or(|b| better(r, b)) {
            best = Some(r);
        }
    }
    Ok(best.expect("grid has at least two points"))
}

fn golden(problem: &Problem, rho: &[f64], j: usize, start: (f64, f64)) -> Result<(f64, f64), FitError> {
    let c = problem.control;
    let step = (c.grid_upper - c.grid_lower) / (c.grid_points - 1) as f64;
    let mut a = (start.0 - step).max(c.grid_lower);
    let mut b = (start.0 + step).min(c.grid_upper);
    let eval = |g: f64| -> Result<(f64, f64), FitError> {
        let mut r = rho.to_vec();
        r[j] = g;
        Ok((g, problem.score_log10(&r)?))
    };
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = eval(b - ratio * (b - a))?;
    let mut x2 = eval(a + ratio * (b - a))?;
    let mut best = start;
    for cand in [x1, x2] {
        if better(cand, best) {
            best = cand;
        }
    }
    for _ in 0..c.refine_iters {
        if better(x1, x2) || x1.1 == x2.1 {
            b = x2.0;
            x2 = x1;
            x1 = eval(b - ratio * (b - a))?;
            if better(x1, best) {
                best = x1;
            }
        } else {
            a = x1.0;
            x1 = x2;
            x2 = eval(a + ratio * (b - a))?;
            if better(x2, best) {
                best = x2;
            }
        }
    }
    Ok(best)
}

/// Result of [`optimize_lambda`].
#[derive(Debug, Clone)]
pub struct LambdaSearch {
    pub lambda: Vec<f64>,
    pub score: f64,
    pub cycles: usize,
}

/// Choose one smoothing parameter per smooth by minimising the criterion.
pub fn optimize_lambda(
    method: Method,
    assembled: &Assembled,
    family: &Family,
    y: &[f64],
    control: &FitControl,
) -> Result<LambdaSearch, FitError> {
    let problem = Problem {
        x: &assembled.x,
        smooths: &assembled.smooths,
        family,
        y,
        control,
        method,
    };
    search(&problem)
}

pub(crate) fn search(problem: &Problem) -> Result<LambdaSearch, FitError> {
    let m = problem.smooths.len();
    if m == 0 {
        return Ok(LambdaSearch {
            lambda: Vec::new(),
            score: f64::NAN,
            cycles: 0,
        });
    }
    let c = problem.control;
    let mut rho = vec![0f64.clamp(c.grid_lower, c.grid_upper); m];
    let mut score = problem.score_log10(&rho)?;
    let mut cycles = 0;
    for _ in 0..c.max_cycles {
        cycles += 1;
        let before = score;
        for j in 0..m {
            let coarse = scan(problem, &rho, j)?;
            let refined = golden(problem, &rho, j, coarse)?;
            if refined.1 <= score {
                rho[j] = refined.0;
                score = refined.1;
            }
        }
        if m == 1 || !(before - score > c.cycle_tol * before.abs()) {
            break;
        }
    }
    Ok(LambdaSearch {
        lambda: rho.iter().map(|r| 10f64.powf(*r)).collect(),
        score,
        cycles,
    })
}
