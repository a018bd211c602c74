//! Posterior simulation for fitted models: coefficient draws, fitted-value
//! draws, response draws, and quantile-interval summaries.
//!
//! Gaussian draws are generated in fixed blocks of [`BLOCK`] draws. Block `b`
//! uses its own ChaCha8 stream keyed by `(seed, b)`, so the output does not
//! depend on how many worker threads share the blocks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::engine::{FitError, FittedGam};
use crate::linalg::{psd_factor, symmetrize};
use crate::tidy::{Column, TidyTable};

/// Draws per independently seeded block.
pub const BLOCK: usize = 256;
/// Stream offset separating response noise from coefficient draws.
const RESPONSE_STREAMS: u64 = 1 << 40;
const MH_STREAM: u64 = 1 << 41;

#[derive(Debug, Error)]
pub enum PosteriorError {
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("unknown term `{label}`; available terms: {}", valid.join(", "))]
    UnknownTerm { label: String, valid: Vec<String> },
    #[error("posterior covariance is not positive semi-definite")]
    NotPsd,
    #[error(
        "Metropolis-Hastings acceptance rate {0:.3} is below 0.05 after adaptation; \
         consider re-parameterising the model or using the gaussian method"
    )]
    LowAcceptance(f64),
    #[error("cannot summarise an empty set of values")]
    Empty,
    #[error("invalid sampling option: {0}")]
    Option(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMethod {
    Gaussian,
    Mh,
}

impl std::fmt::Display for SampleMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SampleMethod::Gaussian => "gaussian",
            SampleMethod::Mh => "mh",
        })
    }
}

impl std::str::FromStr for SampleMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(SampleMethod::Gaussian),
            "mh" => Ok(SampleMethod::Mh),
            other => Err(format!("unknown sampling method `{other}` (expected gaussian or mh)")),
        }
    }
}

/// Random-walk Metropolis settings.
#[derive(Debug, Clone, PartialEq)]
pub struct MhOptions {
    pub burnin: usize,
    /// Keep every `thin`-th post-burn-in state.
    pub thin: usize,
    pub target_acceptance: f64,
}

impl Default for MhOptions {
    fn default() -> Self {
        MhOptions {
            burnin: 1000,
            thin: 4,
            target_acceptance: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOptions {
    pub n: usize,
    pub method: SampleMethod,
    /// Propagate smoothing-parameter uncertainty.
    pub unconditional: bool,
    pub seed: u64,
    pub mh: MhOptions,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl SampleOptions {
    pub fn new(n: usize, seed: u64) -> Self {
        SampleOptions {
            n,
            method: SampleMethod::Gaussian,
            unconditional: false,
            seed,
            mh: MhOptions::default(),
            workers: None,
        }
    }

    fn validate(&self) -> Result<(), PosteriorError> {
        if self.n == 0 {
            return Err(PosteriorError::Option("number of draws must be positive".into()));
        }
        if self.method == SampleMethod::Mh && self.unconditional {
            return Err(PosteriorError::Option(
                "unconditional sampling is only available with the gaussian method".into(),
            ));
        }
        if self.mh.thin == 0 {
            return Err(PosteriorError::Option("thinning interval must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(PosteriorError::Option("workers must be positive".into()));
        }
        Ok(())
    }
}

/// Coefficient draws (one per row) and, for MH, the post-burn-in
/// acceptance rate.
#[derive(Debug, Clone)]
pub struct CoefDraws {
    pub draws: DMatrix<f64>,
    pub acceptance: Option<f64>,
}

fn block_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn run_blocks<T: Send>(
    n: usize,
    workers: Option<usize>,
    f: impl Fn(usize, std::ops::Range<usize>) -> T + Sync + Send,
) -> Vec<T> {
    let blocks: Vec<(usize, std::ops::Range<usize>)> = (0..n.div_ceil(BLOCK))
        .map(|b| (b, b * BLOCK..((b + 1) * BLOCK).min(n)))
        .collect();
    let work = || blocks.par_iter().map(|(b, r)| f(*b, r.clone())).collect::<Vec<T>>();
    match workers {
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(work),
            Err(_) => blocks.iter().map(|(b, r)| f(*b, r.clone())).collect(),
        },
        None => work(),
    }
}

fn factor_or_jitter(vb: &DMatrix<f64>) -> Result<DMatrix<f64>, PosteriorError> {
    if let Some(l) = psd_factor(vb) {
        return Ok(l);
    }
    let p = vb.nrows();
    let eps = 1e-8 * vb.trace().abs().max(f64::MIN_POSITIVE) / p.max(1) as f64;
    psd_factor(&(vb + DMatrix::identity(p, p) * eps)).ok_or(PosteriorError::NotPsd)
}

fn standard_normals(rng: &mut ChaCha8Rng, k: usize) -> DVector<f64> {
    DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Draw `opts.n` coefficient vectors from the posterior of `model`.
pub fn coef_draws(model: &FittedGam, opts: &SampleOptions) -> Result<CoefDraws, PosteriorError> {
    opts.validate()?;
    match opts.method {
        SampleMethod::Gaussian => gaussian_draws(model, opts),
        SampleMethod::Mh => mh_draws(model, opts),
    }
}

fn gaussian_draws(model: &FittedGam, opts: &SampleOptions) -> Result<CoefDraws, PosteriorError> {
    let p = model.p();
    let beta = model.beta_vec();
    let unconditional = opts.unconditional && !model.lambda.is_empty();
    let fixed = if unconditional {
        None
    } else {
        Some(factor_or_jitter(&model.vb)?)
    };
    let rho_factor = if unconditional {
        Some(factor_or_jitter(&model.rho_cov)?)
    } else {
        None
    };
    let m = model.lambda.len();
    let blocks = run_blocks(
        opts.n,
        opts.workers,
        |b, range| -> Result<Vec<DVector<f64>>, PosteriorError> {
            let mut rng = block_rng(opts.seed, b as u64);
            let mut out = Vec::with_capacity(range.len());
            for _ in range {
                let draw = match (&fixed, &rho_factor) {
                    (Some(l), _) => &beta + l * standard_normals(&mut rng, p),
                    (None, Some(r)) => {
                        let delta = r * standard_normals(&mut rng, m);
                        let lambda: Vec<f64> = model
                            .lambda
                            .iter()
                            .zip(delta.iter())
                            .map(|(l, d)| (l.ln() + d).clamp(-700.0, 700.0).exp())
                            .collect();
                        let (b_star, vb_star) = model.refit_fixed_weights(&lambda);
                        let l = factor_or_jitter(&symmetrize(&vb_star))?;
                        b_star + l * standard_normals(&mut rng, p)
                    }
                    (None, None) => unreachable!("one factor is always present"),
                };
                out.push(draw);
            }
            Ok(out)
        },
    );
    let mut draws = DMatrix::zeros(opts.n, p);
    let mut i = 0;
    for block in blocks {
        for d in block? {
            draws.set_row(i, &d.transpose());
            i += 1;
        }
    }
    Ok(CoefDraws {
        draws,
        acceptance: None,
    })
}

/// Log posterior density up to a constant: `−(D(β) + βᵀSβ) / (2φ)`.
struct LogPost<'a> {
    model: &'a FittedGam,
    x: DMatrix<f64>,
    penalty: DMatrix<f64>,
}

impl LogPost<'_> {
    fn eval(&self, beta: &DVector<f64>) -> f64 {
        let eta = &self.x * beta;
        let fam = &self.model.family;
        let mu: Vec<f64> = eta.iter().map(|&e| fam.clamp_mean(fam.inv_link(e))).collect();
        let dev = fam.deviance(self.model.y(), &mu, None);
        let pen = beta.dot(&(&self.penalty * beta));
        let v = -(dev + pen) / (2.0 * self.model.phi);
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    }
}

fn mh_draws(model: &FittedGam, opts: &SampleOptions) -> Result<CoefDraws, PosteriorError> {
    let p = model.p();
    let (x, _) = model.prediction_matrix(&model.training)?;
    let target = LogPost {
        model,
        x,
        penalty: model.total_penalty(&model.lambda),
    };
    let l = factor_or_jitter(&model.vb)?;
    let mut rng = block_rng(opts.seed, MH_STREAM);
    let mut current = model.beta_vec();
    let mut current_lp = target.eval(&current);
    let mut log_tau = (2.4 / (p as f64).sqrt()).ln();
    let mh = &opts.mh;

    let step = |rng: &mut ChaCha8Rng, current: &mut DVector<f64>, current_lp: &mut f64, tau: f64| -> bool {
        let prop = &*current + &l * standard_normals(rng, p) * tau;
        let lp = target.eval(&prop);
        let u: f64 = rng.random();
        if u.ln() < lp - *current_lp {
            *current = prop;
            *current_lp = lp;
            true
        } else {
            false
        }
    };

    // adapt the proposal scale in batches of 50 during burn-in
    let batch = 50;
    let mut accepted = 0;
    for it in 1..=mh.burnin {
        if step(&mut rng, &mut current, &mut current_lp, log_tau.exp()) {
            accepted += 1;
        }
        if it % batch == 0 {
            let rate = accepted as f64 / batch as f64;
            let gain = 1.0 / ((it / batch) as f64).sqrt();
            log_tau += 2.0 * gain * (rate - mh.target_acceptance);
            accepted = 0;
        }
    }

    let tau = log_tau.exp();
    let mut draws = DMatrix::zeros(opts.n, p);
    let mut total_accepted = 0usize;
    let total = opts.n * mh.thin;
    for it in 0..total {
        if step(&mut rng, &mut current, &mut current_lp, tau) {
            total_accepted += 1;
        }
        if (it + 1) % mh.thin == 0 {
            draws.set_row(it / mh.thin, &current.transpose());
        }
    }
    let rate = total_accepted as f64 / total as f64;
    if p > 0 && rate < 0.05 {
        return Err(PosteriorError::LowAcceptance(rate));
    }
    Ok(CoefDraws {
        draws,
        acceptance: Some(rate),
    })
}

/// Long-format draws: `.row`, `.draw`, `.parameter`, and one value column.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub table: TidyTable,
    pub value_name: String,
    pub seed: u64,
    pub method: SampleMethod,
    pub n_draws: usize,
    pub acceptance: Option<f64>,
}

impl PosteriorDraws {
    pub fn values(&self) -> &[f64] {
        self.table.num(&self.value_name).expect("value column is numeric")
    }

    /// Mean of the value column within each draw, in draw order.
    pub fn draw_means(&self) -> Vec<f64> {
        let draws = self.table.ints(".draw").expect(".draw column");
        let vals = self.values();
        let mut sum = vec![0.0; self.n_draws];
        let mut count = vec![0usize; self.n_draws];
        for (&d, &v) in draws.iter().zip(vals) {
            sum[(d - 1) as usize] += v;
            count[(d - 1) as usize] += 1;
        }
        sum.iter().zip(&count).map(|(s, &c)| s / c.max(1) as f64).collect()
    }
}

fn long_table(values: &DMatrix<f64>, value_name: &str) -> TidyTable {
    // values: draws × rows, emitted draw-major
    let (nd, nr) = values.shape();
    let mut row = Vec::with_capacity(nd * nr);
    let mut draw = Vec::with_capacity(nd * nr);
    let mut v = Vec::with_capacity(nd * nr);
    for d in 0..nd {
        for r in 0..nr {
            row.push(r as i64 + 1);
            draw.push(d as i64 + 1);
            v.push(values[(d, r)]);
        }
    }
    TidyTable::new()
        .with(".row", Column::Int(row))
        .and_then(|t| t.with(".draw", Column::Int(draw)))
        .and_then(|t| t.with(".parameter", Column::Str(vec!["location".to_string(); nd * nr])))
        .and_then(|t| t.with(value_name, Column::Num(v)))
        .expect("columns have equal length")
}

/// Model matrix for `data` with columns outside `terms` set to zero.
pub fn term_design(
    model: &FittedGam,
    data: &Dataset,
    terms: Option<&[String]>,
) -> Result<DMatrix<f64>, PosteriorError> {
    let (mut x, _) = model.prediction_matrix(data)?;
    if let Some(keep) = terms {
        for label in keep {
            if model.term(label).is_none() {
                return Err(PosteriorError::UnknownTerm {
                    label: label.clone(),
                    valid: model.term_labels(),
                });
            }
        }
        for t in &model.terms {
            if !keep.contains(&t.label) {
                for j in t.start..t.end {
                    x.column_mut(j).fill(0.0);
                }
            }
        }
    }
    Ok(x)
}

/// Draws of the expected response reflecting coefficient uncertainty.
pub fn fitted_samples(
    model: &FittedGam,
    data: &Dataset,
    terms: Option<&[String]>,
    opts: &SampleOptions,
) -> Result<PosteriorDraws, PosteriorError> {
    let x = term_design(model, data, terms)?;
    let cd = coef_draws(model, opts)?;
    let eta = &cd.draws * x.transpose();
    let fam = model.family;
    let mu = eta.map(|e| fam.inv_link(e));
    Ok(PosteriorDraws {
        table: long_table(&mu, ".fitted"),
        value_name: ".fitted".into(),
        seed: opts.seed,
        method: opts.method,
        n_draws: opts.n,
        acceptance: cd.acceptance,
    })
}

fn simulate_rows(model: &FittedGam, mu: &DMatrix<f64>, seed: u64, workers: Option<usize>) -> DMatrix<f64> {
    let (nd, nr) = mu.shape();
    let fam = model.family;
    let phi = model.phi;
    let blocks = run_blocks(nd, workers, |b, range| {
        let mut rng = block_rng(seed, RESPONSE_STREAMS + b as u64);
        range
            .map(|d| {
                (0..nr)
                    .map(|r| fam.sample_one(mu[(d, r)], phi, &mut rng))
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>()
    });
    let mut out = DMatrix::zeros(nd, nr);
    for (d, row) in blocks.into_iter().flatten().enumerate() {
        for (r, v) in row.into_iter().enumerate() {
            out[(d, r)] = v;
        }
    }
    out
}

/// Draws of new responses at the fitted mean (sampling noise only).
pub fn predicted_samples(
    model: &FittedGam,
    data: &Dataset,
    n: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<PosteriorDraws, PosteriorError> {
    if n == 0 {
        return Err(PosteriorError::Option("number of draws must be positive".into()));
    }
    let (x, _) = model.prediction_matrix(data)?;
    let eta = x * model.beta_vec();
    let fam = model.family;
    let mu_row: Vec<f64> = eta.iter().map(|&e| fam.clamp_mean(fam.inv_link(e))).collect();
    let mu = DMatrix::from_fn(n, mu_row.len(), |_, r| mu_row[r]);
    let y = simulate_rows(model, &mu, seed, workers);
    Ok(PosteriorDraws {
        table: long_table(&y, ".response"),
        value_name: ".response".into(),
        seed,
        method: SampleMethod::Gaussian,
        n_draws: n,
        acceptance: None,
    })
}

/// Draws of new responses reflecting both coefficient uncertainty and
/// sampling noise.
pub fn posterior_samples(
    model: &FittedGam,
    data: &Dataset,
    opts: &SampleOptions,
) -> Result<PosteriorDraws, PosteriorError> {
    let (x, _) = model.prediction_matrix(data)?;
    let cd = coef_draws(model, opts)?;
    let fam = model.family;
    let mu = (&cd.draws * x.transpose()).map(|e| fam.clamp_mean(fam.inv_link(e)));
    let y = simulate_rows(model, &mu, opts.seed, opts.workers);
    Ok(PosteriorDraws {
        table: long_table(&y, ".response"),
        value_name: ".response".into(),
        seed: opts.seed,
        method: opts.method,
        n_draws: opts.n,
        acceptance: cd.acceptance,
    })
}

/// Quantile by linear interpolation between order statistics of sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median with an equal-tailed interval of the given width, as a one-row
/// table `{value_name, .lower, .upper, .width, .point, .interval}`.
pub fn median_qi(values: &[f64], width: f64, value_name: &str) -> Result<TidyTable, PosteriorError> {
    if values.is_empty() {
        return Err(PosteriorError::Empty);
    }
    if !(width > 0.0 && width < 1.0) {
        return Err(PosteriorError::Option(format!(
            "interval width {width} must lie in (0, 1)"
        )));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let alpha = (1.0 - width) / 2.0;
    Ok(TidyTable::new()
        .with(value_name, Column::Num(vec![quantile_sorted(&s, 0.5)]))
        .and_then(|t| t.with(".lower", Column::Num(vec![quantile_sorted(&s, alpha)])))
        .and_then(|t| t.with(".upper", Column::Num(vec![quantile_sorted(&s, 1.0 - alpha)])))
        .and_then(|t| t.with(".width", Column::Num(vec![width])))
        .and_then(|t| t.with(".point", Column::Str(vec!["median".into()])))
        .and_then(|t| t.with(".interval", Column::Str(vec!["qi".into()])))
        .expect("single-row columns"))
}
