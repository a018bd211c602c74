//! Acceptance run: one PASS/FAIL line per criterion, with its runtime.
//!
//! The process fails only when a criterion fails that is not listed in
//! `KNOWN_OPEN`. Known-open criteria still print FAIL with their numbers.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use gamforge::basis::{cr_basis, place_knots, tprs_basis};
use gamforge::diagnostics::{qq_data, QqMethod};
use gamforge::engine::{edf, pirls_fit};
use gamforge::inspect::{data_slice, evenly, fitted_values, Scale, Spacing};
use gamforge::posterior::{coef_draws, fitted_samples, median_qi, SampleMethod, SampleOptions};
use gamforge::{fit, parse_formula, print_formula, Family, FitControl, FittedGam, Method};
use nalgebra::DVector;
use proptest::prelude::*;
use proptest::test_runner::{RngAlgorithm, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

#[path = "../../core/tests/common/corpus.rs"]
mod corpus;
#[path = "../../core/tests/common/fixtures.rs"]
mod fixtures;
#[path = "../../core/tests/common/oracles.rs"]
mod oracles;

use fixtures::{
    batch_se, column_means, gaussian_fit, normal_equation_instance, poisson_fit, qq_coverage, sample_cov, survey_model,
    two_covariate_model, QQ_SEED_OFFSET,
};
use oracles::{
    centred_rmse, cr_penalty_by_quadrature, dense_normal_equations, gu_wahba, one_covariate, random_x, rel_err,
};

/// Criteria that fail for reasons analysed outside the code base. Each one
/// still runs in full and prints its observed counts.
const KNOWN_OPEN: &[&str] = &["gu-wahba recovery", "qq band coverage"];

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn null_space() -> Outcome {
    let x = random_x(100, 4);
    let b = tprs_basis(&[&x], 10, 2).map_err(|e| e.to_string())?;
    let linear = b.k() - 1;
    let row = b.penalty.row(linear).amax().max(b.penalty.column(linear).amax());
    let design = b.design.clone();
    let mut quad = 0f64;
    for target in [DVector::from_element(x.len(), 1.0), DVector::from_column_slice(&x)] {
        let beta = design
            .clone()
            .svd(true, true)
            .solve(&target, 1e-12)
            .map_err(|e| e.to_string())?;
        quad = quad.max(beta.dot(&(&b.penalty * &beta)).abs());
    }
    check(
        row <= 1e-12 && quad <= 1e-10,
        format!("linear row/col max {row:.1e}, max βᵀSβ {quad:.1e}"),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0f64;
    for inst in 0..50 {
        let (x, s, y) = normal_equation_instance(&mut rng, inst);
        let st = pirls_fit(&x, &s, &Family::gaussian(), &y, &FitControl::default()).map_err(|e| e.0)?;
        worst = worst.max(rel_err(&st.beta, &dense_normal_equations(&x, &s, &y)));
    }
    check(worst < 1e-8, format!("50 instances, worst relative error {worst:.1e}"))
}

fn gu_wahba_recovery() -> Outcome {
    let f = parse_formula("y ~ s(x, k=10)").unwrap();
    let gcv = |d| fit(&f, &d, Family::gaussian(), Method::Gcv, &FitControl::default()).unwrap();
    let recovered = (0..20)
        .filter(|&seed| centred_rmse(&gcv(one_covariate(200, seed, gu_wahba, 1.0)), gu_wahba) < 0.5)
        .count();
    let flat = (0..20)
        .filter(|&seed| edf(&gcv(one_covariate(200, seed, |_| 0.0, 1.0))).num(".edf").unwrap()[0] <= 1.5)
        .count();
    check(
        recovered >= 18 && flat >= 18,
        format!("RMSE < 0.5 in {recovered}/20; pure-noise edf ≤ 1.5 in {flat}/20"),
    )
}

fn cr_quadrature() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (k, seed) in [(4, 1), (10, 2), (20, 3)] {
        let x = random_x(300, seed);
        let knots = place_knots(&x, k).map_err(|e| e.to_string())?;
        let b = cr_basis(&x, &knots).map_err(|e| e.to_string())?;
        let worst = (cr_penalty_by_quadrature(&knots) - &b.penalty).amax();
        ok &= worst < 1e-8;
        parts.push(format!("k={k} {worst:.1e}"));
    }
    check(ok, format!("max abs diff {}", parts.join(", ")))
}

fn posterior_sampling() -> Outcome {
    let m = two_covariate_model();
    let n = 10_000;
    let g = coef_draws(&m, &SampleOptions::new(n, 342))
        .map_err(|e| e.to_string())?
        .draws;
    let worst_z = column_means(&g)
        .iter()
        .enumerate()
        .map(|(j, mean)| (mean - m.beta[j]).abs() / (m.vb[(j, j)] / n as f64).sqrt())
        .fold(0f64, f64::max);
    let frob = (sample_cov(&g) - &m.vb).norm() / m.vb.norm();

    let mut opts = SampleOptions::new(n, 5);
    let g5 = column_means(&coef_draws(&m, &opts).map_err(|e| e.to_string())?.draws);
    opts.method = SampleMethod::Mh;
    let mh = coef_draws(&m, &opts).map_err(|e| e.to_string())?;
    let mh_z = (0..m.p())
        .map(|j| {
            let chain: Vec<f64> = mh.draws.column(j).iter().copied().collect();
            let mean = chain.iter().sum::<f64>() / n as f64;
            let se = (batch_se(&chain, 40).powi(2) + m.vb[(j, j)] / n as f64).sqrt();
            (mean - g5[j]).abs() / se
        })
        .fold(0f64, f64::max);
    check(
        worst_z <= 3.0 && frob <= 0.10 && mh_z <= 3.0,
        format!(
            "max |mean-β̂|/SE {worst_z:.2}, cov Frobenius {:.1}%, max MH gap {mh_z:.2} SE (acceptance {:.2})",
            100.0 * frob,
            mh.acceptance.unwrap_or(f64::NAN)
        ),
    )
}

fn qq_bands() -> Outcome {
    let covered = |m: &FittedGam, seed: u64| {
        qq_coverage(&qq_data(m, QqMethod::Simulate, 50, 0.95, seed + QQ_SEED_OFFSET).unwrap()) >= 0.90
    };
    let gaussian = (0..20u64).filter(|&s| covered(&gaussian_fit(s), s)).count();
    let poisson = (0..20u64).filter(|&s| covered(&poisson_fit(s), s)).count();
    check(
        gaussian >= 18 && poisson >= 18,
        format!("≥90% inside: gaussian {gaussian}/20, poisson {poisson}/20"),
    )
}

fn workflow() -> Outcome {
    let m = survey_model();
    let lat = evenly(40.0, 50.0, Spacing::By(0.5)).unwrap();
    let lon = evenly(-10.0, 0.0, Spacing::By(0.5)).unwrap();
    let ds = data_slice(&m, &[("lat".into(), lat), ("lon".into(), lon)]).map_err(|e| e.to_string())?;
    let terms = ["(Intercept)".to_string(), "s(lat,lon)".to_string()];
    let fv = fitted_values(&m, &ds, Some(&terms), Scale::Response, 0.95).map_err(|e| e.to_string())?;
    let analytic = fv.num(".fitted").unwrap().iter().sum::<f64>() / ds.n_rows() as f64;
    let draws = fitted_samples(&m, &ds, Some(&terms), &SampleOptions::new(10_000, 342)).map_err(|e| e.to_string())?;
    let summary = median_qi(&draws.draw_means(), 0.95, "value").map_err(|e| e.to_string())?;
    let csv = summary.to_csv_string();
    let header = csv.lines().next().unwrap_or("");
    let (lo, hi) = (summary.num(".lower").unwrap()[0], summary.num(".upper").unwrap()[0]);
    check(
        ds.n_rows() == 441 && header == "value,.lower,.upper,.width,.point,.interval" && lo < analytic && analytic < hi,
        format!(
            "{} grid rows, mean {analytic:.4} in [{lo:.4}, {hi:.4}], header {header}",
            ds.n_rows()
        ),
    )
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn gamforge(args: &[String]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_gamforge"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let at = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let data = fixture("counts.csv").to_string_lossy().into_owned();
    let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let mut compared = 0;
    let mut mismatches = Vec::new();

    let fit_to = |out: &str| {
        let args = owned(&[
            "fit",
            "--data",
            &data,
            "--formula",
            "count ~ s(x, k=8) + s(z, bs=\"cr\", k=5)",
            "--family",
            "poisson",
            "--out",
            out,
        ]);
        gamforge(&args).map(|stdout| (stdout, std::fs::read(out).unwrap()))
    };
    let a = fit_to(&at("a.json"))?;
    let b = fit_to(&at("b.json"))?;
    compared += 1;
    if a != b {
        mismatches.push("fit".to_string());
    }
    let model = at("a.json");

    let runs: Vec<Vec<&str>> = vec![
        vec!["inspect", "summary", "--model", &model],
        vec!["inspect", "summary", "--model", &model, "--format", "json"],
        vec!["inspect", "smooths", "--model", &model, "--n", "30"],
        vec!["inspect", "basis", "--model", &model, "--n", "30"],
        vec!["inspect", "penalty", "--model", &model],
        vec!["inspect", "predict", "--model", &model, "--data", &data],
        vec!["inspect", "slice", "--model", &model, "--grid", "x=0:1:0.1"],
        vec![
            "sample",
            "--model",
            &model,
            "--n",
            "300",
            "--seed",
            "7",
            "--kind",
            "posterior",
        ],
        vec![
            "sample",
            "--model",
            &model,
            "--n",
            "300",
            "--seed",
            "7",
            "--kind",
            "predicted",
        ],
        vec![
            "sample",
            "--model",
            &model,
            "--n",
            "300",
            "--seed",
            "7",
            "--unconditional",
        ],
        vec![
            "sample", "--model", &model, "--n", "300", "--seed", "7", "--method", "mh",
        ],
        vec![
            "sample",
            "--model",
            &model,
            "--n",
            "600",
            "--seed",
            "7",
            "--summarise",
            "0.9",
        ],
    ];
    for args in &runs {
        let first = gamforge(&owned(args))?;
        let mut variants = vec![owned(args)];
        if args[0] == "sample" {
            for w in ["1", "3"] {
                variants.push(owned(&[&args[..], &["--workers", w]].concat()));
            }
        }
        for v in variants {
            compared += 1;
            if gamforge(&v)? != first {
                mismatches.push(v.join(" "));
            }
        }
    }

    for (i, (sub, flag)) in [("basis", "--smooth"), ("smooths", "--select"), ("penalty", "--select")]
        .into_iter()
        .enumerate()
    {
        let svg = |tag: &str| at(&format!("{sub}{tag}.svg"));
        for tag in ["1", "2"] {
            gamforge(&owned(&[
                "inspect",
                sub,
                "--model",
                &model,
                flag,
                "s(x)",
                "--svg",
                &svg(tag),
                "--out",
                &at(&format!("{i}{tag}.csv")),
            ]))?;
        }
        compared += 1;
        if std::fs::read(svg("1")).unwrap() != std::fs::read(svg("2")).unwrap() {
            mismatches.push(format!("inspect {sub} --svg"));
        }
    }

    for d in ["diag1", "diag2"] {
        gamforge(&owned(&[
            "diagnose",
            "--model",
            &model,
            "--out-dir",
            &at(d),
            "--seed",
            "3",
        ]))?;
    }
    compared += 1;
    if tree(&dir.path().join("diag1")) != tree(&dir.path().join("diag2")) {
        mismatches.push("diagnose".into());
    }

    check(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{compared} re-runs byte-identical")
        } else {
            format!("differs: {}", mismatches.join("; "))
        },
    )
}

fn parser_corpus() -> Outcome {
    let corpus = corpus::golden();
    let golden_ok = corpus
        .iter()
        .filter(|(text, want)| parse_formula(text).ok().as_ref() == Some(want))
        .count();
    let mut runner = TestRunner::new_with_rng(
        ProptestConfig {
            cases: 500,
            failure_persistence: None,
            ..ProptestConfig::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let generated = std::cell::Cell::new(0);
    let result = runner.run(&(corpus::formula(), any::<u8>()), |(f, pattern)| {
        generated.set(generated.get() + 1);
        let text = corpus::respace(&print_formula(&f), pattern);
        let parsed = parse_formula(&text).map_err(|e| TestCaseError::fail(format!("{text:?}: {e}")))?;
        prop_assert_eq!(&parsed, &f);
        prop_assert_eq!(parse_formula(&print_formula(&parsed)).unwrap(), parsed);
        Ok(())
    });
    let trips = match result {
        Ok(()) => format!("{} generated formulas round-trip", generated.get()),
        Err(e) => return Err(format!("{golden_ok}/{} golden; generated: {e}", corpus.len())),
    };
    check(
        golden_ok == 25 && corpus.len() == 25,
        format!("{golden_ok}/{} golden ASTs, {trips}", corpus.len()),
    )
}

fn main() -> ExitCode {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria = [
        Criterion {
            name: "penalty null space",
            limit: secs(1),
            run: null_space,
        },
        Criterion {
            name: "oracle equivalence",
            limit: secs(10),
            run: oracle_equivalence,
        },
        Criterion {
            name: "gu-wahba recovery",
            limit: secs(60),
            run: gu_wahba_recovery,
        },
        Criterion {
            name: "cr penalty quadrature",
            limit: secs(5),
            run: cr_quadrature,
        },
        Criterion {
            name: "posterior sampling",
            limit: secs(60),
            run: posterior_sampling,
        },
        Criterion {
            name: "qq band coverage",
            limit: secs(60),
            run: qq_bands,
        },
        Criterion {
            name: "workflow replication",
            limit: secs(30),
            run: workflow,
        },
        Criterion {
            name: "determinism",
            limit: None,
            run: determinism,
        },
        Criterion {
            name: "parser corpus",
            limit: None,
            run: parser_corpus,
        },
    ];

    let mut unexpected = Vec::new();
    let mut passed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let limit = c.limit.map(|l| format!(" / {}s", l.as_secs())).unwrap_or_default();
        let timing = format!("{:.2}s{limit}", took.as_secs_f64());
        let (ok, detail) = match outcome {
            Ok(d) if c.limit.is_some_and(|l| took > l) => (false, format!("{d}; over time limit")),
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        let open = KNOWN_OPEN.contains(&c.name);
        let tag = match (ok, open) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known open)",
            (false, false) => "FAIL",
        };
        println!("{tag:<17} {:<22} [{timing}] {detail}", c.name);
        if ok {
            passed += 1;
        } else if !open {
            unexpected.push(c.name);
        }
    }
    println!(
        "acceptance: {passed}/{} passed, {} known open, {} unexpected failures",
        criteria.len(),
        criteria.len() - passed - unexpected.len(),
        unexpected.len()
    );
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
