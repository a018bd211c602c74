//! Handwritten formula corpus with expected syntax trees, shared by the
//! parser tests and the acceptance run.

#![allow(dead_code)]

use gamforge::{BasisCode, ModelFormula, SmoothSpec};
use proptest::prelude::*;

fn s(vars: &[&str]) -> SmoothSpec {
    SmoothSpec::new(vars, BasisCode::Tp)
}

pub fn cr(var: &str) -> SmoothSpec {
    SmoothSpec::new(&[var], BasisCode::Cr)
}

fn other(vars: &[&str], code: &str) -> SmoothSpec {
    SmoothSpec::new(vars, BasisCode::Unsupported(code.into()))
}

fn with_m(mut spec: SmoothSpec, m: i32) -> SmoothSpec {
    spec.m = m;
    spec
}

pub fn model(response: &str, parametric: &[&str], smooths: Vec<SmoothSpec>, intercept: bool) -> ModelFormula {
    ModelFormula {
        response: response.into(),
        parametric: parametric.iter().map(|p| p.to_string()).collect(),
        smooths,
        intercept,
    }
}

pub fn sphere_model() -> ModelFormula {
    model(
        "chl",
        &[],
        vec![
            with_m(other(&["lat", "lon"], "sos"), -1).with_k(150),
            cr("jul.day").with_k(20),
            s(&["bath"]).with_k(10),
        ],
        true,
    )
}

pub fn golden() -> Vec<(&'static str, ModelFormula)> {
    vec![
        (
            "chl ~ s(lat, lon, bs = \"sos\", m = -1, k = 150) +\n    s(jul.day, bs = \"cr\", k = 20) +\n    s(bath, k = 10)",
            sphere_model(),
        ),
        (
            "chl ~ s(lat, lon, bs = \"sos\", m = -1, k = 150) + # location\n      s(jul.day, bs = \"cr\", k = 20) +\n      s(bath, k = 10)",
            sphere_model(),
        ),
        ("y ~ x", model("y", &["x"], vec![], true)),
        ("y ~ s(x)", model("y", &[], vec![s(&["x"])], true)),
        ("y~s(x)", model("y", &[], vec![s(&["x"])], true)),
        ("y ~ s(x, k=10)", model("y", &[], vec![s(&["x"]).with_k(10)], true)),
        ("y ~ s(x, bs=\"cr\", k=10)", model("y", &[], vec![cr("x").with_k(10)], true)),
        ("y ~ s(x, k=10, bs=\"cr\")", model("y", &[], vec![cr("x").with_k(10)], true)),
        ("y ~ s(x, bs=\"tp\")", model("y", &[], vec![s(&["x"])], true)),
        ("y ~ s(x, z)", model("y", &[], vec![s(&["x", "z"])], true)),
        ("y ~ s(lat,lon, k = 50)", model("y", &[], vec![s(&["lat", "lon"]).with_k(50)], true)),
        ("y ~ x + s(z)", model("y", &["x"], vec![s(&["z"])], true)),
        ("y ~ s(z) + x", model("y", &["x"], vec![s(&["z"])], true)),
        ("y ~ a + b + c", model("y", &["a", "b", "c"], vec![], true)),
        ("y ~ 0 + x", model("y", &["x"], vec![], false)),
        ("y ~ x - 1", model("y", &["x"], vec![], false)),
        ("y ~ 1", model("y", &[], vec![], true)),
        ("y ~ s(x, m=3, k=12)", model("y", &[], vec![with_m(s(&["x"]).with_k(12), 3)], true)),
        (
            "count ~ s(depth, bs=\"cr\", k=6) + s(temp, bs=\"cr\", k=6)",
            model("count", &[], vec![cr("depth").with_k(6), cr("temp").with_k(6)], true),
        ),
        ("y ~ s(x, z, bs=\"ds\")", model("y", &[], vec![other(&["x", "z"], "ds")], true)),
        ("resp_1 ~ s(var.a)", model("resp_1", &[], vec![s(&["var.a"])], true)),
        (
            "  y  ~  s( x ,k= 7 )  +  w  ",
            model("y", &["w"], vec![s(&["x"]).with_k(7)], true),
        ),
        ("y ~ s(x) + s(x, z)", model("y", &[], vec![s(&["x"]), s(&["x", "z"])], true)),
        (
            "y ~ 0 + s(x, bs=\"cr\") + t",
            model("y", &["t"], vec![cr("x")], false),
        ),
        (
            "y ~ s(x, k=5) + s(z, k=5) + s(u, v, k=20)",
            model(
                "y",
                &[],
                vec![s(&["x"]).with_k(5), s(&["z"]).with_k(5), s(&["u", "v"]).with_k(20)],
                true,
            ),
        ),
    ]
}

fn name() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_.]{0,6}".prop_filter("not a reserved word", |n| n != "s" && n != "te")
}

fn smooth(vars: Vec<String>) -> impl Strategy<Value = SmoothSpec> {
    let dim = vars.len();
    let basis = if dim == 1 {
        prop_oneof![
            Just(BasisCode::Tp),
            Just(BasisCode::Cr),
            Just(BasisCode::Unsupported("ds".into()))
        ]
        .boxed()
    } else {
        prop_oneof![Just(BasisCode::Tp), Just(BasisCode::Unsupported("sos".into()))].boxed()
    };
    (
        basis,
        proptest::option::of(6usize..60),
        prop_oneof![Just(2i32), Just(3i32), Just(-1i32)],
    )
        .prop_map(move |(basis, k, m)| {
            let m = if basis == BasisCode::Cr || (basis == BasisCode::Tp && m < 1) {
                2
            } else {
                m
            };
            // a thin plate basis needs more functions than its null space
            let null = match (dim, m) {
                (1, m) => m as usize,
                (_, m) => (m * (m + 1) / 2) as usize,
            };
            let k = k.map(|k| if basis == BasisCode::Tp { k.max(null + 1) } else { k });
            SmoothSpec {
                variables: vars.clone(),
                basis,
                k,
                m,
            }
        })
}

// Random well-formed formulas over up to nine variable names.
prop_compose! {
    pub fn formula()(
        names in proptest::collection::hash_set(name(), 2..10),
        intercept in any::<bool>(),
        n_par in 0usize..3,
        shapes in proptest::collection::vec(1usize..=2, 0..4),
    )(
        smooths in {
            let names: Vec<String> = names.iter().cloned().collect();
            let mut pool = names[1..].iter().skip(n_par.min(names.len() - 1)).cloned().cycle();
            let mut specs = Vec::new();
            for d in &shapes {
                let vars: Vec<String> = (0..*d).map(|_| pool.next()).collect::<Option<Vec<_>>>().unwrap_or_default();
                let mut v = vars;
                v.dedup();
                if !v.is_empty() {
                    specs.push(smooth(v));
                }
            }
            specs
        },
        names in Just(names),
        intercept in Just(intercept),
        n_par in Just(n_par),
    ) -> ModelFormula {
        let names: Vec<String> = names.into_iter().collect();
        let parametric: Vec<String> = names[1..].iter().take(n_par).cloned().collect();
        let mut uniq: Vec<SmoothSpec> = Vec::new();
        for sm in smooths {
            if !uniq.iter().any(|u| u.label() == sm.label()) {
                uniq.push(sm);
            }
        }
        // a formula needs at least one term
        let intercept = intercept || (parametric.is_empty() && uniq.is_empty());
        ModelFormula { response: names[0].clone(), parametric, smooths: uniq, intercept }
    }
}

/// Reflows whitespace in one of three ways so the parser sees varied layouts.
pub fn respace(text: &str, pattern: u8) -> String {
    match pattern % 3 {
        0 => text.to_string(),
        1 => text.replace(' ', ""),
        _ => text.replace(", ", " ,  ").replace('=', " = ").replace('(', "( "),
    }
}
