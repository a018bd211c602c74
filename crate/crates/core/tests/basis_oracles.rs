use gamforge::basis::{apply_constraint, basis_tidy, cr_basis, penalty_tidy, place_knots, tprs_basis};
use gamforge::{BasisCode, Dataset, SmoothSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[path = "common/oracles.rs"]
mod oracles;
use oracles::{cr_penalty_by_quadrature, natural_second_derivs, random_x, spline_value};

#[test]
fn cr_penalty_matches_quadrature() {
    for (k, seed) in [(4, 1), (10, 2), (20, 3)] {
        let x = random_x(300, seed);
        let knots = place_knots(&x, k).unwrap();
        let b = cr_basis(&x, &knots).unwrap();
        let worst = (cr_penalty_by_quadrature(&knots) - &b.penalty).amax();
        assert!(worst < 1e-8, "k={k}: max abs diff {worst:e}");
    }
}

#[test]
fn cr_basis_is_the_natural_cardinal_spline() {
    let x = random_x(200, 9);
    let knots = place_knots(&x, 7).unwrap();
    let b = cr_basis(&x, &knots).unwrap();
    let lo = knots[0];
    let hi = knots[knots.len() - 1];
    let grid: Vec<f64> = (0..=50).map(|i| lo + (hi - lo) * i as f64 / 50.0).collect();
    let (design, _) = b.evaluate(&[&grid]);
    for i in 0..knots.len() {
        let mut e = vec![0.0; knots.len()];
        e[i] = 1.0;
        let m = natural_second_derivs(&knots, &e);
        for (r, &g) in grid.iter().enumerate() {
            let v = spline_value(&knots, &e, &m, g);
            assert!((design[(r, i)] - v).abs() < 1e-10, "bf {i} at {g}");
        }
    }
}

fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    x.clone().svd(true, true).solve(y, 1e-12).unwrap()
}

#[test]
fn tprs_null_space_is_unpenalized() {
    let x = random_x(100, 4);
    let b = tprs_basis(&[&x], 10, 2).unwrap();
    let k = b.k();
    assert_eq!(b.null_dim, 2);
    let linear = k - 1;
    assert!(b.penalty.row(linear).iter().all(|v| v.abs() <= 1e-12));
    assert!(b.penalty.column(linear).iter().all(|v| v.abs() <= 1e-12));
    let design = b.design.clone();
    for target in [DVector::from_element(x.len(), 1.0), DVector::from_column_slice(&x)] {
        let beta = least_squares(&design, &target);
        assert!((&design * &beta - &target).amax() < 1e-8);
        let quad = beta.dot(&(&b.penalty * &beta));
        assert!(quad.abs() <= 1e-10, "penalty {quad:e}");
    }
}

fn tps_kernel_1d(r: f64) -> f64 {
    r.powi(3)
}

fn tps_kernel_2d(r: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else {
        r * r * r.ln()
    }
}

/// Exact thin plate interpolant through `(pts, y)` from the dense
/// `[E T; Tᵀ 0]` system.
fn full_tps(pts: &[Vec<f64>], y: &[f64], kernel: fn(f64) -> f64) -> impl Fn(&[f64]) -> f64 {
    let n = pts.len();
    let d = pts[0].len();
    let m = d + 1;
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    let mut a = DMatrix::zeros(n + m, n + m);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = kernel(dist(&pts[i], &pts[j]));
        }
        a[(i, n)] = 1.0;
        a[(n, i)] = 1.0;
        for c in 0..d {
            a[(i, n + 1 + c)] = pts[i][c];
            a[(n + 1 + c, i)] = pts[i][c];
        }
    }
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from_slice(y);
    let sol = a.lu().solve(&rhs).unwrap();
    let pts = pts.to_vec();
    move |p: &[f64]| {
        let mut v = sol[n];
        for c in 0..d {
            v += sol[n + 1 + c] * p[c];
        }
        for (j, q) in pts.iter().enumerate() {
            v += sol[j] * kernel(dist(p, q));
        }
        v
    }
}

#[test]
fn untruncated_tprs_reproduces_the_full_thin_plate_spline() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // 1-D
    let x: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..1.0)).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|v| (6.0 * v).sin() + rng.random_range(-0.1..0.1))
        .collect();
    let b = tprs_basis(&[&x], 10, 2).unwrap();
    let beta = b.design.clone().lu().solve(&DVector::from_column_slice(&y)).unwrap();
    let oracle = full_tps(&x.iter().map(|v| vec![*v]).collect::<Vec<_>>(), &y, tps_kernel_1d);
    let grid: Vec<f64> = (0..=200).map(|i| -0.1 + 1.2 * i as f64 / 200.0).collect();
    let (g, _) = b.evaluate(&[&grid]);
    let fit = g * &beta;
    for (i, &t) in grid.iter().enumerate() {
        assert!((fit[i] - oracle(&[t])).abs() < 1e-6, "1-D at {t}");
    }

    // 2-D
    let u: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..1.0)).collect();
    let v: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..1.0)).collect();
    let z: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a * b + (3.0 * a).cos()).collect();
    let b = tprs_basis(&[&u, &v], 10, 2).unwrap();
    let beta = b.design.clone().lu().solve(&DVector::from_column_slice(&z)).unwrap();
    let pts: Vec<Vec<f64>> = u.iter().zip(&v).map(|(a, b)| vec![*a, *b]).collect();
    let oracle = full_tps(&pts, &z, tps_kernel_2d);
    let gu: Vec<f64> = (0..100).map(|i| (i % 10) as f64 / 9.0).collect();
    let gv: Vec<f64> = (0..100).map(|i| (i / 10) as f64 / 9.0).collect();
    let (g, _) = b.evaluate(&[&gu, &gv]);
    let fit = g * &beta;
    for i in 0..100 {
        assert!(
            (fit[i] - oracle(&[gu[i], gv[i]])).abs() < 1e-6,
            "2-D at ({}, {})",
            gu[i],
            gv[i]
        );
    }
}

#[test]
fn constraint_centres_the_design() {
    for code in [BasisCode::Cr, BasisCode::Tp] {
        let x = random_x(150, 5);
        let b = match code {
            BasisCode::Cr => cr_basis(&x, &place_knots(&x, 8).unwrap()).unwrap(),
            _ => tprs_basis(&[&x], 8, 2).unwrap(),
        };
        let c = apply_constraint(&b, &[&x]).unwrap();
        assert_eq!(c.k(), b.k() - 1);
        for col in c.design.column_iter() {
            assert!(col.sum().abs() < 1e-10);
        }
        let asym = (&c.penalty - c.penalty.transpose()).amax();
        assert!(asym <= 1e-12);
        let min_eig = c.penalty.clone().symmetric_eigen().eigenvalues.min();
        assert!(min_eig >= -1e-10);
    }
}

#[test]
fn tidy_basis_and_penalty_exports() {
    let x = random_x(120, 6);
    let data = Dataset::from_columns([("x", x.clone())]).unwrap();
    let t = basis_tidy(&SmoothSpec::new(&["x"], BasisCode::Cr).with_k(10), &data, 100).unwrap();
    assert_eq!(t.n_rows(), 1000);
    let bf = t.ints(".bf").unwrap();
    assert!(bf.iter().all(|b| (1..=10).contains(b)));

    // the last thin plate function is the linear one: affine in x
    let t = basis_tidy(&SmoothSpec::new(&["x"], BasisCode::Tp).with_k(10), &data, 100).unwrap();
    let bf = t.ints(".bf").unwrap();
    let xs = t.num("x").unwrap();
    let vals = t.num(".value").unwrap();
    let (gx, gv): (Vec<f64>, Vec<f64>) = (0..bf.len()).filter(|&i| bf[i] == 10).map(|i| (xs[i], vals[i])).unzip();
    let design = DMatrix::from_fn(gx.len(), 2, |i, j| if j == 0 { 1.0 } else { gx[i] });
    let coef = least_squares(&design, &DVector::from_vec(gv.clone()));
    let resid = (design * coef - DVector::from_vec(gv.clone())).amax();
    let scale = gv.iter().fold(0f64, |m, v| m.max(v.abs()));
    assert!(resid < 1e-10 * scale.max(1.0), "line-fit residual {resid:e}");

    let b = apply_constraint(&tprs_basis(&[&x], 10, 2).unwrap(), &[&x]).unwrap();
    let p = penalty_tidy(&b, "s(x)");
    assert_eq!(p.n_rows(), 81);
    let rows = p.strs(".row").unwrap();
    let cols = p.strs(".col").unwrap();
    let v = p.num(".value").unwrap();
    for i in 0..81 {
        let (r, c) = (i / 9, i % 9);
        assert_eq!(rows[i], format!("F{}", r + 1));
        assert_eq!(cols[i], format!("F{}", c + 1));
        assert_eq!(v[i], b.penalty[(r, c)]);
        if rows[i] == "F9" || cols[i] == "F9" {
            assert_eq!(v[i], 0.0);
        }
    }
}
