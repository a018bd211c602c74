use gamforge::posterior::{
    coef_draws, fitted_samples, median_qi, posterior_samples, predicted_samples, SampleMethod, SampleOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[path = "common/fixtures.rs"]
mod fixtures;
use fixtures::{batch_se, column_means, sample_cov, two_covariate_model};

#[test]
fn gaussian_draws_match_the_posterior_moments() {
    let m = two_covariate_model();
    let n = 10_000;
    let d = coef_draws(&m, &SampleOptions::new(n, 342)).unwrap().draws;
    assert_eq!(d.shape(), (n, m.p()));
    for (j, mean) in column_means(&d).into_iter().enumerate() {
        let se = (m.vb[(j, j)] / n as f64).sqrt();
        assert!(
            (mean - m.beta[j]).abs() <= 3.0 * se,
            "coef {j}: {mean} vs {} (se {se:e})",
            m.beta[j]
        );
    }
    let rel = (sample_cov(&d) - &m.vb).norm() / m.vb.norm();
    assert!(rel <= 0.10, "relative Frobenius error {rel}");
}

#[test]
fn metropolis_agrees_with_the_gaussian_approximation() {
    let m = two_covariate_model();
    let n = 10_000;
    let g = coef_draws(&m, &SampleOptions::new(n, 5)).unwrap().draws;
    let mut opts = SampleOptions::new(n, 5);
    opts.method = SampleMethod::Mh;
    let mh = coef_draws(&m, &opts).unwrap();
    let acc = mh.acceptance.unwrap();
    assert!(acc > 0.05 && acc < 0.8, "acceptance {acc}");
    let g_means = column_means(&g);
    for j in 0..m.p() {
        let chain: Vec<f64> = mh.draws.column(j).iter().copied().collect();
        let mh_mean = chain.iter().sum::<f64>() / n as f64;
        let se = (batch_se(&chain, 40).powi(2) + m.vb[(j, j)] / n as f64).sqrt();
        assert!(
            (mh_mean - g_means[j]).abs() <= 3.0 * se,
            "coef {j}: mh {mh_mean} vs gaussian {} (se {se:e})",
            g_means[j]
        );
    }
}

#[test]
fn median_qi_of_standard_normal_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let v: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
    let t = median_qi(&v, 0.95, "value").unwrap();
    assert_eq!(
        t.names(),
        ["value", ".lower", ".upper", ".width", ".point", ".interval"]
    );
    assert!(t.num("value").unwrap()[0].abs() < 0.02);
    assert!((t.num(".lower").unwrap()[0] + 1.959964).abs() < 0.03);
    assert!((t.num(".upper").unwrap()[0] - 1.959964).abs() < 0.03);
    assert_eq!(t.num(".width").unwrap()[0], 0.95);
    assert_eq!(t.strs(".point").unwrap()[0], "median");
    assert_eq!(t.strs(".interval").unwrap()[0], "qi");
}

fn per_row_variance(values: &[f64], n_rows: usize, n_draws: usize) -> Vec<f64> {
    (0..n_rows)
        .map(|r| {
            let col: Vec<f64> = (0..n_draws).map(|d| values[d * n_rows + r]).collect();
            let mean = col.iter().sum::<f64>() / n_draws as f64;
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_draws - 1) as f64
        })
        .collect()
}

#[test]
fn posterior_spread_exceeds_sampling_noise() {
    let m = two_covariate_model();
    let data = m.training.clone();
    let nr = data.n_rows();
    let n = 2000;
    let post = posterior_samples(&m, &data, &SampleOptions::new(n, 3)).unwrap();
    let pred = predicted_samples(&m, &data, n, 3, None).unwrap();
    let vp = per_row_variance(post.values(), nr, n);
    let vq = per_row_variance(pred.values(), nr, n);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&vp) > mean(&vq), "{} vs {}", mean(&vp), mean(&vq));
    // predicted noise alone has variance φ̂
    assert!((mean(&vq) / m.phi - 1.0).abs() < 0.05);
}

#[test]
fn term_draws_add_up_on_the_link_scale() {
    let m = two_covariate_model();
    let data = m.training.clone();
    let opts = SampleOptions::new(200, 8);
    let labels = m.term_labels();
    let all = fitted_samples(&m, &data, Some(&labels), &opts).unwrap();
    let mut sum = vec![0.0; all.values().len()];
    for l in &labels {
        let part = fitted_samples(&m, &data, Some(std::slice::from_ref(l)), &opts).unwrap();
        for (s, v) in sum.iter_mut().zip(part.values()) {
            *s += v;
        }
    }
    for (a, b) in all.values().iter().zip(&sum) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn long_format_and_reproducibility() {
    let m = two_covariate_model();
    let data = m.training.clone();
    let nr = data.n_rows();
    let mut opts = SampleOptions::new(300, 342);
    let a = fitted_samples(&m, &data, None, &opts).unwrap();
    assert_eq!(a.table.n_rows(), nr * 300);
    let rows = a.table.ints(".row").unwrap();
    let draws = a.table.ints(".draw").unwrap();
    for r in 1..=nr as i64 {
        let mut ds: Vec<i64> = rows
            .iter()
            .zip(draws)
            .filter(|(x, _)| **x == r)
            .map(|(_, d)| *d)
            .collect();
        ds.sort();
        assert_eq!(ds, (1..=300).collect::<Vec<_>>());
    }
    for workers in [1, 3] {
        opts.workers = Some(workers);
        let b = fitted_samples(&m, &data, None, &opts).unwrap();
        assert_eq!(a.values(), b.values());
    }
    opts.unconditional = true;
    let u1 = fitted_samples(&m, &data, None, &opts).unwrap();
    opts.workers = Some(2);
    let u2 = fitted_samples(&m, &data, None, &opts).unwrap();
    assert_eq!(u1.values(), u2.values());
    assert!(u1.values().iter().all(|v| v.is_finite()));
    assert_ne!(u1.values(), a.values());
}

#[test]
fn draw_means_average_each_draw() {
    let m = two_covariate_model();
    let data = m.training.clone();
    let nr = data.n_rows();
    let s = fitted_samples(&m, &data, None, &SampleOptions::new(10, 1)).unwrap();
    let means = s.draw_means();
    assert_eq!(means.len(), 10);
    for (d, mean) in means.iter().enumerate() {
        let direct = s.values()[d * nr..(d + 1) * nr].iter().sum::<f64>() / nr as f64;
        assert!((mean - direct).abs() < 1e-12);
    }
}
