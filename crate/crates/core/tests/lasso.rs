use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use platelet_core::data::FeatureMatrix;
use platelet_core::lasso::{
    bootstrap, cv_select_lambda, fit_lasso, fit_lasso_matrix, fit_path, kkt_audit, lambda_max, lambda_path,
    predict_lasso, soft_threshold, write_weight_report, FoldScheme,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn planted(x: &DMatrix<f64>, beta: &[f64], intercept: f64, sd: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let f = x * DVector::from_column_slice(beta);
    f.iter()
        .map(|v| {
            let e: f64 = StandardNormal.sample(rng);
            intercept + v + sd * e
        })
        .collect()
}

/// Least squares with an intercept column, solved from the normal equations.
fn normal_equations(x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let xa = DMatrix::from_fn(x.nrows(), x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let yv = DVector::from_column_slice(y);
    let sol = (xa.transpose() * &xa).lu().solve(&(xa.transpose() * yv)).unwrap();
    sol.iter().copied().collect()
}

#[test]
fn zero_lambda_matches_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = gaussian(300, 6, &mut rng);
    let y = planted(&x, &[1.0, -2.0, 0.5, 0.0, 3.0, -0.7], 4.0, 1.0, &mut rng);
    let m = fit_lasso_matrix(&x, &y, 0.0, None).unwrap();
    let ls = normal_equations(&x, &y);
    assert!((m.intercept - ls[0]).abs() < 1e-5);
    for j in 0..6 {
        assert!((m.weights[j] - ls[j + 1]).abs() < 1e-5, "{j}: {} vs {}", m.weights[j], ls[j + 1]);
    }
    assert!(m.converged);
}

#[test]
fn lambda_max_zeroes_every_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = gaussian(200, 10, &mut rng);
    let y = planted(&x, &[1.0; 10], 0.0, 1.0, &mut rng);
    let top = lambda_max(&x, &y);
    for lambda in [top, top * 1.5] {
        let m = fit_lasso_matrix(&x, &y, lambda, None).unwrap();
        assert!(m.weights.iter().all(|w| *w == 0.0));
        assert!(m.selected.is_empty());
    }
    let below = fit_lasso_matrix(&x, &y, top * 0.99, None).unwrap();
    assert!(below.support_size() >= 1);
}

/// Columns with zero mean and `X'X / N = I`, so the lasso solution is the
/// soft-thresholded OLS coefficient. Dyadic data and penalties keep every
/// intermediate sum exact, so equality is bitwise.
#[test]
fn orthonormal_design_is_soft_threshold() {
    let n = 8;
    let h = [
        [1., 1., 1., 1., 1., 1., 1., 1.],
        [1., -1., 1., -1., 1., -1., 1., -1.],
        [1., 1., -1., -1., 1., 1., -1., -1.],
        [1., -1., -1., 1., 1., -1., -1., 1.],
    ];
    let x = DMatrix::from_fn(n, 3, |i, j| h[j + 1][i]);
    let y = [3.0, -1.0, 2.5, 0.0, 1.0, 4.0, -2.0, 0.5];
    let ybar = y.iter().sum::<f64>() / n as f64;
    let ols = |j: usize| (0..n).map(|i| x[(i, j)] * y[i]).sum::<f64>() / n as f64;
    for lambda in [0.0, 0.125, 0.375, 1.0, 5.0] {
        let m = fit_lasso_matrix(&x, &y, lambda, None).unwrap();
        for j in 0..3 {
            assert_eq!(m.weights[j], soft_threshold(ols(j), lambda), "lambda {lambda} column {j}");
        }
        assert_eq!(m.intercept, ybar);
    }
    for lambda in [0.1, 0.3, 0.7] {
        let m = fit_lasso_matrix(&x, &y, lambda, None).unwrap();
        for j in 0..3 {
            assert!((m.weights[j] - soft_threshold(ols(j), lambda)).abs() < 1e-14);
        }
    }
}

#[test]
fn kkt_and_monotone_objective_along_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = gaussian(400, 29, &mut rng);
    // Correlated pairs, as in the real feature set.
    let x = DMatrix::from_fn(400, 29, |i, j| if j % 4 == 1 { 0.8 * base[(i, j - 1)] + 0.6 * base[(i, j)] } else { base[(i, j)] });
    let mut beta = vec![0.0; 29];
    for (j, b) in [(0, 2.0), (5, -1.5), (9, 1.0), (14, 0.8), (20, -2.5)] {
        beta[j] = b;
    }
    let y = planted(&x, &beta, 17.9, 2.0, &mut rng);
    let grid = lambda_path(&x, &y, 30).unwrap();
    let path = fit_path(&x, &y, &grid).unwrap();
    assert_eq!(path[0].support_size(), 0);
    let max_support = path.iter().map(|m| m.support_size()).max().unwrap();
    assert_eq!(path.last().unwrap().support_size(), max_support);
    for m in &path {
        assert!(m.converged);
        let kkt = kkt_audit(&x, &y, m, 1e-5);
        assert!(kkt.passed, "lambda {} violation {}", m.lambda, kkt.max_violation);
    }
    for lambda in [grid[5], grid[15], 0.0] {
        let m = fit_lasso_matrix(&x, &y, lambda, None).unwrap();
        assert!(kkt_audit(&x, &y, &m, 1e-5).passed);
        for w in m.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "objective rose {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn cv_is_deterministic_and_in_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = gaussian(250, 8, &mut rng);
    let y = planted(&x, &[1.0, 0.0, 0.0, -1.0, 0.0, 0.5, 0.0, 0.0], 2.0, 1.0, &mut rng);
    let grid = lambda_path(&x, &y, 25).unwrap();
    for scheme in [FoldScheme::Contiguous, FoldScheme::Shuffled] {
        let a = cv_select_lambda(&x, &y, 5, &grid, scheme, 7).unwrap();
        let b = cv_select_lambda(&x, &y, 5, &grid, scheme, 7).unwrap();
        assert_eq!(a, b);
        assert!(grid.contains(&a.lambda_star));
        assert_eq!(a.mean_errors.len(), grid.len());
    }
    assert!(cv_select_lambda(&x.rows(0, 9).into_owned(), &y[..9], 5, &grid, FoldScheme::Contiguous, 0).is_err());
}

#[test]
fn cv_ties_go_to_larger_lambda() {
    // A target independent of a single constant-free column: every lambda at or
    // above lambda_max gives the same all-zero fit and the same CV error.
    let x = DMatrix::from_fn(20, 1, |i, _| (i % 2) as f64);
    let y: Vec<f64> = (0..20).map(|i| (i / 2) as f64).collect();
    let top = lambda_max(&x, &y) * 10.0;
    let grid = [top * 4.0, top * 2.0, top];
    let cv = cv_select_lambda(&x, &y, 5, &grid, FoldScheme::Contiguous, 0).unwrap();
    assert_eq!(cv.lambda_star, top * 4.0);
}

#[test]
fn planted_support_recovered_at_cv_lambda() {
    let truth = [0usize, 6, 12, 19, 27];
    let hits = (0..100u64)
        .filter(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
            let x = gaussian(300, 29, &mut rng);
            let mut beta = vec![0.0; 29];
            for (k, &j) in truth.iter().enumerate() {
                beta[j] = if k % 2 == 0 { 2.0 } else { -1.5 };
            }
            let y = planted(&x, &beta, 10.0, 1.0, &mut rng);
            let grid = lambda_path(&x, &y, 40).unwrap();
            let cv = cv_select_lambda(&x, &y, 5, &grid, FoldScheme::Contiguous, seed).unwrap();
            let m = fit_lasso_matrix(&x, &y, cv.lambda_star, None).unwrap();
            truth.iter().all(|&j| m.weights[j] != 0.0)
        })
        .count();
    assert!(hits >= 90, "{hits}/100");
}

#[test]
fn bootstrap_single_replicate_is_degenerate() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = gaussian(60, 3, &mut rng);
    let y = planted(&x, &[1.0, 2.0, 3.0], 0.0, 1.0, &mut rng);
    let test = gaussian(4, 3, &mut rng);
    let b = bootstrap(&x, &y, 0.01, 1, 0.95, 9, Some(&test)).unwrap();
    assert_eq!(b.weight_low, b.weight_high);
    assert_eq!(b.prediction_low, b.prediction_high);
    assert_eq!(b.prediction_low, b.prediction_point);
    assert!(bootstrap(&x, &y, 0.01, 0, 0.95, 9, None).is_err());
}

#[test]
fn bootstrap_noise_free_weights_are_tight() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = gaussian(200, 5, &mut rng);
    let y = planted(&x, &[1.0, -1.0, 0.5, 2.0, 0.0], 3.0, 0.0, &mut rng);
    let b = bootstrap(&x, &y, 0.0, 200, 0.95, 1, None).unwrap();
    for j in 0..5 {
        assert!(b.weight_high[j] - b.weight_low[j] < 1e-3);
    }
}

#[test]
fn bootstrap_bands_widen_with_noise_and_order_correctly() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = gaussian(200, 4, &mut rng);
    let test = gaussian(10, 4, &mut rng);
    let clean: Vec<f64> = planted(&x, &[1.0, -1.0, 0.5, 2.0], 3.0, 0.0, &mut rng);
    let shocks: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
    let width = |scale: f64| {
        let y: Vec<f64> = clean.iter().zip(&shocks).map(|(c, e)| c + scale * e).collect();
        let b = bootstrap(&x, &y, 0.01, 300, 0.95, 2, Some(&test)).unwrap();
        for i in 0..10 {
            assert!(b.prediction_low[i] <= b.prediction_point[i]);
            assert!(b.prediction_point[i] <= b.prediction_high[i]);
        }
        (0..4).map(|j| b.weight_high[j] - b.weight_low[j]).sum::<f64>()
    };
    assert!(width(3.0) > width(1.0));
}

#[test]
fn bootstrap_independent_of_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = gaussian(100, 4, &mut rng);
    let y = planted(&x, &[1.0, 0.0, -1.0, 0.3], 1.0, 1.0, &mut rng);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| bootstrap(&x, &y, 0.05, 50, 0.9, 4, Some(&x)).unwrap())
    };
    assert_eq!(run(1), run(4));
}

fn feature_matrix(names: &[&str], x: DMatrix<f64>, y: Vec<f64>) -> FeatureMatrix {
    let start = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap();
    let fm = FeatureMatrix {
        dates: (0..x.nrows()).map(|i| start + chrono::Duration::days(i as i64)).collect(),
        columns: names.iter().map(|s| s.to_string()).collect(),
        values: x,
        target: y,
        stats: None,
    };
    fm.standardize(None).unwrap()
}

#[test]
fn feature_matrix_path_checks_names_and_ignores_null_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = gaussian(120, 2, &mut rng);
    let y = planted(&x, &[1.0, -2.0], 3.0, 0.5, &mut rng);
    let fm = feature_matrix(&["a", "b"], x.clone(), y.clone());
    let m = fit_lasso(&fm, 0.05).unwrap();
    let p = predict_lasso(&m, &fm).unwrap();
    let renamed = FeatureMatrix { columns: vec!["a".into(), "c".into()], ..fm.clone() };
    assert!(predict_lasso(&m, &renamed).is_err());
    let mut raw = fm.clone();
    raw.stats = None;
    assert!(fit_lasso(&raw, 0.05).is_err());

    // A third column carrying weight 0 leaves every prediction unchanged.
    let mut wider = m.clone();
    wider.feature_names.push("z".into());
    wider.weights.push(0.0);
    let extra = DMatrix::from_fn(120, 3, |i, j| if j < 2 { fm.values[(i, j)] } else { (i as f64).sin() * 50.0 });
    let fm3 = FeatureMatrix { columns: wider.feature_names.clone(), values: extra, ..fm.clone() };
    assert_eq!(predict_lasso(&wider, &fm3).unwrap(), p);
}

#[test]
fn weight_report_layout() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = gaussian(80, 2, &mut rng);
    let y = planted(&x, &[1.0, -2.0], 3.0, 0.5, &mut rng);
    let m = fit_lasso_matrix(&x, &y, 0.01, None).unwrap();
    let b = bootstrap(&x, &y, 0.01, 20, 0.95, 3, None).unwrap();
    let mut out = Vec::new();
    write_weight_report(&mut out, &m, &b).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "feature,weight,ci_low,ci_high");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("x0,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn kkt_holds_on_random_problems(seed in 0u64..10_000, frac in 0.001f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(60, 7, &mut rng);
        let y = planted(&x, &[1.0, 0.0, -0.5, 2.0, 0.0, 0.0, 0.3], 1.0, 1.0, &mut rng);
        let lambda = lambda_max(&x, &y) * frac;
        let m = fit_lasso_matrix(&x, &y, lambda, None).unwrap();
        prop_assert!(m.converged);
        prop_assert!(kkt_audit(&x, &y, &m, 1e-5).passed);
        let nonzero = m.weights.iter().filter(|w| w.abs() > 1e-12).count();
        prop_assert_eq!(nonzero, m.selected.len());
    }
}
