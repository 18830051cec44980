use nalgebra::DMatrix;
use platelet_core::lstm::{
    adam_step, batch_gradient, clip_gradients, expand_grid, grid_search_matrix, lstm_backward, lstm_forward,
    predict_lstm_matrix, read_checkpoint, train_lstm_matrix, write_checkpoint, write_loss_history, AdamState,
    LstmConfig, LstmParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn random_params(d: usize, h: usize, layers: usize, seed: u64) -> LstmParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = LstmParams::init(d, h, layers, &mut rng);
    // Spread biases so every gate operates away from its default point.
    for l in &mut p.layers {
        l.b.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    }
    p
}

fn random_window(d: usize, steps: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..d * steps).map(|_| StandardNormal.sample(rng)).collect()
}

fn names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("f{j}")).collect()
}

#[test]
fn dead_network_predicts_readout_bias() {
    let mut p = LstmParams::zeros(29, 8, 1);
    p.readout_b = 4.25;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (y, _) = lstm_forward(&p, &random_window(29, 14, &mut rng)).unwrap();
    assert_eq!(y, 4.25);
}

#[test]
fn saturated_gates_freeze_the_cell() {
    let h = 3;
    let mut p = LstmParams::zeros(4, h, 1);
    for k in 0..h {
        p.layers[0].b[k] = -20.0;
        p.layers[0].b[h + k] = 20.0;
        p.layers[0].b[2 * h + k] = 0.9;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (_, cache) = lstm_forward(&p, &random_window(4, 10, &mut rng)).unwrap();
    let first = cache.cell(0, 1).to_vec();
    for t in 2..=10 {
        for (a, b) in cache.cell(0, t).iter().zip(&first) {
            assert!((a - b).abs() < 1e-7);
        }
    }
}

/// A single step of a 2-unit cell worked out from the gate equations.
#[test]
fn single_step_matches_hand_trace() {
    let (d, h) = (3, 2);
    let mut p = LstmParams::zeros(d, h, 1);
    for (k, v) in p.layers[0].wx.iter_mut().enumerate() {
        *v = 0.05 * (k as f64 - 11.0);
    }
    for (k, v) in p.layers[0].b.iter_mut().enumerate() {
        *v = 0.1 * k as f64 - 0.3;
    }
    p.readout_w = vec![0.7, -1.3];
    p.readout_b = 0.2;
    let x = [0.5, -1.0, 2.0];
    let z = |r: usize| p.layers[0].b[r] + (0..d).map(|j| p.layers[0].wx[r * d + j] * x[j]).sum::<f64>();
    let mut expected = p.readout_b;
    for k in 0..h {
        let i = sig(z(k));
        let o = sig(z(3 * h + k));
        let g = z(2 * h + k).tanh();
        let c = i * g;
        expected += p.readout_w[k] * o * c.tanh();
    }
    let (y, cache) = lstm_forward(&p, &x).unwrap();
    assert!((y - expected).abs() < 1e-14, "{y} vs {expected}");
    assert_eq!(cache.steps, 1);
}

/// Central differences with `h = 1e-5`; relative error uses `max(|a|, |n|, 1e-6)`.
fn max_relative_error(p: &LstmParams, windows: &[Vec<f64>], targets: &[f64]) -> f64 {
    let refs: Vec<&[f64]> = windows.iter().map(|w| w.as_slice()).collect();
    let (_, grads) = batch_gradient(p, &refs, targets).unwrap();
    let loss = |q: &LstmParams| batch_gradient(q, &refs, targets).unwrap().0;
    let mut worst = 0.0f64;
    let n_blocks = p.blocks().len();
    for b in 0..n_blocks {
        for k in 0..p.blocks()[b].len() {
            let mut plus = p.clone();
            plus.blocks_mut()[b][k] += 1e-5;
            let mut minus = p.clone();
            minus.blocks_mut()[b][k] -= 1e-5;
            let numeric = (loss(&plus) - loss(&minus)) / 2e-5;
            let analytic = grads.blocks()[b][k];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let p = random_params(6, 4, 1, seed);
        let windows: Vec<Vec<f64>> = (0..3).map(|_| random_window(6, 5, &mut rng)).collect();
        let targets: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
        let err = max_relative_error(&p, &windows, &targets);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn stacked_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = random_params(5, 3, 2, 7);
    let windows: Vec<Vec<f64>> = (0..2).map(|_| random_window(5, 4, &mut rng)).collect();
    let err = max_relative_error(&p, &windows, &[0.3, -1.2]);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn zero_loss_gradient_gives_zero_gradients() {
    let p = random_params(5, 4, 2, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (_, cache) = lstm_forward(&p, &random_window(5, 6, &mut rng)).unwrap();
    let g = lstm_backward(&p, &cache, 0.0).unwrap();
    assert!(g.blocks().iter().all(|b| b.iter().all(|v| *v == 0.0)));
    let other = random_params(5, 3, 2, 3);
    assert!(lstm_backward(&other, &cache, 1.0).is_err());
}

#[test]
fn readout_bias_gradient_is_mean_loss_gradient() {
    let p = random_params(4, 3, 1, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let windows: Vec<Vec<f64>> = (0..6).map(|_| random_window(4, 3, &mut rng)).collect();
    let refs: Vec<&[f64]> = windows.iter().map(|w| w.as_slice()).collect();
    let targets = [1.0, -0.5, 0.0, 2.0, 0.3, -1.0];
    let (_, g) = batch_gradient(&p, &refs, &targets).unwrap();
    let mean_dl: f64 = refs
        .iter()
        .zip(&targets)
        .map(|(w, y)| 2.0 * (lstm_forward(&p, w).unwrap().0 - y))
        .sum::<f64>()
        / 6.0;
    assert!((g.readout_b - mean_dl).abs() < 1e-12);
}

#[test]
fn readout_bias_shifts_predictions() {
    let p = random_params(4, 3, 2, 9);
    let mut q = p.clone();
    q.readout_b += 2.5;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let w = random_window(4, 7, &mut rng);
        let a = lstm_forward(&p, &w).unwrap().0;
        let b = lstm_forward(&q, &w).unwrap().0;
        assert!((b - a - 2.5).abs() < 1e-12);
    }
}

#[test]
fn adam_first_step_by_hand() {
    let mut p = LstmParams::zeros(1, 1, 1);
    let before = p.clone();
    let mut g = p.zeros_like();
    g.readout_b = 1.0;
    let mut state = AdamState::new(&p);
    adam_step(&mut p, &g, &mut state, 0.1);
    assert!((p.readout_b - (-0.1 / (1.0 + 1e-8))).abs() < 1e-15);
    assert_eq!(p.layers, before.layers);
    assert_eq!(p.readout_w, before.readout_w);
    assert_eq!(state.step, 1);

    let mut a = random_params(3, 2, 1, 1);
    let mut b = a.clone();
    let g = random_params(3, 2, 1, 2);
    let (mut sa, mut sb) = (AdamState::new(&a), AdamState::new(&b));
    for _ in 0..3 {
        adam_step(&mut a, &g, &mut sa, 0.01);
        adam_step(&mut b, &g, &mut sb, 0.01);
    }
    assert_eq!(a, b);
    assert_eq!(sa, sb);
}

#[test]
fn clipping_caps_every_block() {
    let mut g = random_params(5, 4, 1, 4);
    g.blocks_mut()[0].iter_mut().for_each(|v| *v *= 100.0);
    let top = clip_gradients(&mut g, 0.5);
    assert!(top <= 0.5 + 1e-12);
    for b in g.blocks() {
        assert!(b.iter().map(|v| v * v).sum::<f64>().sqrt() <= 0.5 + 1e-12);
    }
}

/// Demand that is a fixed linear function of the current row plus small noise.
fn planted_linear(n: usize, d: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
    let beta: Vec<f64> = (0..d).map(|j| if j % 2 == 0 { 1.0 } else { -0.5 }).collect();
    let y = (0..n)
        .map(|i| {
            let e: f64 = StandardNormal.sample(&mut rng);
            18.0 + (0..d).map(|j| beta[j] * x[(i, j)]).sum::<f64>() + 0.1 * e
        })
        .collect();
    (x, y)
}

fn small_config() -> LstmConfig {
    LstmConfig { window: 3, hidden: 8, epochs: 60, batch: 16, learning_rate: 1e-2, seed: 5, ..Default::default() }
}

#[test]
fn learns_planted_linear_relationship() {
    let (x, y) = planted_linear(300, 5, 1);
    let cfg = small_config();
    let m = train_lstm_matrix(&x, &y, &names(5), &cfg).unwrap();
    let rows: Vec<usize> = (2..300).collect();
    let preds = predict_lstm_matrix(&m, &x, &rows).unwrap();
    assert_eq!(preds.len(), rows.len());
    let ys: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let var = ys.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / ys.len() as f64;
    let mse = ys.iter().zip(&preds).map(|(a, p)| (a - p).powi(2)).sum::<f64>() / ys.len() as f64;
    assert!(mse < 0.1 * var, "mse {mse} var {var}");
    assert!(m.loss_history.last().unwrap() < &m.loss_history[0]);
}

#[test]
fn training_is_deterministic_across_runs_and_threads() {
    let (x, y) = planted_linear(120, 4, 2);
    let cfg = LstmConfig { epochs: 10, ..small_config() };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train_lstm_matrix(&x, &y, &names(4), &cfg).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.loss_history, b.loss_history);
    assert_eq!(a.params, b.params);
}

#[test]
fn clipped_training_respects_the_cap() {
    let (x, y) = planted_linear(120, 4, 3);
    let cfg = LstmConfig { epochs: 5, grad_clip: Some(0.05), ..small_config() };
    let m = train_lstm_matrix(&x, &y, &names(4), &cfg).unwrap();
    assert!(m.max_applied_norm <= 0.05 + 1e-12);
}

#[test]
fn divergence_is_reported() {
    let (x, y) = planted_linear(60, 3, 4);
    let cfg = LstmConfig { epochs: 3, learning_rate: 1e300, ..small_config() };
    let err = train_lstm_matrix(&x, &y, &names(3), &cfg).unwrap_err();
    assert!(err.to_string().contains("lower learning rate"), "{err}");
}

#[test]
fn too_little_history() {
    let (x, y) = planted_linear(3, 2, 5);
    assert!(train_lstm_matrix(&x, &y, &names(2), &small_config()).is_err());
    let (x, y) = planted_linear(50, 2, 5);
    let m = train_lstm_matrix(&x, &y, &names(2), &LstmConfig { epochs: 1, ..small_config() }).unwrap();
    assert!(predict_lstm_matrix(&m, &x, &[1]).is_err());
    assert_eq!(predict_lstm_matrix(&m, &x, &[2, 3, 49]).unwrap().len(), 3);
}

#[test]
fn dead_model_forecasts_constant() {
    let (x, y) = planted_linear(50, 2, 6);
    let mut m = train_lstm_matrix(&x, &y, &names(2), &LstmConfig { epochs: 1, ..small_config() }).unwrap();
    m.params = m.params.zeros_like();
    let p = predict_lstm_matrix(&m, &x, &(2..50).collect::<Vec<_>>()).unwrap();
    assert!(p.iter().all(|v| *v == m.target_mean));
}

#[test]
fn overfit_tiny_dataset_scores_better_on_train() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 160;
    let x = DMatrix::from_fn(n, 6, |_, _| StandardNormal.sample(&mut rng));
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let e: f64 = StandardNormal.sample(&mut rng);
            20.0 + 2.0 * x[(i, 0)] + 5.0 * e
        })
        .collect();
    let cfg = LstmConfig { window: 3, hidden: 24, epochs: 300, batch: 8, learning_rate: 1e-2, seed: 1, ..Default::default() };
    let m = train_lstm_matrix(&x.rows(0, 60).into_owned(), &y[..60], &names(6), &cfg).unwrap();
    let mape = |rows: Vec<usize>| {
        let p = predict_lstm_matrix(&m, &x, &rows).unwrap();
        rows.iter().zip(&p).map(|(&r, f)| ((y[r] - f) / y[r]).abs()).sum::<f64>() / rows.len() as f64
    };
    let train = mape((2..60).collect());
    let test = mape((60..n).collect());
    assert!(train < 0.5 * test, "train {train} test {test}");
}

#[test]
fn grid_returns_argmin_and_singleton() {
    let (x, y) = planted_linear(150, 3, 9);
    let base = LstmConfig { epochs: 8, ..small_config() };
    let single = grid_search_matrix(&x, &y, &names(3), std::slice::from_ref(&base)).unwrap();
    assert_eq!(single.best, base);
    let grid = expand_grid(&base, &[2, 4], &[4, 8], &[1e-2]);
    assert_eq!(grid.len(), 4);
    let r = grid_search_matrix(&x, &y, &names(3), &grid).unwrap();
    let best_score = r.scores.iter().find(|(c, _)| *c == r.best).unwrap().1;
    assert!(r.scores.iter().all(|(_, s)| best_score <= *s));
    assert!(grid_search_matrix(&x, &y, &names(3), &[]).is_err());
}

/// One feature carrying yesterday's demand; demand has a weekend pulse that
/// two days of history cannot place within the week.
fn weekly_series(n: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let pattern = [0.0, 0.0, 0.0, 0.0, 0.0, 6.0, 6.0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<f64> = (0..n + 1)
        .map(|t| {
            let e: f64 = StandardNormal.sample(&mut rng);
            pattern[t % 7] + 0.5 * e
        })
        .collect();
    let x = DMatrix::from_fn(n, 1, |i, _| y[i] / 3.0);
    (x, y[1..].to_vec())
}

#[test]
fn longer_window_finds_weekly_pattern() {
    let wins = (0..100u64)
        .filter(|&seed| {
            let (x, y) = weekly_series(280, seed);
            let base = LstmConfig { hidden: 6, epochs: 40, batch: 16, learning_rate: 2e-2, seed, ..Default::default() };
            let grid = expand_grid(&base, &[2, 7], &[6], &[2e-2]);
            let r = grid_search_matrix(&x, &y, &names(1), &grid).unwrap();
            r.scores[1].1 < r.scores[0].1
        })
        .count();
    assert!(wins >= 80, "{wins}/100");
}

#[test]
fn checkpoint_and_history_roundtrip() {
    let (x, y) = planted_linear(60, 2, 10);
    let m = train_lstm_matrix(&x, &y, &names(2), &LstmConfig { epochs: 4, ..small_config() }).unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&m, &mut buf).unwrap();
    let back = read_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(back, m);
    let mut csv = Vec::new();
    write_loss_history(&m, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("epoch,mse\n1,"));
}
