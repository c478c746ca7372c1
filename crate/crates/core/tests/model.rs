use emocont_core::data::{FeatureMatrix, GoldTrack, SegmentTimeline};
use emocont_core::metrics::ccc_loss;
use emocont_core::model::{
    backward, decode_checkpoint, encode_checkpoint, forward, init_params, loss_and_gradients, predict, train,
    ModelConfig, ModelParams, Sequence, TrainConfig,
};
use emocont_core::Error;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn small_config(input_dim: usize, reducer_dim: Option<usize>, layers: &[usize], seed: u64) -> ModelConfig {
    ModelConfig {
        input_dim,
        reducer_dim,
        layer_units: layers.to_vec(),
        output_tanh: false,
        seed,
    }
}

/// Row-major `rows × cols` tensor times a vector, one scalar at a time.
fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| {
            let mut s = 0.0;
            for c in 0..cols {
                s += w[r * cols + c] * x[c];
            }
            s
        })
        .collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Step-by-step recurrence for one direction, written from the LSTM
/// equations without sharing any code with the library.
fn oracle_direction(p: &ModelParams, prefix: &str, xs: &[Vec<f64>], units: usize, reverse: bool) -> Vec<Vec<f64>> {
    let in_dim = xs[0].len();
    let w_in = p.tensor(&format!("{prefix}.w_input")).unwrap();
    let w_rec = p.tensor(&format!("{prefix}.w_recurrent")).unwrap();
    let b = p.tensor(&format!("{prefix}.bias")).unwrap();
    let mut h = vec![0.0; units];
    let mut c = vec![0.0; units];
    let mut out = vec![Vec::new(); xs.len()];
    let order: Vec<usize> = if reverse {
        (0..xs.len()).rev().collect()
    } else {
        (0..xs.len()).collect()
    };
    for t in order {
        let a = matvec(w_in, 4 * units, in_dim, &xs[t]);
        let r = matvec(w_rec, 4 * units, units, &h);
        let z: Vec<f64> = (0..4 * units).map(|k| a[k] + r[k] + b[k]).collect();
        for j in 0..units {
            let i_g = sig(z[j]);
            let f_g = sig(z[units + j]);
            let g_g = z[2 * units + j].tanh();
            let o_g = sig(z[3 * units + j]);
            c[j] = f_g * c[j] + i_g * g_g;
            h[j] = o_g * c[j].tanh();
        }
        out[t] = h.clone();
    }
    out
}

fn oracle_forward(p: &ModelParams, x: &Array2<f64>) -> Vec<f64> {
    let cfg = p.config().clone();
    let mut xs: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    if let Some(r) = cfg.reducer_dim {
        let w = p.tensor("reducer.weight").unwrap();
        let b = p.tensor("reducer.bias").unwrap();
        xs = xs
            .iter()
            .map(|v| {
                matvec(w, r, cfg.input_dim, v)
                    .iter()
                    .zip(b)
                    .map(|(a, b)| (a + b).tanh())
                    .collect()
            })
            .collect();
    }
    for (k, &units) in cfg.layer_units.iter().enumerate() {
        let f = oracle_direction(p, &format!("layer{k}.fwd"), &xs, units, false);
        let bw = oracle_direction(p, &format!("layer{k}.bwd"), &xs, units, true);
        xs = f.into_iter().zip(bw).map(|(a, b)| [a, b].concat()).collect();
    }
    let w_o = p.tensor("output.weight").unwrap();
    let b_o = p.tensor("output.bias").unwrap()[0];
    xs.iter()
        .map(|v| v.iter().zip(w_o).map(|(a, b)| a * b).sum::<f64>() + b_o)
        .collect()
}

#[test]
fn forward_matches_naive_recurrence() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_matrix(&mut rng, 5, 4);
    for reducer in [None, Some(3)] {
        let mut p = init_params(&small_config(4, reducer, &[3, 2], 7)).unwrap();
        // Non-zero biases so every term of the recurrence is exercised.
        for v in p.values_mut() {
            *v += 0.05;
        }
        let got = predict(&p, x.view()).unwrap();
        let want = oracle_forward(&p, &x);
        assert_eq!(got.len(), 5);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }
}

#[test]
fn output_length_follows_input() {
    let p = init_params(&small_config(3, None, &[2], 1)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for t in [1, 2, 9, 40] {
        assert_eq!(predict(&p, random_matrix(&mut rng, t, 3).view()).unwrap().len(), t);
    }
}

#[test]
fn zero_parameters_predict_output_bias() {
    let mut p = ModelParams::zeros(&small_config(3, Some(2), &[4, 3], 0)).unwrap();
    p.tensor_mut("output.bias").unwrap()[0] = 0.375;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y = predict(&p, random_matrix(&mut rng, 6, 3).view()).unwrap();
    assert!(y.iter().all(|&v| v == 0.375));
}

#[test]
fn dimension_mismatch_is_schema_error() {
    let p = init_params(&small_config(3, None, &[2], 1)).unwrap();
    let err = predict(&p, Array2::zeros((4, 5)).view()).unwrap_err();
    assert!(matches!(err, Error::Schema(_)), "{err:?}");
}

#[test]
fn every_output_sees_the_whole_sequence() {
    let p = init_params(&small_config(3, None, &[4, 3], 5)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_matrix(&mut rng, 8, 3);
    let base = predict(&p, x.view()).unwrap();

    let mut late = x.clone();
    late[[7, 0]] += 0.5;
    assert_ne!(predict(&p, late.view()).unwrap()[0], base[0]);
    let mut early = x;
    early[[0, 1]] += 0.5;
    assert_ne!(predict(&p, early.view()).unwrap()[7], base[7]);
}

/// Central-difference gradient of `1 − CCC` with respect to every parameter.
fn numeric_gradient(p: &ModelParams, x: &Array2<f64>, gold: &[f64], h: f64) -> Vec<f64> {
    let mut work = p.clone();
    (0..p.values().len())
        .map(|k| {
            let orig = work.values()[k];
            work.values_mut()[k] = orig + h;
            let up = ccc_loss(&predict(&work, x.view()).unwrap(), gold).unwrap();
            work.values_mut()[k] = orig - h;
            let down = ccc_loss(&predict(&work, x.view()).unwrap(), gold).unwrap();
            work.values_mut()[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[test]
fn bptt_matches_finite_differences() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let p = init_params(&small_config(3, Some(2), &[4, 3], seed)).unwrap();
        let x = random_matrix(&mut rng, 7, 3);
        let gold: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (loss, grads) = loss_and_gradients(&p, x.view(), &gold).unwrap();
        assert!((loss - ccc_loss(&predict(&p, x.view()).unwrap(), &gold).unwrap()).abs() < 1e-15);
        let numeric = numeric_gradient(&p, &x, &gold, 1e-5);
        let mut worst: f64 = 0.0;
        for (k, (a, n)) in grads.values.iter().zip(&numeric).enumerate() {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            assert!(rel < 1e-4, "seed {seed} param {k}: analytic {a} numeric {n}");
            worst = worst.max(rel);
        }
        assert!(worst.is_finite());
    }
}

#[test]
fn constant_gold_gives_zero_gradient() {
    let p = init_params(&small_config(3, None, &[2], 9)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random_matrix(&mut rng, 5, 3);
    let (loss, g) = loss_and_gradients(&p, x.view(), &[0.3; 5]).unwrap();
    assert!(loss.is_finite());
    assert!(g.values.iter().all(|&v| v == 0.0 || v.is_finite()));
    let mut zp = ModelParams::zeros(p.config()).unwrap();
    zp.tensor_mut("output.bias").unwrap()[0] = 0.3;
    let (_, g) = loss_and_gradients(&zp, x.view(), &[0.3; 5]).unwrap();
    assert!(g.values.iter().all(|&v| v == 0.0));
}

#[test]
fn backward_requires_two_segments() {
    let p = init_params(&small_config(3, None, &[2], 9)).unwrap();
    let err = loss_and_gradients(&p, Array2::zeros((1, 3)).view(), &[0.0]).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn gradients_exist_only_for_present_tensors() {
    let p = init_params(&small_config(3, None, &[2], 9)).unwrap();
    assert!(p.layout().slot("reducer.weight").is_none());
    let tl = SegmentTimeline::new("c", 250, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let fm = FeatureMatrix::new("x", random_matrix(&mut rng, 4, 3), tl).unwrap();
    let gold = GoldTrack {
        dimension: "satisfaction".into(),
        values: vec![0.1, 0.4, -0.2, 0.0],
    };
    let (_, g) = backward(&p, &fm, &gold).unwrap();
    assert!(g.tensor("reducer.weight").is_none());
    assert_eq!(g.values.len(), p.values().len());
}

#[test]
fn checkpoint_round_trip_keeps_predictions() {
    let p = init_params(&small_config(5, Some(3), &[4, 2], 21)).unwrap();
    let q = decode_checkpoint(&encode_checkpoint(&p)).unwrap();
    let tl = SegmentTimeline::new("c", 100, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let fm = FeatureMatrix::new("x", random_matrix(&mut rng, 9, 5), tl).unwrap();
    let a = forward(&p, &fm).unwrap();
    let b = forward(&q, &fm).unwrap();
    assert_eq!(
        a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

fn toy_sequence(id: &str, seed: u64, t: usize) -> Sequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_matrix(&mut rng, t, 3);
    // Target is a smoothed function of the first input channel.
    let mut gold = Vec::with_capacity(t);
    let mut acc = 0.0;
    for r in x.rows() {
        acc = 0.7 * acc + 0.3 * r[0];
        gold.push(acc);
    }
    let tl = SegmentTimeline::new(id, 250, t).unwrap();
    Sequence::new(FeatureMatrix::new("toy", x, tl).unwrap(), gold).unwrap()
}

#[test]
fn training_overfits_a_single_conversation() {
    let seq = vec![toy_sequence("a", 5, 40)];
    let cfg = TrainConfig {
        epochs: 300,
        batch_size: 15,
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    let out = train(&small_config(3, None, &[8], 3), &cfg, &seq, &seq, |_| {}).unwrap();
    let final_loss = ccc_loss(&predict(&out.best, seq[0].features.rows.view()).unwrap(), &seq[0].gold).unwrap();
    assert!(final_loss < 0.05, "loss {final_loss}");
    assert_eq!(out.record.epochs.len(), 300);
    let best = out.record.best().unwrap();
    assert!(out.record.epochs.iter().all(|e| e.dev_ccc <= best.dev_ccc));
}

#[test]
fn training_is_deterministic() {
    let train_set: Vec<_> = (0..4).map(|i| toy_sequence(&format!("t{i}"), i, 20 + i as usize)).collect();
    let dev = vec![toy_sequence("d", 99, 25)];
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 3,
        seed: 8,
        ..TrainConfig::default()
    };
    let model = small_config(3, Some(2), &[4, 3], 1);
    let a = train(&model, &cfg, &train_set, &dev, |_| {}).unwrap();
    let b = train(&model, &cfg, &train_set, &dev, |_| {}).unwrap();
    assert_eq!(a.record.history_csv(), b.record.history_csv());
    assert_eq!(encode_checkpoint(&a.best), encode_checkpoint(&b.best));
    assert_eq!(encode_checkpoint(&a.last), encode_checkpoint(&b.last));
}

#[test]
fn patience_stops_early() {
    let seq = vec![toy_sequence("a", 5, 30)];
    let cfg = TrainConfig {
        epochs: 200,
        learning_rate: 0.0,
        patience: Some(3),
        ..TrainConfig::default()
    };
    let out = train(&small_config(3, None, &[2], 3), &cfg, &seq, &seq, |_| {}).unwrap();
    assert_eq!(out.record.best_epoch, 0);
    assert_eq!(out.record.epochs.len(), 4);
}

#[test]
fn training_names_bad_conversation() {
    let good = toy_sequence("ok", 1, 10);
    let bad = toy_sequence("short", 2, 1);
    let err = train(&small_config(3, None, &[2], 0), &TrainConfig::default(), &[good.clone(), bad], &[good], |_| {})
        .err()
        .unwrap();
    assert!(err.to_string().contains("short"), "{err}");
}
