use nalgebra::DMatrix;
use rand::Rng;
use voidfield::nn::{Activation, NnArch, NnModel, TrainConfig};
use voidfield::rng::rng_from_seed;
use voidfield::search::SearchSpace;

fn uniform(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
}

/// Central-difference check of up to `per_layer` weights and every bias
/// entry (capped likewise) of each layer; returns the worst relative error.
fn worst_gradient_error(model: &mut NnModel, x: &DMatrix<f64>, y: &DMatrix<f64>, per_layer: usize, seed: u64) -> f64 {
    let (_, grads) = model.loss_grad(x, y).unwrap();
    let mut rng = rng_from_seed(seed);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for li in 0..model.layers().len() {
        let nw = model.layers()[li].weights.len();
        let nb = model.layers()[li].bias.len();
        let mut picks: Vec<(bool, usize)> = (0..per_layer.min(nw)).map(|_| (true, rng.random_range(0..nw))).collect();
        picks.extend((0..per_layer.min(nb)).map(|_| (false, rng.random_range(0..nb))));
        for (is_w, idx) in picks {
            let param = |m: &mut NnModel| -> *mut f64 {
                let l = &mut m.layers_mut()[li];
                if is_w {
                    &mut l.weights.as_mut_slice()[idx]
                } else {
                    &mut l.bias.as_mut_slice()[idx]
                }
            };
            let p = param(model);
            // SAFETY: the pointer targets a live element of `model` and no
            // other reference to it exists while we write.
            let orig = unsafe { *p };
            unsafe { *p = orig + h };
            let up = model.loss_grad(x, y).unwrap().0;
            unsafe { *p = orig - h };
            let dn = model.loss_grad(x, y).unwrap().0;
            unsafe { *p = orig };
            let numeric = (up - dn) / (2.0 * h);
            let analytic =
                if is_w { grads.layers[li].weights.as_slice()[idx] } else { grads.layers[li].bias.as_slice()[idx] };
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences_over_search_space() {
    let space = SearchSpace::default();
    let mut rng = rng_from_seed(77);
    let mut case = 0u64;
    for &depth in &space.depths {
        for &width in &space.widths {
            for &activation in &space.activations {
                case += 1;
                let k1 = rng.random_range(space.k_in.0..=space.k_in.1);
                let k2 = rng.random_range(space.k_out.0..=space.k_out.1);
                let arch = NnArch { input: k1, output: k2, depth, width, activation };
                let mut model = NnModel::init(arch, case).unwrap();
                // Random, non-zero biases so every layer is exercised.
                for l in model.layers_mut() {
                    l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
                }
                let x = uniform(6, k1, 1000 + case);
                let y = uniform(6, k2, 2000 + case);
                let worst = worst_gradient_error(&mut model, &x, &y, 40, case);
                assert!(worst < 1e-4, "{activation} depth {depth} width {width}: {worst:e}");
            }
        }
    }
}

#[test]
fn ten_samples_are_memorized() {
    let x = uniform(10, 4, 1);
    let y = uniform(10, 3, 2);
    let arch = NnArch { input: 4, output: 3, depth: 2, width: 64, activation: Activation::Tanh };
    let mut model = NnModel::init(arch, 3).unwrap();
    let cfg =
        TrainConfig { learning_rate: 3e-3, decay: 0.999, batch_size: 10, max_epochs: 5000, patience: None, seed: 4 };
    model.train(&x, &y, None, &cfg).unwrap();
    let final_loss = model.history().last().unwrap().train;
    assert!(final_loss < 1e-6, "final standardized MSE {final_loss:e}");
}

#[test]
fn batch_forward_equals_row_by_row() {
    for act in Activation::ALL {
        let arch = NnArch { input: 7, output: 5, depth: 3, width: 32, activation: act };
        let model = NnModel::init(arch, 9).unwrap();
        let x = uniform(33, 7, 10);
        let batch = model.forward(&x).unwrap();
        for i in 0..x.nrows() {
            let single = model.forward(&x.rows(i, 1).into_owned()).unwrap();
            for j in 0..5 {
                assert_eq!(batch[(i, j)].to_bits(), single[(0, j)].to_bits(), "{act} row {i}");
            }
        }
    }
}

#[test]
fn full_batch_loss_is_non_increasing_with_small_steps() {
    let x = uniform(40, 3, 11);
    let y = DMatrix::from_fn(40, 2, |i, j| (j as f64 + 1.0) * x[(i, 0)] - 0.5 * x[(i, 2)]);
    let arch = NnArch { input: 3, output: 2, depth: 2, width: 32, activation: Activation::Tanh };
    let mut model = NnModel::init(arch, 12).unwrap();
    let cfg =
        TrainConfig { learning_rate: 1e-4, decay: 1.0, batch_size: 40, max_epochs: 300, patience: None, seed: 13 };
    model.train(&x, &y, None, &cfg).unwrap();
    for w in model.history().windows(2) {
        assert!(w[1].train <= w[0].train, "epoch {}: {} > {}", w[1].epoch, w[1].train, w[0].train);
    }
}

#[test]
fn affine_output_rescaling_is_invisible() {
    let x = uniform(30, 3, 14);
    let y = DMatrix::from_fn(30, 2, |i, j| (x[(i, j)] * 2.0).sin());
    let arch = NnArch { input: 3, output: 2, depth: 2, width: 32, activation: Activation::Elu };
    let cfg = TrainConfig { max_epochs: 200, patience: None, batch_size: 8, seed: 15, ..TrainConfig::default() };
    let probe = uniform(20, 3, 16);

    let mut a = NnModel::init(arch, 17).unwrap();
    a.train(&x, &y, None, &cfg).unwrap();
    let pa = a.forward(&probe).unwrap();

    let (s, c) = (1e6, 3e5);
    let mut b = NnModel::init(arch, 17).unwrap();
    b.train(&x, &y.map(|v| s * v + c), None, &cfg).unwrap();
    let pb = b.forward(&probe).unwrap().map(|v| (v - c) / s);
    for (u, v) in pa.iter().zip(pb.iter()) {
        assert!((u - v).abs() < 1e-6 * (1.0 + u.abs()), "{u} vs {v}");
    }
}

#[test]
fn early_stopping_returns_best_validation_epoch() {
    let x = uniform(30, 3, 18);
    let y = DMatrix::from_fn(30, 1, |i, _| x[(i, 0)] + 0.3 * uniform(1, 1, i as u64)[(0, 0)]);
    let vx = uniform(10, 3, 19);
    let vy = DMatrix::from_fn(10, 1, |i, _| vx[(i, 0)]);
    let arch = NnArch { input: 3, output: 1, depth: 3, width: 64, activation: Activation::Relu };
    let mut model = NnModel::init(arch, 20).unwrap();
    let cfg = TrainConfig {
        learning_rate: 5e-3,
        batch_size: 8,
        max_epochs: 400,
        patience: Some(20),
        seed: 21,
        ..TrainConfig::default()
    };
    model.train(&x, &y, Some((&vx, &vy)), &cfg).unwrap();
    let best = model.best_epoch().unwrap();
    let h = model.history();
    let best_val = h[best].val.unwrap();
    assert!(h.iter().all(|e| e.val.unwrap() >= best_val));
    assert!(h.len() <= best + 21);
}
