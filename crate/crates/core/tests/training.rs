use mbls::data::{gen_blobs, BlobSpec, Dataset};
use mbls::metrics::accuracy;
use mbls::model::{backward, evaluate, init_mlp, train, LrStep, MlpModel, TrainConfig};
use mbls::{Error, LossSpec};

fn tiny() -> Dataset {
    Dataset::new(
        vec![1.0, 0.5, -0.5, 1.5, 2.0, -1.0, -1.0, -0.5],
        vec![0, 1, 0, 1],
        2,
        2,
    )
    .unwrap()
}

fn linear(epochs: usize, batch_size: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        loss: LossSpec::ce(),
        hidden_dims: vec![],
        epochs,
        batch_size,
        lr_schedule: vec![LrStep { epoch_start: 0, lr }],
        momentum: 0.9,
        seed: 17,
        shuffle: true,
    }
}

/// Plain dense forward pass, written out index by index.
fn reference_forward(model: &MlpModel, x: &[f64]) -> Vec<f64> {
    let mut act = x.to_vec();
    let n = model.layers().len();
    for (li, layer) in model.layers().iter().enumerate() {
        let mut out = vec![0.0; layer.outputs];
        for j in 0..layer.outputs {
            let mut z = layer.biases[j];
            for i in 0..layer.inputs {
                z += act[i] * layer.weights[i * layer.outputs + j];
            }
            out[j] = if li + 1 < n { z.max(0.0) } else { z };
        }
        act = out;
    }
    act
}

fn softmax2(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

#[test]
fn zero_epochs_returns_initialization() {
    let ds = tiny();
    let cfg = TrainConfig {
        hidden_dims: vec![3],
        ..linear(0, 2, 0.1)
    };
    let (model, history) = train(&cfg, &ds, &ds).unwrap();
    assert_eq!(model, init_mlp(&[2, 3, 2], cfg.seed).unwrap());
    assert!(history.epochs.is_empty());
    assert_eq!(
        history.to_csv(),
        "epoch,train_loss,val_loss,val_acc,val_ece\n"
    );
}

#[test]
fn training_is_bit_reproducible() {
    let ds = gen_blobs(&BlobSpec {
        num_classes: 3,
        dim: 4,
        n_per_class: 20,
        center_scale: 2.0,
        noise_sigma: 1.0,
        seed: 5,
    })
    .unwrap();
    let cfg = TrainConfig {
        hidden_dims: vec![6],
        epochs: 4,
        batch_size: 7,
        loss: LossSpec::mbls(2.0, 0.1),
        ..TrainConfig::default()
    };
    let (a, ha) = train(&cfg, &ds, &ds).unwrap();
    let (b, hb) = train(&cfg, &ds, &ds).unwrap();
    let bits = |m: &MlpModel| m.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(ha.to_csv(), hb.to_csv());
    assert_eq!(ha.epochs.len(), 4);

    let other = TrainConfig {
        seed: cfg.seed + 1,
        ..cfg
    };
    assert_ne!(bits(&train(&other, &ds, &ds).unwrap().0), bits(&a));
}

#[test]
fn one_full_batch_epoch_is_one_gradient_step() {
    let ds = tiny();
    let lr = 0.3;
    let cfg = linear(1, ds.len(), lr);
    let init = init_mlp(&[2, 2], cfg.seed).unwrap();
    let (model, _) = train(&cfg, &ds, &ds).unwrap();

    let w0 = &init.layers()[0];
    let mut grad_w = [0.0; 4];
    let mut grad_b = [0.0; 2];
    for n in 0..ds.len() {
        let x = ds.row(n);
        let s = softmax2(&reference_forward(&init, x));
        for j in 0..2 {
            let r = s[j] - f64::from(u8::from(ds.labels()[n] == j));
            grad_b[j] += r / 4.0;
            for i in 0..2 {
                grad_w[i * 2 + j] += x[i] * r / 4.0;
            }
        }
    }
    let w1 = &model.layers()[0];
    for k in 0..4 {
        assert!((w1.weights[k] - (w0.weights[k] - lr * grad_w[k])).abs() < 1e-12);
    }
    for j in 0..2 {
        assert!((w1.biases[j] - (w0.biases[j] - lr * grad_b[j])).abs() < 1e-12);
    }
}

#[test]
fn separable_blobs_are_fit() {
    let ds = gen_blobs(&BlobSpec {
        num_classes: 4,
        dim: 6,
        n_per_class: 25,
        center_scale: 3.0,
        noise_sigma: 0.0,
        seed: 9,
    })
    .unwrap();
    let cfg = TrainConfig {
        loss: LossSpec::ce(),
        ..TrainConfig::default()
    };
    let (model, _) = train(&cfg, &ds, &ds).unwrap();
    assert!(accuracy(&evaluate(&model, &ds).unwrap()).unwrap() >= 0.99);
}

#[test]
fn forward_matches_reference_pass() {
    let model = init_mlp(&[5, 7, 6, 3], 21).unwrap();
    for t in 0..10 {
        let x: Vec<f64> = (0..5)
            .map(|i| ((i * 7 + t * 3) % 11) as f64 / 3.0 - 1.5)
            .collect();
        let got = model.forward(&x).unwrap();
        let want = reference_forward(&model, &x);
        for (g, w) in got.as_slice().iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }
}

#[test]
fn margin_loss_without_weight_is_ce_backprop() {
    let model = init_mlp(&[3, 4], 2).unwrap();
    let x = [0.4, -1.2, 2.0];
    let (ce_value, ce_grads) = backward(&model, &x, 1, &LossSpec::ce()).unwrap();
    let (value, grads) = backward(&model, &x, 1, &LossSpec::mbls(0.0, 0.0)).unwrap();
    assert_eq!(value, ce_value);
    assert_eq!(grads.flatten(), ce_grads.flatten());

    let s = softmax2(&reference_forward(&model, &x));
    let flat = grads.flatten();
    for i in 0..3 {
        for j in 0..4 {
            let r = s[j] - f64::from(u8::from(j == 1));
            assert!((flat[i * 4 + j] - x[i] * r).abs() < 1e-12);
        }
    }
}

#[test]
fn evaluate_edge_cases() {
    let model = init_mlp(&[2, 2], 0).unwrap();
    let empty = Dataset::new(vec![], vec![], 2, 2).unwrap();
    let preds = evaluate(&model, &empty).unwrap();
    assert!(preds.is_empty());
    assert!(matches!(accuracy(&preds), Err(Error::Usage(_))));

    let ds = tiny();
    let preds = evaluate(&model, &ds).unwrap();
    let manual = (0..ds.len())
        .filter(|&i| {
            let z = reference_forward(&model, ds.row(i));
            usize::from(z[1] > z[0]) == ds.labels()[i]
        })
        .count() as f64
        / ds.len() as f64;
    assert_eq!(accuracy(&preds).unwrap(), manual);

    let single = ds.select(&[2]);
    let one = evaluate(&model, &single).unwrap();
    assert_eq!(one.records()[0].logits, model.forward(ds.row(2)).unwrap());
}

#[test]
fn empty_training_data_is_rejected() {
    let empty = Dataset::new(vec![], vec![], 2, 2).unwrap();
    let err = train(&linear(1, 2, 0.1), &empty, &tiny()).unwrap_err();
    assert!(matches!(err, Error::Usage(_)), "{err}");
}
