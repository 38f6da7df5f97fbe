//! Fully-connected classifier with ReLU hidden layers and a deterministic
//! mini-batch SGD trainer (classical momentum, multi-step learning rate).
//!
//! Weights of a layer mapping `n_in -> n_out` are stored row-major as an
//! `n_in x n_out` matrix, so `z_j = b_j + sum_i x_i W[i][j]`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{LossOutput, LossSpec};
use crate::metrics::{accuracy, ece, PredictionRecord, PredictionSet, DEFAULT_ECE_BINS};
use crate::numerics::LogitVector;
use crate::rng::{seeded, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `inputs x outputs`, row-major.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.biases);
        for (xi, row) in x.iter().zip(self.weights.chunks_exact(self.outputs)) {
            if *xi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.biases.iter())
    }
}

/// MLP with layer widths `[d_in, h_1, ..., h_L, K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    layers: Vec<Dense>,
}

fn check_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 || layer_dims.contains(&0) {
        return Err(Error::Config(format!(
            "layer dims need at least 2 positive entries, got {layer_dims:?}"
        )));
    }
    Ok(())
}

impl MlpModel {
    /// Model with every parameter zero.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        check_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("model needs at least one layer".into()));
        }
        let mut dims = vec![layers[0].inputs];
        for (i, layer) in layers.iter().enumerate() {
            if layer.inputs != *dims.last().unwrap()
                || layer.weights.len() != layer.inputs * layer.outputs
                || layer.biases.len() != layer.outputs
            {
                return Err(Error::Config(format!("layer {i} has inconsistent shapes")));
            }
            if layer.params().any(|p| !p.is_finite()) {
                return Err(Error::Config(format!(
                    "layer {i} has non-finite parameters"
                )));
            }
            dims.push(layer.outputs);
        }
        check_dims(&dims)?;
        Ok(Self {
            layer_dims: dims,
            layers,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Every parameter, layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.params().copied())
            .collect()
    }

    /// Mutable access to parameter `index` in [`params`](Self::params) order.
    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let n = layer.weights.len();
            if index < n {
                return &mut layer.weights[index];
            }
            index -= n;
            if index < layer.biases.len() {
                return &mut layer.biases[index];
            }
            index -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Usage(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Pre-activations of every layer; hidden ones get ReLU'd on the way up.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.forward_into(acts.last().unwrap(), &mut z);
            if i != last {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<LogitVector> {
        self.check_input(x)?;
        let mut acts = self.activations(x);
        LogitVector::new(acts.pop().unwrap())
    }

    /// Adds `scale * d loss / d params` into `grads` and returns the unscaled loss.
    pub fn accumulate_gradient(
        &self,
        x: &[f64],
        y: usize,
        spec: &LossSpec,
        scale: f64,
        grads: &mut Gradients,
    ) -> Result<f64> {
        self.check_input(x)?;
        let acts = self.activations(x);
        let logits = LogitVector::new(acts.last().unwrap().clone())?;
        let LossOutput { value, grad } = spec.eval(&logits, y)?;

        let mut delta: Vec<f64> = grad.into_iter().map(|g| g * scale).collect();
        for (i, (layer, g)) in self.layers.iter().zip(&mut grads.layers).enumerate().rev() {
            let input = &acts[i];
            for (xi, grow) in input.iter().zip(g.weights.chunks_exact_mut(layer.outputs)) {
                if *xi == 0.0 {
                    continue;
                }
                for (gw, d) in grow.iter_mut().zip(&delta) {
                    *gw += xi * d;
                }
            }
            for (gb, d) in g.biases.iter_mut().zip(&delta) {
                *gb += d;
            }
            if i == 0 {
                break;
            }
            // back through W and the ReLU of the previous layer (active iff output > 0)
            let prev: Vec<f64> = layer
                .weights
                .chunks_exact(layer.outputs)
                .zip(input)
                .map(|(row, &a)| {
                    if a > 0.0 {
                        row.iter().zip(&delta).map(|(w, d)| w * d).sum()
                    } else {
                        0.0
                    }
                })
                .collect();
            delta = prev;
        }
        Ok(value)
    }
}

/// Parameter-shaped buffer for gradients and momentum velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.params().copied())
            .collect()
    }

    fn reset(&mut self) {
        for layer in &mut self.layers {
            layer.params_mut().for_each(|p| *p = 0.0);
        }
    }

    fn same_shape(&self, model: &MlpModel) -> bool {
        self.layers.len() == model.layers.len()
            && self
                .layers
                .iter()
                .zip(&model.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }
}

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights, zero biases.
pub fn init_mlp(layer_dims: &[usize], seed: u64) -> Result<MlpModel> {
    let mut model = MlpModel::zeros(layer_dims)?;
    let mut rng = seeded(seed, stream::INIT);
    for layer in &mut model.layers {
        let bound = 1.0 / (layer.inputs as f64).sqrt();
        for w in &mut layer.weights {
            *w = rng.random_range(-bound..bound);
        }
    }
    Ok(model)
}

/// Loss value and parameter gradients for one sample.
pub fn backward(
    model: &MlpModel,
    x: &[f64],
    y: usize,
    spec: &LossSpec,
) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros_like(model);
    let value = model.accumulate_gradient(x, y, spec, 1.0, &mut grads)?;
    Ok((value, grads))
}

/// Classical momentum: `v <- momentum v + g`, then `theta <- theta - lr v`.
pub fn sgd_step(
    model: &mut MlpModel,
    grads: &Gradients,
    lr: f64,
    momentum: f64,
    velocity: &mut Gradients,
) -> Result<()> {
    if !grads.same_shape(model) || !velocity.same_shape(model) {
        return Err(Error::Usage(
            "gradient buffers do not match the model".into(),
        ));
    }
    for ((layer, g), v) in model
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut velocity.layers)
    {
        for ((p, gi), vi) in layer.params_mut().zip(g.params()).zip(v.params_mut()) {
            *vi = momentum * *vi + gi;
            *p -= lr * *vi;
        }
    }
    Ok(())
}

/// Learning rate `lr` from epoch `epoch_start` until the next step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrStep {
    pub epoch_start: usize,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossSpec,
    pub hidden_dims: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_schedule: Vec<LrStep>,
    pub momentum: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossSpec::default(),
            hidden_dims: vec![128],
            epochs: 60,
            batch_size: 32,
            lr_schedule: vec![
                LrStep {
                    epoch_start: 0,
                    lr: 0.05,
                },
                LrStep {
                    epoch_start: 30,
                    lr: 0.005,
                },
                LrStep {
                    epoch_start: 45,
                    lr: 0.0005,
                },
            ],
            momentum: 0.9,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        match self.lr_schedule.first() {
            None => return Err(Error::Config("lr_schedule is empty".into())),
            Some(s) if s.epoch_start != 0 => {
                return Err(Error::Config("lr_schedule must start at epoch 0".into()))
            }
            _ => {}
        }
        if self
            .lr_schedule
            .windows(2)
            .any(|w| w[1].epoch_start <= w[0].epoch_start)
        {
            return Err(Error::Config(
                "lr_schedule epoch starts must be strictly increasing".into(),
            ));
        }
        if let Some(s) = self
            .lr_schedule
            .iter()
            .find(|s| !(s.lr > 0.0 && s.lr.is_finite()))
        {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {}",
                s.lr
            )));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr_schedule
            .iter()
            .rev()
            .find(|s| s.epoch_start <= epoch)
            .map_or(self.lr_schedule[0].lr, |s| s.lr)
    }

    pub fn layer_dims(&self, input_dim: usize, num_classes: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden_dims);
        dims.push(num_classes);
        dims
    }

    /// SHA-256 of the config's JSON encoding, lowercase hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub val_ece: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// `epoch,train_loss,val_loss,val_acc,val_ece` with the same real format as the data CSVs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_acc,val_ece\n");
        for r in &self.epochs {
            write!(out, "{}", r.epoch).unwrap();
            for v in [r.train_loss, r.val_loss, r.val_acc, r.val_ece] {
                out.push(',');
                crate::data::fmt_real(&mut out, v);
            }
            out.push('\n');
        }
        out
    }
}

fn check_dataset(model: &MlpModel, ds: &Dataset, what: &str) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::Usage(format!("{what} set is empty")));
    }
    if ds.dim() != model.input_dim() || ds.num_classes() != model.num_classes() {
        return Err(Error::Usage(format!(
            "{what} set shape (d={}, K={}) does not match model {:?}",
            ds.dim(),
            ds.num_classes(),
            model.layer_dims()
        )));
    }
    Ok(())
}

/// Mini-batch SGD over `train`, recording validation metrics after every epoch.
///
/// Fully determined by `(config, train, val)`: initialization uses the seed's
/// init stream and epoch `e` shuffles with stream `EPOCH_BASE + e`.
pub fn train(
    config: &TrainConfig,
    train: &Dataset,
    val: &Dataset,
) -> Result<(MlpModel, TrainHistory)> {
    config.validate()?;
    let dims = config.layer_dims(train.dim(), train.num_classes());
    let mut model = init_mlp(&dims, config.seed)?;
    check_dataset(&model, train, "training")?;
    check_dataset(&model, val, "validation")?;

    let mut grads = Gradients::zeros_like(&model);
    let mut velocity = Gradients::zeros_like(&model);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        order.sort_unstable();
        if config.shuffle {
            order.shuffle(&mut seeded(config.seed, stream::EPOCH_BASE + epoch as u64));
        }
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.reset();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                loss_sum += model.accumulate_gradient(
                    train.row(i),
                    train.labels()[i],
                    &config.loss,
                    scale,
                    &mut grads,
                )?;
            }
            sgd_step(&mut model, &grads, lr, config.momentum, &mut velocity)?;
        }

        let preds = evaluate(&model, val)?;
        let val_loss = preds
            .records()
            .iter()
            .map(|r| config.loss.eval(&r.logits, r.label).map(|o| o.value))
            .sum::<Result<f64>>()?
            / preds.len() as f64;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            val_acc: accuracy(&preds)?,
            val_ece: ece(&preds, DEFAULT_ECE_BINS)?,
        });
    }
    Ok((model, history))
}

/// Forward pass over every sample, in dataset order.
pub fn evaluate(model: &MlpModel, ds: &Dataset) -> Result<PredictionSet> {
    if ds.dim() != model.input_dim() || ds.num_classes() != model.num_classes() {
        return Err(Error::Usage(format!(
            "dataset shape (d={}, K={}) does not match model {:?}",
            ds.dim(),
            ds.num_classes(),
            model.layer_dims()
        )));
    }
    let records = (0..ds.len())
        .map(|i| {
            Ok(PredictionRecord {
                logits: model.forward(ds.row(i))?,
                label: ds.labels()[i],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PredictionSet::new(records, model.num_classes())
}

pub const CHECKPOINT_FORMAT: &str = "mbls-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk model: JSON with row-major weights per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub layer_dims: Vec<usize>,
    pub config_hash: String,
    pub layers: Vec<Dense>,
}

impl Checkpoint {
    pub fn new(model: &MlpModel, config_hash: String) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            layer_dims: model.layer_dims.clone(),
            config_hash,
            layers: model.layers.clone(),
        }
    }

    pub fn into_model(self) -> Result<MlpModel> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let model = MlpModel::from_layers(self.layers)?;
        if model.layer_dims != self.layer_dims {
            return Err(Error::Config(
                "checkpoint layer_dims disagree with layers".into(),
            ));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        json.push('\n');
        crate::data::save_text(path, &json)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossKind;

    fn identity_model() -> MlpModel {
        MlpModel::from_layers(vec![Dense {
            inputs: 2,
            outputs: 2,
            weights: vec![1.0, 0.0, 0.0, 1.0],
            biases: vec![0.0, 0.0],
        }])
        .unwrap()
    }

    #[test]
    fn init_is_seeded_and_shaped() {
        let a = init_mlp(&[4, 3], 9).unwrap();
        assert_eq!(a.layers().len(), 1);
        assert_eq!(a.layers()[0].weights.len(), 12);
        assert_eq!(a.layers()[0].biases, vec![0.0; 3]);
        assert_eq!(a, init_mlp(&[4, 3], 9).unwrap());
        assert_ne!(a, init_mlp(&[4, 3], 10).unwrap());
        let bound = 0.5;
        assert!(a.params().iter().all(|w| w.abs() <= bound));
        assert!(init_mlp(&[4], 0).is_err());
        assert!(init_mlp(&[4, 0, 3], 0).is_err());
    }

    #[test]
    fn forward_examples() {
        let zero = MlpModel::zeros(&[3, 2]).unwrap();
        assert_eq!(
            zero.forward(&[1.0, -2.0, 5.0]).unwrap().as_slice(),
            &[0.0, 0.0]
        );
        assert_eq!(
            identity_model().forward(&[3.0, 1.0]).unwrap().as_slice(),
            &[3.0, 1.0]
        );
        assert!(matches!(
            identity_model().forward(&[1.0]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn forward_applies_relu_on_hidden_layers_only() {
        let model = MlpModel::from_layers(vec![
            Dense {
                inputs: 1,
                outputs: 2,
                weights: vec![1.0, -1.0],
                biases: vec![0.0, 0.0],
            },
            Dense {
                inputs: 2,
                outputs: 2,
                weights: vec![1.0, -1.0, 1.0, 1.0],
                biases: vec![0.0, -5.0],
            },
        ])
        .unwrap();
        // hidden = relu([2, -2]) = [2, 0]; out = [2, -2 - 5]
        assert_eq!(model.forward(&[2.0]).unwrap().as_slice(), &[2.0, -7.0]);
    }

    #[test]
    fn linear_ce_gradient_is_outer_product() {
        let model = init_mlp(&[3, 4], 1).unwrap();
        let x = [0.5, -1.0, 2.0];
        let logits = model.forward(&x).unwrap();
        let s = crate::numerics::softmax(&logits);
        let spec = LossSpec::mbls(2.0, 0.0);
        let (_, grads) = backward(&model, &x, 2, &spec).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let r = s.as_slice()[j] - if j == 2 { 1.0 } else { 0.0 };
                assert!((grads.layers[0].weights[i * 4 + j] - x[i] * r).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sgd_step_examples() {
        let mut model = identity_model();
        let start = model.params();
        let mut grads = Gradients::zeros_like(&model);
        grads.layers[0].weights = vec![1.0, 2.0, -1.0, 0.5];
        grads.layers[0].biases = vec![0.25, -0.25];
        let g = grads.flatten();

        let mut v = Gradients::zeros_like(&model);
        sgd_step(&mut model, &grads, 0.1, 0.0, &mut v).unwrap();
        for ((p, p0), gi) in model.params().iter().zip(&start).zip(&g) {
            assert!((p - (p0 - 0.1 * gi)).abs() < 1e-15);
        }

        let mut model = identity_model();
        let mut v = Gradients::zeros_like(&model);
        sgd_step(&mut model, &grads, 0.1, 0.9, &mut v).unwrap();
        sgd_step(&mut model, &grads, 0.1, 0.9, &mut v).unwrap();
        for ((p, p0), gi) in model.params().iter().zip(&start).zip(&g) {
            assert!((p0 - p - 0.1 * gi * 2.9).abs() < 1e-14);
        }

        let zero = Gradients::zeros_like(&model);
        let before = model.clone();
        let v_before = v.flatten();
        sgd_step(&mut model, &zero, 0.1, 0.9, &mut v).unwrap();
        let moved: Vec<f64> = v_before.iter().map(|x| x * 0.9).collect();
        assert_eq!(v.flatten(), moved);
        assert_ne!(model, before);

        let mut frozen = identity_model();
        let mut v0 = Gradients::zeros_like(&frozen);
        sgd_step(&mut frozen, &zero, 0.1, 0.9, &mut v0).unwrap();
        assert_eq!(frozen, identity_model());

        let other = Gradients::zeros_like(&MlpModel::zeros(&[3, 2]).unwrap());
        assert!(sgd_step(&mut frozen, &other, 0.1, 0.9, &mut v0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let mut c = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        c = TrainConfig {
            momentum: 1.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        c = TrainConfig {
            lr_schedule: vec![],
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        c = TrainConfig {
            lr_schedule: vec![LrStep {
                epoch_start: 1,
                lr: 0.1,
            }],
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        c = TrainConfig {
            lr_schedule: vec![
                LrStep {
                    epoch_start: 0,
                    lr: 0.1,
                },
                LrStep {
                    epoch_start: 0,
                    lr: 0.01,
                },
            ],
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        c = TrainConfig {
            loss: LossSpec {
                kind: LossKind::Ls,
                alpha: 1.5,
                ..LossSpec::default()
            },
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn lr_schedule_lookup() {
        let c = TrainConfig::default();
        assert_eq!(c.lr_at(0), 0.05);
        assert_eq!(c.lr_at(29), 0.05);
        assert_eq!(c.lr_at(30), 0.005);
        assert_eq!(c.lr_at(1000), 0.0005);
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = TrainConfig::default();
        let b = TrainConfig {
            seed: 1,
            ..TrainConfig::default()
        };
        assert_eq!(a.hash().len(), 64);
        assert_eq!(a.hash(), TrainConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = init_mlp(&[3, 5, 2], 4).unwrap();
        Checkpoint::new(&model, "abc".into()).save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.config_hash, "abc");
        assert_eq!(loaded.into_model().unwrap(), model);
    }

    #[test]
    fn evaluate_keeps_order() {
        let ds = Dataset::new(vec![3.0, 1.0, 0.0, 2.0], vec![0, 0], 2, 2).unwrap();
        let preds = evaluate(&identity_model(), &ds).unwrap();
        assert_eq!(preds.records()[0].logits.as_slice(), &[3.0, 1.0]);
        assert_eq!(preds.records()[1].logits.as_slice(), &[0.0, 2.0]);
        assert_eq!(accuracy(&preds).unwrap(), 0.5);

        let empty = Dataset::new(vec![], vec![], 2, 2).unwrap();
        assert!(evaluate(&identity_model(), &empty).unwrap().is_empty());
    }
}
