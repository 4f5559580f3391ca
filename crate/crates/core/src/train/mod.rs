//! AdamW with decoupled weight decay, cosine learning-rate schedule,
//! synthetic classification data and the training loop.

mod data;

pub use data::{DataSpec, SyntheticDataset, Task};

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{top_k_accuracy, Model, ModelConfig, Variant};
use crate::params::ParamStore;
use crate::tensor::{Scalar, Tape, Tensor};

/// Optimizer and schedule settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "base_lr")]
    pub base_lr: f64,
    #[serde(default = "min_lr")]
    pub min_lr: f64,
    #[serde(default = "weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "betas")]
    pub betas: (f64, f64),
    #[serde(default = "adam_eps")]
    pub eps: f64,
    #[serde(default = "epochs")]
    pub epochs: usize,
    #[serde(default = "batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Caps the step count below `epochs * steps_per_epoch`.
    #[serde(default)]
    pub max_steps: Option<usize>,
    /// Binds every weight as a constant: the loop runs but nothing learns.
    #[serde(default)]
    pub freeze: bool,
}

fn base_lr() -> f64 {
    2e-3
}
fn min_lr() -> f64 {
    2e-4
}
fn weight_decay() -> f64 {
    0.05
}
fn betas() -> (f64, f64) {
    (0.9, 0.999)
}
fn adam_eps() -> f64 {
    1e-8
}
fn epochs() -> usize {
    50
}
fn batch_size() -> usize {
    64
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("train defaults")
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.base_lr) || !pos(self.min_lr) || self.min_lr > self.base_lr {
            return bad("learning rates must satisfy 0 < min_lr <= base_lr");
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative");
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return bad("betas must lie in [0, 1)");
        }
        if !pos(self.eps) {
            return bad("eps must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.max_steps == Some(0) {
            return bad("epochs, batch_size and max_steps must be positive");
        }
        Ok(())
    }

    /// Optimizer steps for a dataset of `n` samples. The last batch of an
    /// epoch may be short.
    pub fn total_steps(&self, n: usize) -> usize {
        let per_epoch = n.div_ceil(self.batch_size);
        let total = per_epoch * self.epochs;
        self.max_steps.map_or(total, |m| m.min(total))
    }
}

/// A model given either as a preset name or as a full config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Preset(Variant),
    Config(ModelConfig),
}

/// Data given either as a spec string or as an object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataRef {
    Text(String),
    Spec(DataSpec),
}

/// Training run description, the JSON document read by `afidaf train`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelRef,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_data")]
    pub data: DataRef,
}

fn default_data() -> DataRef {
    DataRef::Spec(DataSpec::default())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.model_config()?;
        cfg.data_spec()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run config serializes")
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let cfg = match &self.model {
            ModelRef::Preset(v) => ModelConfig::preset(*v)?,
            ModelRef::Config(c) => c.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn data_spec(&self) -> Result<DataSpec> {
        let spec = match &self.data {
            DataRef::Text(s) => s.parse()?,
            DataRef::Spec(s) => s.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The same run with the model and data written out in full.
    pub fn resolved(&self) -> Result<Self> {
        Ok(Self {
            model: ModelRef::Config(self.model_config()?),
            train: self.train.clone(),
            data: DataRef::Spec(self.data_spec()?),
        })
    }
}

/// `min + (base - min) * (1 + cos(pi * step / total)) / 2`.
pub fn cosine_lr(step: usize, total: usize, cfg: &TrainConfig) -> Result<f64> {
    if step > total || total == 0 {
        return Err(Error::Contract(format!("cosine_lr step {step} outside [0, {total}]")));
    }
    let t = step as f64 / total as f64;
    Ok(cfg.min_lr + 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + (std::f64::consts::PI * t).cos()))
}

/// First and second moments, kept in `f64` whatever the parameter type.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<T: Scalar>(store: &ParamStore<T>) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, p)| vec![0.0; p.value.numel()]).collect();
        Self { step: 0, m: zeros.clone(), v: zeros }
    }
}

/// One AdamW update. `grads[i]` belongs to the i-th parameter; `None`
/// leaves that parameter and its moments untouched. Entries with
/// `decay == false` (norm gains, biases) skip weight decay.
pub fn adamw_step<T: Scalar>(
    store: &mut ParamStore<T>,
    grads: &[Option<Tensor<T>>],
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(Error::Contract(format!(
            "{} gradients and {} moment slots for {} parameters",
            grads.len(),
            state.m.len(),
            store.len()
        )));
    }
    for ((_, p), g) in store.iter().zip(grads) {
        if let Some(g) = g {
            if g.shape() != p.value.shape() {
                return Err(Error::Contract(format!(
                    "gradient {:?} for {} of shape {:?}",
                    g.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
            if !g.all_finite() {
                return Err(Error::Numeric(format!("non-finite gradient for {}", p.name)));
            }
        }
    }
    state.step += 1;
    let (b1, b2) = cfg.betas;
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for (i, (p, g)) in store.values_mut().zip(grads).enumerate() {
        let Some(g) = g else { continue };
        let shrink = if p.decay { 1.0 - lr * cfg.weight_decay } else { 1.0 };
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let updated: Vec<T> = p
            .value
            .data()
            .iter()
            .zip(g.data())
            .enumerate()
            .map(|(j, (&w, &g))| {
                let g = g.to_f64();
                m[j] = b1 * m[j] + (1.0 - b1) * g;
                v[j] = b2 * v[j] + (1.0 - b2) * g * g;
                let step = (m[j] / c1) / ((v[j] / c2).sqrt() + cfg.eps);
                T::from_f64(w.to_f64() * shrink - lr * step)
            })
            .collect();
        p.value = Tensor::new(p.value.shape(), updated)?;
    }
    Ok(())
}

/// Metrics of one optimizer step, measured on the batch before the update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub acc: f64,
}

/// Mean batch metrics over one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub acc: f64,
}

#[derive(Clone, Debug, Default)]
pub struct History {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }

    /// Writes `step,lr,loss,acc` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::Contract(format!("csv: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "lr", "loss", "acc"]).map_err(io)?;
        for s in &self.steps {
            w.write_record([s.step.to_string(), s.lr.to_string(), s.loss.to_string(), s.acc.to_string()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Contract(format!("csv: {e}")))?;
        Ok(())
    }
}

/// Loss and top-1 accuracy over a whole dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub acc: f64,
}

fn check_shapes<T: Scalar>(model: &Model<T>, data: &SyntheticDataset<T>) -> Result<()> {
    if model.config.input != data.sample_shape() || model.config.num_classes != data.num_classes() {
        return Err(Error::Config(format!(
            "model expects {:?} with {} classes, data provides {:?} with {}",
            model.config.input,
            model.config.num_classes,
            data.sample_shape(),
            data.num_classes()
        )));
    }
    Ok(())
}

/// Inference over `data` in batches of `batch`, in sample order.
pub fn evaluate<T: Scalar>(model: &Model<T>, data: &SyntheticDataset<T>, batch: usize) -> Result<Evaluation> {
    check_shapes(model, data)?;
    let (mut loss, mut hits) = (0.0, 0.0);
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let (x, y) = data.batch(chunk)?;
        let logits = model.predict(&x)?;
        loss += crate::ops::softmax_cross_entropy(&logits, &y)?.to_f64() * chunk.len() as f64;
        hits += top_k_accuracy(&logits, &y, 1)? * chunk.len() as f64;
    }
    let n = data.len() as f64;
    Ok(Evaluation { loss: loss / n, acc: hits / n })
}

/// Minibatch AdamW on softmax cross-entropy with a cosine schedule.
///
/// Each epoch visits the samples in an order drawn from `cfg.seed`, so
/// identical inputs give bit-identical histories. `observe` sees every
/// step as it completes.
pub fn train_loop<T: Scalar>(
    model: &mut Model<T>,
    data: &SyntheticDataset<T>,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&StepRecord),
) -> Result<History> {
    cfg.validate()?;
    check_shapes(model, data)?;
    let total = cfg.total_steps(data.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(&model.params);
    let mut history = History::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0;
    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let first = history.steps.len();
        for chunk in order.chunks(cfg.batch_size) {
            if step == total {
                break 'epochs;
            }
            let lr = cosine_lr(step, total, cfg)?;
            let (x, y) = data.batch(chunk)?;
            let tape = Tape::new();
            let p = if cfg.freeze { model.params.bind_frozen(&tape) } else { model.params.bind(&tape) };
            let logits = model.forward(&p, tape.constant(x))?;
            let loss = logits.softmax_cross_entropy(&y)?;
            let loss_value = loss.value().item()?.to_f64();
            if !loss_value.is_finite() {
                return Err(Error::Divergence(format!("loss {loss_value} at step {step} (epoch {epoch})")));
            }
            let acc = top_k_accuracy(&logits.value(), &y, 1)?;
            if !cfg.freeze {
                let g = tape.backward(loss)?;
                let grads: Vec<Option<Tensor<T>>> = p.vars().iter().map(|&v| g.get(v).cloned()).collect();
                adamw_step(&mut model.params, &grads, &mut state, lr, cfg)?;
            }
            let rec = StepRecord { step, epoch, lr, loss: loss_value, acc };
            observe(&rec);
            history.steps.push(rec);
            step += 1;
        }
        let done = &history.steps[first..];
        if !done.is_empty() {
            let n = done.len() as f64;
            history.epochs.push(EpochRecord {
                epoch,
                loss: done.iter().map(|s| s.loss).sum::<f64>() / n,
                acc: done.iter().map(|s| s.acc).sum::<f64>() / n,
            });
        }
    }
    Ok(history)
}
