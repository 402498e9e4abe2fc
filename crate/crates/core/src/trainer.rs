//! Loss, optimizer, dropout, held-out splitting and the training loop.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Gradients};
use crate::error::{Error, Result};
use crate::exec::{self, Schedule};
use crate::model::{Model, ModelConfig, Variant, EMBEDDING};
use crate::params::ParamStore;
use crate::pipeline::{EncodedExample, EvalReport, Label, PAD_ID};
use crate::tensor::Tensor;

/// Examples per gradient chunk. Chunks are summed in order, so the result
/// does not depend on how many threads evaluated them.
pub const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Laptop,
    Rest,
    Twitter,
}

impl DatasetName {
    pub fn name(self) -> &'static str {
        match self {
            DatasetName::Laptop => "laptop",
            DatasetName::Rest => "rest",
            DatasetName::Twitter => "twitter",
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laptop" => Ok(DatasetName::Laptop),
            "rest" | "restaurant" => Ok(DatasetName::Rest),
            "twitter" => Ok(DatasetName::Twitter),
            _ => Err(Error::Config(format!("unknown dataset `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub variant: Variant,
    pub dim_w: usize,
    pub dim_h: usize,
    pub p_lstm: f64,
    pub p_sent: f64,
    pub layers: usize,
    pub batch_size: usize,
    pub kernel_size: usize,
    pub kernels: usize,
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub heldout_fraction: f64,
    pub share_target_encoder: bool,
    pub per_layer_params: bool,
    pub scale_final_extra: bool,
    pub freeze_embeddings: bool,
}

impl Hyperparams {
    /// Published settings for `variant` on `dataset`. Variants outside the
    /// two TNet rows borrow the column of the strategy they use.
    pub fn defaults(variant: Variant, dataset: DatasetName) -> Self {
        let adaptive = variant.adaptive_scaling_family();
        let batch_size = match (adaptive, dataset) {
            (true, DatasetName::Rest) => 32,
            (false, DatasetName::Rest) => 25,
            _ => 64,
        };
        Self {
            variant,
            dim_w: 300,
            dim_h: 50,
            p_lstm: 0.3,
            p_sent: 0.3,
            layers: 2,
            batch_size,
            kernel_size: 3,
            kernels: if adaptive { 100 } else { 50 },
            c: if adaptive { 30.0 } else { 40.0 },
            epochs: 100,
            seed: 0,
            learning_rate: 0.001,
            heldout_fraction: 0.2,
            share_target_encoder: false,
            per_layer_params: false,
            scale_final_extra: false,
            freeze_embeddings: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.heldout_fraction > 0.0 && self.heldout_fraction < 1.0) {
            return Err(Error::Config("heldout_fraction must be in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            dim_w: self.dim_w,
            dim_h: self.dim_h,
            layers: self.layers,
            kernel_size: self.kernel_size,
            kernels: self.kernels,
            c: self.c,
            p_lstm: self.p_lstm,
            p_sent: self.p_sent,
            share_target_encoder: self.share_target_encoder,
            per_layer_params: self.per_layer_params,
            scale_final_extra: self.scale_final_extra,
        }
    }
}

/// `−ln p[gold]` for a probability vector.
pub fn cross_entropy(probs: &[f64], gold: Label) -> Result<f64> {
    let total: f64 = probs.iter().sum();
    if probs.len() != 3 || probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("not a distribution: {probs:?}")));
    }
    Ok(-probs[gold.index()].ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// One bias-corrected update of every parameter that has a gradient.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, g) in grads {
            let p = params.get_mut(name)?;
            if p.shape() != g.shape() {
                return Err(Error::shape("adam_step", &[p.shape(), g.shape()]));
            }
            let m = self.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            let (b1, b2) = (self.beta1, self.beta2);
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                *w -= self.learning_rate * (*mi / c1) / ((*vi / c2).sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

pub fn adam_step(params: &mut ParamStore, grads: &BTreeMap<String, Tensor>, state: &mut AdamState) -> Result<()> {
    state.step(params, grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`,
/// otherwise `1 / (1 − rate)`.
pub fn dropout_mask<R: RngCore + ?Sized>(shape: &[usize], rate: f64, rng: &mut R) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    let keep = 1.0 / (1.0 - rate);
    let mut mask = Tensor::zeros(shape);
    for x in mask.data_mut() {
        *x = if rng.random::<f64>() < rate { 0.0 } else { keep };
    }
    Ok(mask)
}

pub fn apply_dropout<R: RngCore + ?Sized>(x: &Tensor, rate: f64, mode: Mode, rng: &mut R) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(x.clone());
    }
    let mask = dropout_mask(x.shape(), rate, rng)?;
    let data = x.data().iter().zip(mask.data()).map(|(a, b)| a * b).collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Shuffles indices with `seed` and returns sorted (train, held-out) index
/// lists; the held-out side receives `round(fraction · len)` items.
pub fn heldout_split(len: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("held-out fraction must be in (0, 1), got {fraction}")));
    }
    if len < 5 {
        return Err(Error::Config(format!("need at least 5 records to split, got {len}")));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let held = ((fraction * len as f64).round() as usize).clamp(1, len - 1);
    let mut heldout = order[..held].to_vec();
    let mut train = order[held..].to_vec();
    heldout.sort_unstable();
    train.sort_unstable();
    Ok((train, heldout))
}

pub fn shuffle_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]))
}

/// Well-mixed 64-bit seed for one (epoch, batch, example) slot.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut s = seed;
    for &p in parts {
        s = splitmix(s ^ splitmix(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    s
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct BatchGradient {
    /// Mean loss over the batch.
    pub loss: f64,
    /// Gradient of the mean loss.
    pub grads: Gradients,
}

/// Mean loss and gradient over `batch`. With `dropout_seeds`, example `i`
/// draws its dropout masks from `ChaCha8Rng::seed_from_u64(dropout_seeds[i])`.
pub fn batch_gradient(
    config: &ModelConfig,
    params: &ParamStore,
    batch: &[&EncodedExample],
    dropout_seeds: Option<&[u64]>,
) -> Result<BatchGradient> {
    batch_gradient_with(Schedule::default(), config, params, batch, dropout_seeds)
}

/// [`batch_gradient`] with an explicit schedule. Both schedules give
/// bit-identical results.
pub fn batch_gradient_with(
    schedule: Schedule,
    config: &ModelConfig,
    params: &ParamStore,
    batch: &[&EncodedExample],
    dropout_seeds: Option<&[u64]>,
) -> Result<BatchGradient> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let chunks: Vec<usize> = (0..batch.len()).step_by(GRAD_CHUNK).collect();
    let partials = exec::map_with(schedule, &chunks, |&start| -> Result<(f64, Gradients)> {
        let mut loss = 0.0;
        let mut grads = Gradients::default();
        for i in start..(start + GRAD_CHUNK).min(batch.len()) {
            let mut g = Graph::new();
            let mut rng = dropout_seeds.map(|s| ChaCha8Rng::seed_from_u64(s[i]));
            let out = config.forward(&mut g, params, batch[i], rng.as_mut().map(|r| r as &mut dyn RngCore))?;
            let l = out.loss.ok_or_else(|| Error::Config("training example has no label".into()))?;
            loss += g.value(l).item();
            grads.accumulate(&g.backward(l)?);
        }
        Ok((loss, grads))
    });
    let mut loss = 0.0;
    let mut grads = Gradients::default();
    for part in partials {
        let (l, g) = part?;
        loss += l;
        grads.accumulate(&g);
    }
    let k = 1.0 / batch.len() as f64;
    grads.scale(k);
    Ok(BatchGradient { loss: loss * k, grads })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub train_loss: Vec<f64>,
    pub heldout_accuracy: Vec<f64>,
    pub heldout_macro_f1: Vec<f64>,
    /// 0-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl RunHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }
}

pub fn predict_all(model: &Model, examples: &[EncodedExample]) -> Result<Vec<Label>> {
    predict_all_with(Schedule::default(), model, examples)
}

pub fn predict_all_with(schedule: Schedule, model: &Model, examples: &[EncodedExample]) -> Result<Vec<Label>> {
    exec::map_with(schedule, examples, |ex| model.predict(ex).map(|p| p.label))
        .into_iter()
        .collect()
}

pub fn evaluate(model: &Model, examples: &[EncodedExample]) -> Result<EvalReport> {
    let preds = predict_all(model, examples)?;
    let golds = examples
        .iter()
        .map(|e| e.label.ok_or_else(|| Error::Config("evaluation example has no label".into())))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::new(&preds, &golds)
}

/// One pass over `train` in a freshly shuffled `order`; returns the mean
/// training loss. Dropout masks are seeded per (epoch, batch, example).
pub fn train_epoch(
    model: &mut Model,
    train: &[EncodedExample],
    adam: &mut AdamState,
    hyper: &Hyperparams,
    epoch: usize,
    order: &mut [usize],
    shuffle_rng: &mut ChaCha8Rng,
) -> Result<f64> {
    order.shuffle(shuffle_rng);
    let mut epoch_loss = 0.0;
    for (b, idx) in order.chunks(hyper.batch_size).enumerate() {
        let batch: Vec<&EncodedExample> = idx.iter().map(|&i| &train[i]).collect();
        let seeds: Vec<u64> = (0..batch.len())
            .map(|i| derive_seed(hyper.seed, &[2, epoch as u64, b as u64, i as u64]))
            .collect();
        let bg = batch_gradient(&model.config, &model.params, &batch, Some(&seeds))?;
        if !bg.loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: b,
                norms: model
                    .params
                    .norms()
                    .iter()
                    .map(|(n, v)| format!("{n}={v:.3e}"))
                    .collect::<Vec<_>>()
                    .join(", "),
            });
        }
        epoch_loss += bg.loss * batch.len() as f64;
        apply_gradient(model, &bg.grads, adam, hyper.freeze_embeddings)?;
    }
    Ok(epoch_loss / train.len() as f64)
}

/// Adam update from a batch gradient. The padding embedding row never
/// moves; with `freeze_embeddings` no embedding row does.
pub fn apply_gradient(model: &mut Model, grads: &Gradients, adam: &mut AdamState, freeze_embeddings: bool) -> Result<()> {
    let mut dense = grads.to_dense(&model.params);
    if freeze_embeddings {
        dense.remove(EMBEDDING);
    } else if let Some(e) = dense.get_mut(EMBEDDING) {
        e.row_mut(PAD_ID).fill(0.0);
    }
    adam.step(&mut model.params, &dense)
}

/// Trains `model` on `train` and keeps the parameters with the best accuracy
/// on `heldout`; ties go to the earlier epoch.
pub fn fit(mut model: Model, train: &[EncodedExample], heldout: &[EncodedExample], hyper: &Hyperparams) -> Result<(Model, RunHistory)> {
    hyper.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if heldout.is_empty() {
        return Err(Error::Empty("held-out set"));
    }
    let mut adam = AdamState::new(hyper.learning_rate);
    let mut shuffle_rng = shuffle_rng(hyper.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = RunHistory {
        train_loss: Vec::with_capacity(hyper.epochs),
        heldout_accuracy: Vec::with_capacity(hyper.epochs),
        heldout_macro_f1: Vec::with_capacity(hyper.epochs),
        best_epoch: 0,
    };
    let mut best: Option<(f64, ParamStore)> = None;

    for epoch in 0..hyper.epochs {
        let epoch_loss = train_epoch(&mut model, train, &mut adam, hyper, epoch, &mut order, &mut shuffle_rng)?;
        history.train_loss.push(epoch_loss);

        let report = evaluate(&model, heldout)?;
        history.heldout_accuracy.push(report.accuracy);
        history.heldout_macro_f1.push(report.macro_f1);
        if best.as_ref().is_none_or(|(acc, _)| report.accuracy > *acc) {
            best = Some((report.accuracy, model.params.clone()));
            history.best_epoch = epoch;
        }
        log::info!(
            "epoch {epoch}: loss {:.4} held-out acc {:.4} f1 {:.4}",
            history.train_loss[epoch],
            report.accuracy,
            report.macro_f1
        );
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok((model, history))
}

/// Splits off a held-out portion of `examples`, initializes a model from
/// `embedding_matrix` and trains it.
pub fn train(examples: &[EncodedExample], embedding_matrix: &Tensor, hyper: &Hyperparams) -> Result<(Model, RunHistory)> {
    hyper.validate()?;
    let (tr, ho) = heldout_split(examples.len(), hyper.heldout_fraction, derive_seed(hyper.seed, &[0]))?;
    let train_set: Vec<EncodedExample> = tr.iter().map(|&i| examples[i].clone()).collect();
    let heldout: Vec<EncodedExample> = ho.iter().map(|&i| examples[i].clone()).collect();
    let model = init_model(hyper, embedding_matrix)?;
    fit(model, &train_set, &heldout, hyper)
}

/// A fresh model for `hyper` using a copy of `embedding_matrix`.
pub fn init_model(hyper: &Hyperparams, embedding_matrix: &Tensor) -> Result<Model> {
    let config = hyper.model_config();
    config.validate()?;
    if embedding_matrix.cols() != config.dim_w {
        return Err(Error::Config(format!(
            "embedding width {} does not match dim_w {}",
            embedding_matrix.cols(),
            config.dim_w
        )));
    }
    let mut params = ParamStore::new();
    let mut matrix = embedding_matrix.clone();
    matrix.row_mut(PAD_ID).fill(0.0);
    params.insert(EMBEDDING, matrix);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(hyper.seed, &[3]));
    config.init_params(&mut params, crate::model::INIT_SCALE, &mut rng)?;
    Model::from_parts(config, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_examples() {
        let third = 1.0 / 3.0;
        assert!((cross_entropy(&[third; 3], Label::Neutral).unwrap() - 3f64.ln()).abs() < 1e-12);
        assert_eq!(cross_entropy(&[1.0, 0.0, 0.0], Label::Positive).unwrap(), 0.0);
        assert!((cross_entropy(&[0.5, 0.25, 0.25], Label::Positive).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(cross_entropy(&[0.5, 0.2, 0.2], Label::Positive).is_err());
    }

    fn one_param(value: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::vector(vec![value]));
        p
    }

    fn grad(value: f64) -> BTreeMap<String, Tensor> {
        BTreeMap::from([("w".to_string(), Tensor::vector(vec![value]))])
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // m̂ = g and v̂ = g² at t = 1, so the update is α·g/(|g| + ε)
        let mut p = one_param(1.0);
        let mut s = AdamState::new(0.001);
        adam_step(&mut p, &grad(0.5), &mut s).unwrap();
        let expect = 1.0 - 0.001 * 0.5 / (0.5 + 1e-8);
        assert!((p.get("w").unwrap().item() - expect).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_keeps_params_and_decays_moments() {
        let mut p = one_param(1.0);
        let mut s = AdamState::new(0.001);
        adam_step(&mut p, &grad(2.0), &mut s).unwrap();
        let after_one = p.get("w").unwrap().item();
        let m1 = s.m["w"].item();
        adam_step(&mut p, &grad(0.0), &mut s).unwrap();
        assert!((s.m["w"].item() - 0.9 * m1).abs() < 1e-15);
        // bias-corrected momentum still carries the earlier gradient
        assert!(p.get("w").unwrap().item() < after_one);
        let mut fresh = one_param(1.0);
        let mut s = AdamState::new(0.001);
        adam_step(&mut fresh, &grad(0.0), &mut s).unwrap();
        assert_eq!(fresh.get("w").unwrap().item(), 1.0);
    }

    #[test]
    fn adam_constant_gradient_moves_monotonically() {
        let mut p = one_param(0.0);
        let mut s = AdamState::new(0.001);
        adam_step(&mut p, &grad(-3.0), &mut s).unwrap();
        let first = p.get("w").unwrap().item();
        adam_step(&mut p, &grad(-3.0), &mut s).unwrap();
        let second = p.get("w").unwrap().item();
        assert!(0.0 < first && first < second);
        // with constant g both bias-corrected moments equal g and g²
        assert!((second - 2.0 * 0.001 * 3.0 / (3.0 + 1e-8)).abs() < 1e-12);
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut p = one_param(0.0);
        let g = BTreeMap::from([("w".to_string(), Tensor::vector(vec![1.0, 2.0]))]);
        assert!(AdamState::new(0.001).step(&mut p, &g).is_err());
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::vector(vec![1.0, -2.0, 3.0]);
        assert_eq!(apply_dropout(&x, 0.0, Mode::Train, &mut rng).unwrap(), x);
        assert_eq!(apply_dropout(&x, 0.0, Mode::Eval, &mut rng).unwrap(), x);
        assert_eq!(apply_dropout(&x, 0.9, Mode::Eval, &mut rng).unwrap(), x);
        assert!(apply_dropout(&x, 1.0, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropout_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::full(&[100_000], 1.0);
        let y = apply_dropout(&x, 0.3, Mode::Train, &mut rng).unwrap();
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e5;
        let mean = y.data().iter().sum::<f64>() / 1e5;
        assert!((zeros - 0.3).abs() < 0.01, "{zeros}");
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn split_sizes_and_determinism() {
        let (tr, ho) = heldout_split(100, 0.2, 5).unwrap();
        assert_eq!((tr.len(), ho.len()), (80, 20));
        let mut all: Vec<usize> = tr.iter().chain(&ho).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(heldout_split(100, 0.2, 5).unwrap(), (tr, ho.clone()));
        let distinct: std::collections::BTreeSet<Vec<usize>> =
            (0..10).map(|s| heldout_split(100, 0.2, s).unwrap().1).collect();
        assert_eq!(distinct.len(), 10);
        assert!(heldout_split(4, 0.2, 0).is_err());
        assert!(heldout_split(10, 1.0, 0).is_err());
    }

    #[test]
    fn table_defaults() {
        let h = Hyperparams::defaults(Variant::TnetAs, DatasetName::Rest);
        assert_eq!((h.batch_size, h.kernels, h.c), (32, 100, 30.0));
        let h = Hyperparams::defaults(Variant::TnetLf, DatasetName::Rest);
        assert_eq!((h.batch_size, h.kernels, h.c), (25, 50, 40.0));
        for d in [DatasetName::Laptop, DatasetName::Twitter] {
            assert_eq!(Hyperparams::defaults(Variant::TnetLf, d).batch_size, 64);
            assert_eq!(Hyperparams::defaults(Variant::TnetAs, d).batch_size, 64);
        }
        let h = Hyperparams::defaults(Variant::TnetLf, DatasetName::Laptop);
        assert_eq!((h.dim_w, h.dim_h, h.layers, h.kernel_size, h.p_lstm, h.p_sent), (300, 50, 2, 3, 0.3, 0.3));
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, &[2, 0, 0, 0]);
        let b = derive_seed(1, &[2, 0, 0, 1]);
        let c = derive_seed(2, &[2, 0, 0, 0]);
        assert!(a != b && a != c && b != c);
    }
}
