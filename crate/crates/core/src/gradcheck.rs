//! Backward pass vs. central finite differences on a tiny model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{finite_difference_gradient, relative_error, Graph};
use crate::error::{Error, Result};
use crate::model::{randomized_params, Model, ModelConfig, Variant};
use crate::pipeline::{EmbeddingStore, EncodedExample, Label, TargetedSentence, Vocabulary};
use crate::trainer::{DatasetName, Hyperparams};

pub const TOLERANCE: f64 = 1e-4;
pub const EPSILON: f64 = 1e-5;
/// Denominator floor for the relative error, so gradients that are zero
/// on both sides compare as equal.
pub const ERROR_FLOOR: f64 = 1e-6;
/// Parameters are drawn from `U(−PARAM_SCALE, PARAM_SCALE)` so every
/// gradient is well away from zero.
pub const PARAM_SCALE: f64 = 0.5;

const SENTENCE: &str = "the battery life is not great";
const TARGET: &str = "battery life";
/// One padding slot beyond the six-word sentence.
const PAD_LEN: usize = 7;

pub fn tiny_config(variant: Variant) -> ModelConfig {
    let mut h = Hyperparams::defaults(variant, DatasetName::Laptop);
    h.dim_w = 8;
    h.dim_h = 4;
    h.layers = 2;
    h.kernels = 3;
    h.kernel_size = 2;
    h.p_lstm = 0.0;
    h.p_sent = 0.0;
    h.model_config()
}

/// Tiny model with randomized parameters and one labeled example
/// (`n = 6`, `m = 2`).
pub fn tiny_problem(config: ModelConfig, seed: u64) -> Result<(Model, EncodedExample)> {
    let record = TargetedSentence::locate(SENTENCE, TARGET, None, Label::Negative)?;
    let vocab = Vocabulary::build(record.tokens.iter().map(String::as_str));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let emb = EmbeddingStore::random(vocab.clone(), config.dim_w, &mut rng);
    let model = Model::new(config, &emb, &mut rng)?;
    let params = randomized_params(&model.params, PARAM_SCALE, &mut rng);
    let ex = EncodedExample::encode(&record, &vocab, PAD_LEN)?;
    Ok((Model::from_parts(model.config, params)?, ex))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub name: String,
    pub scalars: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub variant: Variant,
    pub tolerance: f64,
    pub groups: Vec<GroupResult>,
    pub passed: bool,
}

/// Compares analytic and numeric gradients for every named parameter.
/// `corrupt` names a parameter whose analytic gradient is deliberately
/// offset before comparison.
pub fn check_model(model: &Model, ex: &EncodedExample, variant: Variant, corrupt: Option<&str>) -> Result<GradCheckReport> {
    let mut g = Graph::new();
    let out = model.config.forward(&mut g, &model.params, ex, None)?;
    let loss = out.loss.ok_or_else(|| Error::Config("gradient check needs a label".into()))?;
    let mut grads = g.backward(loss)?;
    if let Some(name) = corrupt {
        grads.perturb(name, 0, 1e-2)?;
    }
    let analytic = grads.to_dense(&model.params);
    let numeric = finite_difference_gradient(|p| model.config.loss(p, ex), &model.params, EPSILON)?;

    let groups: Vec<GroupResult> = analytic
        .iter()
        .map(|(name, a)| {
            let n = &numeric[name];
            let max_rel_error = a
                .data()
                .iter()
                .zip(n.data())
                .map(|(&x, &y)| relative_error(x, y, ERROR_FLOOR))
                .fold(0.0, f64::max);
            GroupResult {
                name: name.clone(),
                scalars: a.len(),
                max_rel_error,
                passed: max_rel_error < TOLERANCE,
            }
        })
        .collect();
    let passed = groups.iter().all(|g| g.passed);
    Ok(GradCheckReport {
        variant,
        tolerance: TOLERANCE,
        groups,
        passed,
    })
}

pub fn gradcheck(variant: Variant, seed: u64, corrupt: Option<&str>) -> Result<GradCheckReport> {
    let (model, ex) = tiny_problem(tiny_config(variant), seed)?;
    check_model(&model, &ex, variant, corrupt)
}
