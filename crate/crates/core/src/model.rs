//! Full TNet pipeline and its ablations.
//!
//! embeddings → sentence/target BiLSTM → feature stack (CPT layers or an
//! alternative) → position-weighted convolution → max pooling → softmax.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::cpt::{cpt_stack, CptConfig, Strategy, Transform};
use crate::encoders::{encode_sentence, encode_target, BiLstmParams, LstmDims};
use crate::error::{Error, Result};
use crate::head::{
    argmax, classify, convolve, max_pool, probabilities, ClassifierParams, ConvParams, PositionWeights,
};
use crate::params::ParamStore;
use crate::pipeline::{EmbeddingStore, EncodedExample, Label, PAD_ID};
use crate::tensor::Tensor;
use crate::trainer::dropout_mask;

/// Weight matrices are drawn from `U(−INIT_SCALE, INIT_SCALE)`; biases start at 0.
pub const INIT_SCALE: f64 = 0.01;

pub const EMBEDDING: &str = "embedding";
const SENTENCE_LSTM: &str = "sentence_lstm";
const TARGET_LSTM: &str = "target_lstm";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    TnetLf,
    TnetAs,
    LstmFcCnnLf,
    LstmFcCnnAs,
    LstmAttCnn,
    WoTransformation,
    WoContext,
    WoPositionLf,
    WoPositionAs,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::TnetLf,
        Variant::TnetAs,
        Variant::LstmFcCnnLf,
        Variant::LstmFcCnnAs,
        Variant::LstmAttCnn,
        Variant::WoTransformation,
        Variant::WoContext,
        Variant::WoPositionLf,
        Variant::WoPositionAs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::TnetLf => "tnet-lf",
            Variant::TnetAs => "tnet-as",
            Variant::LstmFcCnnLf => "lstm-fc-cnn-lf",
            Variant::LstmFcCnnAs => "lstm-fc-cnn-as",
            Variant::LstmAttCnn => "lstm-att-cnn",
            Variant::WoTransformation => "wo-transformation",
            Variant::WoContext => "wo-context",
            Variant::WoPositionLf => "wo-position-lf",
            Variant::WoPositionAs => "wo-position-as",
        }
    }

    /// Whether the variant takes its defaults from the adaptive-scaling
    /// column of the hyper-parameter table.
    pub fn adaptive_scaling_family(self) -> bool {
        matches!(self, Variant::TnetAs | Variant::LstmFcCnnAs | Variant::WoPositionAs)
    }

    pub fn uses_proximity(self) -> bool {
        !matches!(self, Variant::WoPositionLf | Variant::WoPositionAs)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

/// What sits between the BiLSTM and the convolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureStack {
    Cpt(CptConfig),
    /// Dot-product attention of each word against the averaged target;
    /// word rows are scaled by their attention weight.
    TargetAttention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub dim_w: usize,
    pub dim_h: usize,
    pub layers: usize,
    pub kernel_size: usize,
    pub kernels: usize,
    pub c: f64,
    pub p_lstm: f64,
    pub p_sent: f64,
    pub share_target_encoder: bool,
    pub per_layer_params: bool,
    pub scale_final_extra: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim_w", self.dim_w),
            ("dim_h", self.dim_h),
            ("layers", self.layers),
            ("kernel_size", self.kernel_size),
            ("kernels", self.kernels),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.c > 0.0) {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        for (name, p) in [("p_lstm", self.p_lstm), ("p_sent", self.p_sent)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {p}")));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        2 * self.dim_h
    }

    pub fn feature_stack(&self) -> FeatureStack {
        let cpt = |layers, strategy, transform| {
            FeatureStack::Cpt(CptConfig {
                layers,
                strategy,
                transform,
                apply_position: true,
                per_layer_params: self.per_layer_params,
                scale_final_extra: self.scale_final_extra,
            })
        };
        use Strategy::*;
        match self.variant {
            Variant::TnetLf | Variant::WoPositionLf => cpt(self.layers, LosslessForwarding, Transform::Tst),
            Variant::TnetAs | Variant::WoPositionAs => cpt(self.layers, AdaptiveScaling, Transform::Tst),
            Variant::LstmFcCnnLf => cpt(self.layers, LosslessForwarding, Transform::Fc),
            Variant::LstmFcCnnAs => cpt(self.layers, AdaptiveScaling, Transform::Fc),
            Variant::WoContext => cpt(self.layers, None, Transform::Tst),
            Variant::WoTransformation => cpt(1, None, Transform::Identity),
            Variant::LstmAttCnn => FeatureStack::TargetAttention,
        }
    }

    fn sentence_encoder(&self) -> BiLstmParams {
        BiLstmParams::named(SENTENCE_LSTM)
    }

    fn target_encoder(&self) -> BiLstmParams {
        if self.share_target_encoder {
            BiLstmParams::named(SENTENCE_LSTM)
        } else {
            BiLstmParams::named(TARGET_LSTM)
        }
    }

    /// Registers every learnable tensor except the embedding matrix.
    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, scale: f64, rng: &mut R) -> Result<()> {
        self.validate()?;
        let dims = LstmDims {
            input: self.dim_w,
            hidden: self.dim_h,
        };
        self.sentence_encoder().init(store, dims, scale, rng);
        if !self.share_target_encoder {
            self.target_encoder().init(store, dims, scale, rng);
        }
        if let FeatureStack::Cpt(cpt) = self.feature_stack() {
            cpt.init_params(store, self.width(), scale, rng);
        }
        ConvParams::new(self.kernel_size).init(store, self.kernels, self.width(), scale, rng);
        ClassifierParams::default().init(store, self.kernels, scale, rng);
        Ok(())
    }

    pub fn position_weights(&self, ex: &EncodedExample) -> Result<PositionWeights> {
        if self.variant.uses_proximity() {
            ex.position(self.c)
        } else {
            PositionWeights::mask_only(ex.len, ex.padded_len())
        }
    }

    /// Builds the forward pass for one example on `g`. With `dropout` set,
    /// inverted dropout masks are drawn from it for the LSTM inputs and for
    /// the pooled sentence vector.
    pub fn forward<'a>(
        &self,
        g: &mut Graph<'a>,
        params: &'a ParamStore,
        ex: &EncodedExample,
        mut dropout: Option<&mut dyn RngCore>,
    ) -> Result<ForwardOutput> {
        if ex.len == 0 {
            return Err(Error::Empty("sentence"));
        }
        let position = self.position_weights(ex)?;
        let emb = params.get(EMBEDDING)?;

        let mut x = g.param_rows(EMBEDDING, emb, &ex.ids)?;
        let mut x_tau = g.param_rows(EMBEDDING, emb, ex.target_ids())?;
        if let Some(rng) = dropout.as_mut() {
            if self.p_lstm > 0.0 {
                let mask = dropout_mask(g.shape(x), self.p_lstm, rng)?;
                x = g.mul_const(x, mask)?;
                let mask = dropout_mask(g.shape(x_tau), self.p_lstm, rng)?;
                x_tau = g.mul_const(x_tau, mask)?;
            }
        }

        let h0 = encode_sentence(g, x, &self.sentence_encoder(), params)?;
        let h_tau = encode_target(g, x_tau, &self.target_encoder(), params)?;

        let features = match self.feature_stack() {
            FeatureStack::Cpt(cfg) => cpt_stack(g, h0, h_tau, &cfg, params, &position.v)?,
            FeatureStack::TargetAttention => {
                let mean = g.mean_rows(h_tau)?;
                let scores = g.matvec(h0, mean)?;
                let alpha = g.softmax_prefix(scores, ex.len)?;
                let weighted = g.row_scale(h0, alpha)?;
                g.scale_rows(weighted, &position.v)?
            }
        };

        let conv = ConvParams::new(self.kernel_size).bind(g, params)?;
        let maps = convolve(g, features, &conv, self.kernel_size)?;
        let (mut z, pool_argmax) = max_pool(g, maps)?;
        if let Some(rng) = dropout.as_mut() {
            if self.p_sent > 0.0 {
                let mask = dropout_mask(g.shape(z), self.p_sent, rng)?;
                z = g.mul_const(z, mask)?;
            }
        }
        let cls = ClassifierParams::default().bind(g, params)?;
        let logits = classify(g, z, &cls)?;
        let loss = match ex.label {
            Some(label) => Some(g.cross_entropy(logits, label.index())?),
            None => None,
        };
        Ok(ForwardOutput {
            logits,
            loss,
            pool_argmax,
        })
    }

    /// Loss of `ex` under `params` with dropout disabled.
    pub fn loss(&self, params: &ParamStore, ex: &EncodedExample) -> Result<f64> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, params, ex, None)?;
        let loss = out.loss.ok_or(Error::Config("example has no label".into()))?;
        Ok(g.value(loss).item())
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Var,
    pub loss: Option<Var>,
    /// Winning window index for each convolution kernel.
    pub pool_argmax: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    /// Ordered (positive, negative, neutral).
    pub probabilities: [f64; 3],
    pub pool_argmax: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    /// Fresh model whose embedding matrix is taken from `embeddings`.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, embeddings: &EmbeddingStore, rng: &mut R) -> Result<Self> {
        if embeddings.dim() != config.dim_w {
            return Err(Error::Config(format!(
                "embedding width {} does not match dim_w {}",
                embeddings.dim(),
                config.dim_w
            )));
        }
        let mut params = ParamStore::new();
        let mut matrix = embeddings.matrix.clone();
        matrix.row_mut(PAD_ID).fill(0.0);
        params.insert(EMBEDDING, matrix);
        config.init_params(&mut params, INIT_SCALE, rng)?;
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        params.get(EMBEDDING)?;
        Ok(Self { config, params })
    }

    pub fn predict(&self, ex: &EncodedExample) -> Result<Prediction> {
        let mut g = Graph::new();
        let mut unlabeled = ex.clone();
        unlabeled.label = None;
        let out = self.config.forward(&mut g, &self.params, &unlabeled, None)?;
        let p = probabilities(g.value(out.logits).data());
        Ok(Prediction {
            label: Label::from_index(argmax(&p)).expect("three classes"),
            probabilities: [p[0], p[1], p[2]],
            pool_argmax: out.pool_argmax,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }
}

/// A parameter store with every tensor drawn from `U(−scale, scale)`,
/// including biases; the padding embedding row stays zero.
pub fn randomized_params<R: Rng + ?Sized>(params: &ParamStore, scale: f64, rng: &mut R) -> ParamStore {
    let mut out = params.clone();
    for (name, t) in out.iter_mut() {
        *t = Tensor::uniform(t.shape(), -scale, scale, rng);
        if name == EMBEDDING {
            t.row_mut(PAD_ID).fill(0.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{TargetedSentence, Vocabulary};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(variant: Variant) -> ModelConfig {
        ModelConfig {
            variant,
            dim_w: 6,
            dim_h: 3,
            layers: 2,
            kernel_size: 2,
            kernels: 4,
            c: 40.0,
            p_lstm: 0.3,
            p_sent: 0.3,
            share_target_encoder: false,
            per_layer_params: false,
            scale_final_extra: false,
        }
    }

    fn setup(variant: Variant) -> (Model, EncodedExample) {
        let rec = TargetedSentence::locate("the fish was fresh but pricey", "fish", None, Label::Positive).unwrap();
        let vocab = Vocabulary::build(rec.tokens.iter().map(String::as_str));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let emb = EmbeddingStore::random(vocab.clone(), 6, &mut rng);
        let model = Model::new(config(variant), &emb, &mut rng).unwrap();
        let ex = EncodedExample::encode(&rec, &vocab, 8).unwrap();
        (model, ex)
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("tnet".parse::<Variant>().is_err());
    }

    #[test]
    fn every_variant_yields_a_distribution() {
        for v in Variant::ALL {
            let (model, ex) = setup(v);
            let p = model.predict(&ex).unwrap();
            let total: f64 = p.probabilities.iter().sum();
            assert!((total - 1.0).abs() < 1e-9, "{v}");
            assert!(p.probabilities.iter().all(|&x| x > 0.0));
            assert_eq!(p.pool_argmax.len(), 4);
        }
    }

    #[test]
    fn pad_row_starts_at_zero() {
        let (model, _) = setup(Variant::TnetLf);
        assert!(model.params.get(EMBEDDING).unwrap().row(PAD_ID).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dropout_changes_loss_only_in_training() {
        let (model, ex) = setup(Variant::TnetAs);
        let eval = model.config.loss(&model.params, &ex).unwrap();
        assert_eq!(eval, model.config.loss(&model.params, &ex).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = Graph::new();
        let out = model.config.forward(&mut g, &model.params, &ex, Some(&mut rng)).unwrap();
        let train = g.value(out.loss.unwrap()).item();
        assert!(train.is_finite());
    }

    #[test]
    fn parameter_count_independent_of_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let emb = EmbeddingStore::random(Vocabulary::build(["a"]), 6, &mut rng);
        for v in Variant::ALL {
            let mut shallow = config(v);
            shallow.layers = 1;
            let mut deep = config(v);
            deep.layers = 5;
            let a = Model::new(shallow, &emb, &mut rng).unwrap().parameter_count();
            let b = Model::new(deep, &emb, &mut rng).unwrap().parameter_count();
            assert_eq!(a, b, "{v}");
        }
    }

    #[test]
    fn shared_target_encoder_has_fewer_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let emb = EmbeddingStore::random(Vocabulary::build(["a"]), 6, &mut rng);
        let sep = Model::new(config(Variant::TnetLf), &emb, &mut rng).unwrap();
        let mut cfg = config(Variant::TnetLf);
        cfg.share_target_encoder = true;
        let shared = Model::new(cfg, &emb, &mut rng).unwrap();
        assert!(shared.parameter_count() < sep.parameter_count());
        assert!(!shared.params.names().any(|n| n.starts_with(TARGET_LSTM)));
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = config(Variant::TnetLf);
        cfg.layers = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = config(Variant::TnetLf);
        cfg.p_lstm = 1.0;
        assert!(cfg.validate().is_err());
    }
}
