//! Context-preserving transformation layers.
//!
//! Every function here works on whole sentences at once: `h` is `[n × d]`
//! with one word per row, `h_tau` is `[m × d]` with one target word per row,
//! and row `i` of each result is the per-word quantity for word `i`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// How transformed features are combined with the layer input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// `h + h̃`
    LosslessForwarding,
    /// `t ⊙ h̃ + (1 − t) ⊙ h` with `t = σ(W_trans h + b_trans)`
    AdaptiveScaling,
    /// `h̃` alone
    None,
}

/// Per-word transformation inside a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Target-specific transformation with a per-word target mixture.
    Tst,
    /// Fully-connected layer over the word and the averaged target.
    Fc,
    /// `h̃ = h`
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CptConfig {
    pub layers: usize,
    pub strategy: Strategy,
    pub transform: Transform,
    pub apply_position: bool,
    /// Separate transformation and gate weights for every layer.
    pub per_layer_params: bool,
    /// Scale the last layer's output by the position weights a second time.
    pub scale_final_extra: bool,
}

impl CptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 {
            return Err(Error::Config(format!("CPT layer count must be >= 1, got {}", self.layers)));
        }
        Ok(())
    }

    fn layer_prefix(&self, layer: usize) -> String {
        if self.per_layer_params {
            format!("cpt.{layer}")
        } else {
            "cpt".to_string()
        }
    }

    /// Parameter names used by `layer`.
    pub fn layer_params(&self, layer: usize) -> LayerParams {
        let p = self.layer_prefix(layer);
        LayerParams {
            transform: match self.transform {
                Transform::Identity => None,
                _ => Some(TstParams::named(&format!("{p}.transform"))),
            },
            gate: match self.strategy {
                Strategy::AdaptiveScaling => Some(GateParams::named(&format!("{p}.gate"))),
                _ => None,
            },
        }
    }

    /// Distinct parameter sets, one per layer or a single shared one.
    fn param_sets(&self) -> Vec<LayerParams> {
        let n = if self.per_layer_params { self.layers } else { 1 };
        (0..n).map(|l| self.layer_params(l)).collect()
    }

    /// Registers weights from `U(−scale, scale)` and zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, width: usize, scale: f64, rng: &mut R) {
        for set in self.param_sets() {
            if let Some(t) = &set.transform {
                store.insert(&t.weight, Tensor::uniform(&[width, 2 * width], -scale, scale, rng));
                store.insert(&t.bias, Tensor::zeros(&[width]));
            }
            if let Some(gp) = &set.gate {
                store.insert(&gp.weight, Tensor::uniform(&[width, width], -scale, scale, rng));
                store.insert(&gp.bias, Tensor::zeros(&[width]));
            }
        }
    }
}

/// `W^τ: [d × 2d]`, `b^τ: [d]`; activation is tanh.
#[derive(Debug, Clone)]
pub struct TstParams {
    pub weight: String,
    pub bias: String,
}

impl TstParams {
    pub fn named(prefix: &str) -> Self {
        Self {
            weight: format!("{prefix}.weight"),
            bias: format!("{prefix}.bias"),
        }
    }

    pub fn bind<'a>(&self, g: &mut Graph<'a>, store: &'a ParamStore) -> Result<Dense> {
        Ok(Dense {
            weight: g.param(&self.weight, store.get(&self.weight)?),
            bias: g.param(&self.bias, store.get(&self.bias)?),
        })
    }
}

/// `W_trans: [d × d]`, `b_trans: [d]`.
#[derive(Debug, Clone)]
pub struct GateParams {
    pub weight: String,
    pub bias: String,
}

impl GateParams {
    pub fn named(prefix: &str) -> Self {
        Self {
            weight: format!("{prefix}.weight"),
            bias: format!("{prefix}.bias"),
        }
    }

    pub fn bind<'a>(&self, g: &mut Graph<'a>, store: &'a ParamStore) -> Result<Dense> {
        Ok(Dense {
            weight: g.param(&self.weight, store.get(&self.weight)?),
            bias: g.param(&self.bias, store.get(&self.bias)?),
        })
    }
}

#[derive(Debug, Clone)]
pub struct LayerParams {
    pub transform: Option<TstParams>,
    pub gate: Option<GateParams>,
}

/// A weight matrix and bias bound into a graph.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub weight: Var,
    pub bias: Var,
}

impl Dense {
    /// `x · Wᵀ + b` over the rows of `x`.
    pub fn apply(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let y = g.matmul_bt(x, self.weight)?;
        g.add_bias(y, self.bias)
    }
}

/// Row `i` holds `softmax_j(h_i · h_tau_j)`.
pub fn target_attention(g: &mut Graph<'_>, h: Var, h_tau: Var) -> Result<Var> {
    let scores = g.matmul_bt(h, h_tau)?;
    Ok(g.softmax(scores))
}

/// Row `i` holds `Σ_j weights[i][j] · h_tau_j`.
pub fn tailor_target(g: &mut Graph<'_>, weights: Var, h_tau: Var) -> Result<Var> {
    g.matmul(weights, h_tau)
}

/// `tanh(W^τ [h_i : r^τ_i] + b^τ)` for every word.
pub fn tst(g: &mut Graph<'_>, h: Var, h_tau: Var, params: &Dense) -> Result<Var> {
    let weights = target_attention(g, h, h_tau)?;
    let r = tailor_target(g, weights, h_tau)?;
    let joined = g.concat_cols(h, r)?;
    let pre = params.apply(g, joined)?;
    Ok(g.tanh(pre))
}

/// Like [`tst`] but with the unweighted target mean in place of `r^τ_i`.
pub fn fc_transform(g: &mut Graph<'_>, h: Var, h_tau_mean: Var, params: &Dense) -> Result<Var> {
    let n = g.shape(h)[0];
    let rows = vec![h_tau_mean; n];
    let mean = g.stack_rows(&rows)?;
    let joined = g.concat_cols(h, mean)?;
    let pre = params.apply(g, joined)?;
    Ok(g.tanh(pre))
}

pub fn lossless_forward(g: &mut Graph<'_>, h: Var, h_tilde: Var) -> Result<Var> {
    g.add(h, h_tilde)
}

/// `σ(h · W_transᵀ + b_trans)` for every word.
pub fn gate(g: &mut Graph<'_>, h: Var, params: &Dense) -> Result<Var> {
    let pre = params.apply(g, h)?;
    Ok(g.sigmoid(pre))
}

pub fn adaptive_scale(g: &mut Graph<'_>, h: Var, h_tilde: Var, params: &Dense) -> Result<Var> {
    let t = gate(g, h, params)?;
    let a = g.mul(t, h_tilde)?;
    let keep = g.one_minus(t);
    let b = g.mul(keep, h)?;
    g.add(a, b)
}

/// Runs `config.layers` CPT layers over `h0`. When `config.apply_position`
/// is set, each layer's output rows are scaled by `position`.
pub fn cpt_stack<'a>(
    g: &mut Graph<'a>,
    h0: Var,
    h_tau: Var,
    config: &CptConfig,
    store: &'a ParamStore,
    position: &[f64],
) -> Result<Var> {
    config.validate()?;
    if position.len() != g.shape(h0)[0] {
        return Err(Error::shape("cpt_stack", &[g.shape(h0), &[position.len()]]));
    }
    let h_tau_mean = match config.transform {
        Transform::Fc => Some(g.mean_rows(h_tau)?),
        _ => None,
    };
    let mut h = h0;
    for layer in 0..config.layers {
        let lp = config.layer_params(layer);
        let tilde = match (config.transform, &lp.transform) {
            (Transform::Tst, Some(p)) => {
                let d = p.bind(g, store)?;
                tst(g, h, h_tau, &d)?
            }
            (Transform::Fc, Some(p)) => {
                let d = p.bind(g, store)?;
                fc_transform(g, h, h_tau_mean.expect("computed above"), &d)?
            }
            _ => h,
        };
        let next = match (config.strategy, &lp.gate) {
            (Strategy::LosslessForwarding, _) => lossless_forward(g, h, tilde)?,
            (Strategy::AdaptiveScaling, Some(p)) => {
                let d = p.bind(g, store)?;
                adaptive_scale(g, h, tilde, &d)?
            }
            _ => tilde,
        };
        h = if config.apply_position {
            g.scale_rows(next, position)?
        } else {
            next
        };
    }
    if config.apply_position && config.scale_final_extra {
        h = g.scale_rows(h, position)?;
    }
    Ok(h)
}
