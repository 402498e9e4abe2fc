//! Position relevance, convolutional feature extraction and classification.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{softmax_in_place, Graph, Var};
use crate::cpt::Dense;
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Proximity weights over padded positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionWeights {
    pub v: Vec<f64>,
    /// 1-based index of the first target word.
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub c: f64,
}

impl PositionWeights {
    /// All true positions weighted 1, padding 0. Used when proximity
    /// weighting is ablated.
    pub fn mask_only(n: usize, padded_len: usize) -> Result<Self> {
        if n == 0 || n > padded_len {
            return Err(Error::SpanOutOfRange {
                start: 1,
                end: n,
                len: padded_len,
            });
        }
        let v = (1..=padded_len).map(|i| if i <= n { 1.0 } else { 0.0 }).collect();
        Ok(Self {
            v,
            k: 1,
            m: n,
            n,
            c: f64::INFINITY,
        })
    }
}

/// Relevance of each padded position to a target at `[k, k+m−1]` (1-based):
///
/// - `i < k+m`: `1 − (k+m−i)/C`
/// - `k+m ≤ i ≤ n`: `1 − (i−k)/C`
/// - `i > n`: `0`
///
/// Negative values, which occur only when `C` is smaller than a distance,
/// are clamped to 0.
pub fn position_relevance(k: usize, m: usize, n: usize, padded_len: usize, c: f64) -> Result<PositionWeights> {
    if k < 1 || m < 1 || k + m - 1 > n || n > padded_len {
        return Err(Error::SpanOutOfRange {
            start: k,
            end: (k + m).saturating_sub(1),
            len: n,
        });
    }
    if !(c > 0.0) {
        return Err(Error::Config(format!("position constant C must be positive, got {c}")));
    }
    let (kf, mf) = (k as f64, m as f64);
    let v = (1..=padded_len)
        .map(|i| {
            let fi = i as f64;
            let raw = if i < k + m {
                1.0 - (kf + mf - fi) / c
            } else if i <= n {
                1.0 - (fi - kf) / c
            } else {
                0.0
            };
            raw.max(0.0)
        })
        .collect();
    Ok(PositionWeights { v, k, m, n, c })
}

/// Scales row `i` of `h` by `v_i`.
pub fn apply_position(g: &mut Graph<'_>, h: Var, position: &PositionWeights) -> Result<Var> {
    g.scale_rows(h, &position.v)
}

/// `n_k` kernels of width `s·d`, one scalar bias each.
#[derive(Debug, Clone)]
pub struct ConvParams {
    pub weight: String,
    pub bias: String,
    pub kernel_size: usize,
}

impl ConvParams {
    pub fn new(kernel_size: usize) -> Self {
        Self {
            weight: "conv.weight".into(),
            bias: "conv.bias".into(),
            kernel_size,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, kernels: usize, width: usize, scale: f64, rng: &mut R) {
        store.insert(
            &self.weight,
            Tensor::uniform(&[kernels, self.kernel_size * width], -scale, scale, rng),
        );
        store.insert(&self.bias, Tensor::zeros(&[kernels]));
    }

    pub fn bind<'a>(&self, g: &mut Graph<'a>, store: &'a ParamStore) -> Result<Dense> {
        Ok(Dense {
            weight: g.param(&self.weight, store.get(&self.weight)?),
            bias: g.param(&self.bias, store.get(&self.bias)?),
        })
    }
}

/// Feature maps laid out as `[windows × kernels]`: entry `(i, f)` is
/// `ReLU(kernel_f · [ĥ_i; …; ĥ_{i+s−1}] + b_f)`. Windows slide over the
/// whole padded sequence.
pub fn convolve(g: &mut Graph<'_>, h_hat: Var, kernels: &Dense, kernel_size: usize) -> Result<Var> {
    let rows = g.shape(h_hat)[0];
    if rows < kernel_size {
        return Err(Error::Config(format!(
            "sequence of length {rows} is shorter than kernel size {kernel_size}"
        )));
    }
    let windows = g.unfold(h_hat, kernel_size)?;
    let pre = kernels.apply(g, windows)?;
    Ok(g.relu(pre))
}

/// Max over windows for each kernel, with the winning window index
/// (lowest index on ties).
pub fn max_pool(g: &mut Graph<'_>, maps: Var) -> Result<(Var, Vec<usize>)> {
    let z = g.col_max(maps)?;
    let argmax = g.argmax_rows(z).expect("col_max node").to_vec();
    Ok((z, argmax))
}

/// `W_f: [3 × n_k]`, `b_f: [3]`; outputs are ordered (positive, negative, neutral).
#[derive(Debug, Clone)]
pub struct ClassifierParams {
    pub weight: String,
    pub bias: String,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            weight: "classifier.weight".into(),
            bias: "classifier.bias".into(),
        }
    }
}

pub const NUM_CLASSES: usize = 3;

impl ClassifierParams {
    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, kernels: usize, scale: f64, rng: &mut R) {
        store.insert(&self.weight, Tensor::uniform(&[NUM_CLASSES, kernels], -scale, scale, rng));
        store.insert(&self.bias, Tensor::zeros(&[NUM_CLASSES]));
    }

    pub fn bind<'a>(&self, g: &mut Graph<'a>, store: &'a ParamStore) -> Result<Dense> {
        Ok(Dense {
            weight: g.param(&self.weight, store.get(&self.weight)?),
            bias: g.param(&self.bias, store.get(&self.bias)?),
        })
    }
}

/// Class logits `W_f z + b_f`.
pub fn classify(g: &mut Graph<'_>, z: Var, params: &Dense) -> Result<Var> {
    let logits = g.matvec(params.weight, z)?;
    g.add_bias(logits, params.bias)
}

/// Softmax of logits.
pub fn probabilities(logits: &[f64]) -> Vec<f64> {
    let mut p = logits.to_vec();
    softmax_in_place(&mut p);
    p
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// The window chosen by max pooling for the most kernels, and the first
/// kernel that chose it. Ties go to the lowest window index.
pub fn most_informative_window(argmax: &[usize]) -> Option<(usize, usize)> {
    let max_window = *argmax.iter().max()?;
    let mut counts = vec![0usize; max_window + 1];
    for &w in argmax {
        counts[w] += 1;
    }
    let start = argmax_usize(&counts);
    let kernel = argmax.iter().position(|&w| w == start)?;
    Some((kernel, start))
}

fn argmax_usize(values: &[usize]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::{finite_difference_gradient, relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn position_examples() {
        let p = position_relevance(3, 2, 6, 8, 40.0).unwrap();
        assert!((p.v[1] - 0.925).abs() < 1e-15);
        assert!((p.v[4] - 0.95).abs() < 1e-15);
        assert_eq!(p.v[7], 0.0);
        assert_eq!(p.v.len(), 8);
    }

    #[test]
    fn position_rejects_bad_span() {
        assert!(position_relevance(0, 1, 5, 5, 40.0).is_err());
        assert!(position_relevance(5, 2, 5, 5, 40.0).is_err());
        assert!(position_relevance(1, 1, 6, 5, 40.0).is_err());
        assert!(position_relevance(1, 1, 5, 5, 0.0).is_err());
    }

    #[test]
    fn position_clamps_far_words() {
        let p = position_relevance(1, 1, 10, 10, 3.0).unwrap();
        assert!(p.v.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert_eq!(p.v[9], 0.0);
    }

    #[test]
    fn mask_only_weights() {
        let p = PositionWeights::mask_only(3, 5).unwrap();
        assert_eq!(p.v, vec![1.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn apply_position_scales_rows() {
        let mut g = Graph::new();
        let h = g.constant(Tensor::from_rows(&[vec![2.0, 2.0], vec![4.0, 4.0]]).unwrap());
        let mut p = PositionWeights::mask_only(2, 2).unwrap();
        let same = apply_position(&mut g, h, &p).unwrap();
        assert_eq!(g.value(same), g.value(h));
        p.v = vec![1.0, 0.5];
        let out = apply_position(&mut g, h, &p).unwrap();
        assert_eq!(g.value(out).data(), &[2.0, 2.0, 2.0, 2.0]);
        p.v = vec![0.0, 0.0];
        let out = apply_position(&mut g, h, &p).unwrap();
        assert!(g.value(out).data().iter().all(|&x| x == 0.0));
    }

    fn conv_store(kernels: usize, s: usize, width: usize, weight: f64, bias: f64) -> (ParamStore, ConvParams) {
        let cp = ConvParams::new(s);
        let mut store = ParamStore::new();
        store.insert(&cp.weight, Tensor::full(&[kernels, s * width], weight));
        store.insert(&cp.bias, Tensor::full(&[kernels], bias));
        (store, cp)
    }

    #[test]
    fn convolve_bias_only() {
        for (bias, expect) in [(-1.0, 0.0), (1.0, 1.0)] {
            let (store, cp) = conv_store(2, 2, 2, 0.0, bias);
            let mut g = Graph::new();
            let d = cp.bind(&mut g, &store).unwrap();
            let h = g.constant(Tensor::full(&[4, 2], 0.3));
            let maps = convolve(&mut g, h, &d, 2).unwrap();
            assert_eq!(g.shape(maps), &[3, 2]);
            assert!(g.value(maps).data().iter().all(|&x| x == expect));
        }
    }

    #[test]
    fn convolve_hand_dot_products() {
        let (store, cp) = conv_store(1, 2, 2, 1.0, 0.0);
        let mut g = Graph::new();
        let d = cp.bind(&mut g, &store).unwrap();
        let h = g.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap());
        let maps = convolve(&mut g, h, &d, 2).unwrap();
        assert_eq!(g.value(maps).data(), &[2.0, 3.0]);
    }

    #[test]
    fn convolve_rejects_short_sequence() {
        let (store, cp) = conv_store(1, 3, 2, 1.0, 0.0);
        let mut g = Graph::new();
        let d = cp.bind(&mut g, &store).unwrap();
        let h = g.constant(Tensor::zeros(&[2, 2]));
        assert!(convolve(&mut g, h, &d, 3).is_err());
    }

    #[test]
    fn max_pool_examples() {
        let mut g = Graph::new();
        let maps = g.constant(Tensor::matrix(3, 1, vec![0.0, 3.0, 1.0]).unwrap());
        let (z, am) = max_pool(&mut g, maps).unwrap();
        assert_eq!(g.value(z).data(), &[3.0]);
        assert_eq!(am, vec![1]);

        let flat = g.constant(Tensor::matrix(3, 2, vec![2.0, 5.0, 2.0, 1.0, 2.0, 0.0]).unwrap());
        let (z, am) = max_pool(&mut g, flat).unwrap();
        assert_eq!(g.shape(z), &[2]);
        assert_eq!(am, vec![0, 0]);
    }

    #[test]
    fn classifier_examples() {
        let cp = ClassifierParams::default();
        let mut store = ParamStore::new();
        store.insert(&cp.weight, Tensor::zeros(&[3, 2]));
        store.insert(&cp.bias, Tensor::vector(vec![0.0, 0.0, 0.0]));
        let mut g = Graph::new();
        let d = cp.bind(&mut g, &store).unwrap();
        let z = g.constant(Tensor::vector(vec![0.4, 1.0]));
        let logits = classify(&mut g, z, &d).unwrap();
        let p = probabilities(g.value(logits).data());
        for x in &p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(argmax(&p), 0);

        store.insert(&cp.bias, Tensor::vector(vec![10.0, 0.0, 0.0]));
        let mut g = Graph::new();
        let d = cp.bind(&mut g, &store).unwrap();
        let z = g.constant(Tensor::vector(vec![0.4, 1.0]));
        let logits = classify(&mut g, z, &d).unwrap();
        let p = probabilities(g.value(logits).data());
        let e10 = 10f64.exp();
        assert!((p[0] - e10 / (e10 + 2.0)).abs() < 1e-15);
        assert!((p[0] - 0.99991).abs() < 1e-5);
    }

    #[test]
    fn argmax_class_invariant_under_logit_shift() {
        let logits = [0.3, 1.7, -0.2];
        let shifted: Vec<f64> = logits.iter().map(|x| x + 42.0).collect();
        assert_eq!(argmax(&probabilities(&logits)), argmax(&probabilities(&shifted)));
    }

    #[test]
    fn informative_window_majority() {
        assert_eq!(most_informative_window(&[2, 4, 4, 1]), Some((1, 4)));
        assert_eq!(most_informative_window(&[3, 1]), Some((1, 1)));
        assert_eq!(most_informative_window(&[]), None);
    }

    fn conv_pool_loss(store: &ParamStore, cp: &ConvParams, h: &Tensor) -> Result<f64> {
        let mut g = Graph::new();
        let d = cp.bind(&mut g, store)?;
        let hv = g.constant(h.clone());
        let maps = convolve(&mut g, hv, &d, cp.kernel_size)?;
        let (z, _) = max_pool(&mut g, maps)?;
        let sq = g.mul(z, z)?;
        let l = g.sum(sq);
        Ok(g.value(l).item())
    }

    #[test]
    fn conv_pool_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cp = ConvParams::new(2);
        let mut store = ParamStore::new();
        cp.init(&mut store, 3, 4, 0.8, &mut rng);
        *store.get_mut(&cp.bias).unwrap() = Tensor::uniform(&[3], 0.1, 0.5, &mut rng);
        let h = Tensor::uniform(&[6, 4], -1.0, 1.0, &mut rng);

        let mut g = Graph::new();
        let d = cp.bind(&mut g, &store).unwrap();
        let hv = g.constant(h.clone());
        let maps = convolve(&mut g, hv, &d, 2).unwrap();
        let (z, _) = max_pool(&mut g, maps).unwrap();
        let sq = g.mul(z, z).unwrap();
        let l = g.sum(sq);
        let analytic = g.backward(l).unwrap().to_dense(&store);
        let numeric = finite_difference_gradient(|s| conv_pool_loss(s, &cp, &h), &store, 1e-5).unwrap();
        for (name, a) in &analytic {
            for (x, y) in a.data().iter().zip(numeric[name].data()) {
                assert!(relative_error(*x, *y, 1e-6) < 1e-4, "{name}: {x} vs {y}");
            }
        }
    }
}
