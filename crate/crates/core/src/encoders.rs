//! LSTM and bi-directional LSTM sequence encoders.
//!
//! Gate rows of the stacked weight matrices are ordered
//! (input, forget, candidate, output), each block `dim_h` rows tall.

use rand::Rng;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Shapes of one LSTM direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmDims {
    pub input: usize,
    pub hidden: usize,
}

/// Parameter names for one LSTM direction stored under `prefix`.
#[derive(Debug, Clone)]
pub struct LstmParams {
    pub w_ih: String,
    pub w_hh: String,
    pub bias: String,
}

impl LstmParams {
    pub fn named(prefix: &str) -> Self {
        Self {
            w_ih: format!("{prefix}.w_ih"),
            w_hh: format!("{prefix}.w_hh"),
            bias: format!("{prefix}.bias"),
        }
    }

    /// Weights from `U(−scale, scale)`, bias zero.
    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, dims: LstmDims, scale: f64, rng: &mut R) {
        let h4 = 4 * dims.hidden;
        store.insert(&self.w_ih, Tensor::uniform(&[h4, dims.input], -scale, scale, rng));
        store.insert(&self.w_hh, Tensor::uniform(&[h4, dims.hidden], -scale, scale, rng));
        store.insert(&self.bias, Tensor::zeros(&[h4]));
    }

    pub fn dims(&self, store: &ParamStore) -> Result<LstmDims> {
        let w_ih = store.get(&self.w_ih)?;
        let w_hh = store.get(&self.w_hh)?;
        let bias = store.get(&self.bias)?;
        let hidden = w_hh.cols();
        if w_ih.rows() != 4 * hidden || w_hh.rows() != 4 * hidden || bias.len() != 4 * hidden {
            return Err(Error::shape(
                "lstm",
                &[w_ih.shape(), w_hh.shape(), bias.shape()],
            ));
        }
        Ok(LstmDims {
            input: w_ih.cols(),
            hidden,
        })
    }

    pub fn bind<'a>(&self, g: &mut Graph<'a>, store: &'a ParamStore) -> Result<LstmCell> {
        let dims = self.dims(store)?;
        Ok(LstmCell {
            w_ih: g.param(&self.w_ih, store.get(&self.w_ih)?),
            w_hh: g.param(&self.w_hh, store.get(&self.w_hh)?),
            bias: g.param(&self.bias, store.get(&self.bias)?),
            dims,
        })
    }
}

/// Forward and backward directions.
#[derive(Debug, Clone)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmParams {
    pub fn named(prefix: &str) -> Self {
        Self {
            forward: LstmParams::named(&format!("{prefix}.fwd")),
            backward: LstmParams::named(&format!("{prefix}.bwd")),
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, dims: LstmDims, scale: f64, rng: &mut R) {
        self.forward.init(store, dims, scale, rng);
        self.backward.init(store, dims, scale, rng);
    }
}

/// An LSTM direction bound into a graph.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
    pub dims: LstmDims,
}

impl LstmCell {
    /// One recurrence step from the raw input `x_t`.
    pub fn step(&self, g: &mut Graph<'_>, x_t: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
        let proj = g.matvec(self.w_ih, x_t)?;
        let proj = g.add_bias(proj, self.bias)?;
        self.step_projected(g, proj, h_prev, c_prev)
    }

    /// One step given the precomputed `W_ih·x_t + b`.
    fn step_projected(&self, g: &mut Graph<'_>, proj: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
        let h = self.dims.hidden;
        if g.shape(h_prev) != [h] || g.shape(c_prev) != [h] {
            return Err(Error::shape("lstm_step", &[g.shape(h_prev), g.shape(c_prev), &[h]]));
        }
        let rec = g.matvec(self.w_hh, h_prev)?;
        let pre = g.add(proj, rec)?;
        let i_pre = g.slice(pre, 0, h)?;
        let f_pre = g.slice(pre, h, h)?;
        let c_pre = g.slice(pre, 2 * h, h)?;
        let o_pre = g.slice(pre, 3 * h, h)?;
        let i = g.sigmoid(i_pre);
        let f = g.sigmoid(f_pre);
        let cand = g.tanh(c_pre);
        let o = g.sigmoid(o_pre);
        let ic = g.mul(i, cand)?;
        let fc = g.mul(f, c_prev)?;
        let c = g.add(ic, fc)?;
        let tc = g.tanh(c);
        let h_t = g.mul(tc, o)?;
        Ok((h_t, c))
    }

    /// Runs over the rows of `xs: [n × input]`, returning the hidden state at
    /// every position in input order. With `reverse`, the recurrence runs from
    /// the last row to the first.
    pub fn run(&self, g: &mut Graph<'_>, xs: Var, reverse: bool) -> Result<Vec<Var>> {
        let shape = g.shape(xs).to_vec();
        if shape.len() != 2 || shape[0] == 0 {
            return Err(Error::Empty("sequence"));
        }
        if shape[1] != self.dims.input {
            return Err(Error::shape("lstm_run", &[&shape, &[self.dims.input]]));
        }
        let n = shape[0];
        let proj_all = g.matmul_bt(xs, self.w_ih)?;
        let proj_all = g.add_bias(proj_all, self.bias)?;
        let mut h = g.constant(Tensor::zeros(&[self.dims.hidden]));
        let mut c = g.constant(Tensor::zeros(&[self.dims.hidden]));
        let mut out = vec![h; n];
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..n).rev())
        } else {
            Box::new(0..n)
        };
        for t in order {
            let proj = g.row(proj_all, t)?;
            let (h_t, c_t) = self.step_projected(g, proj, h, c)?;
            out[t] = h_t;
            h = h_t;
            c = c_t;
        }
        Ok(out)
    }
}

/// Encodes `xs: [n × dim_w]` into `[n × 2·dim_h]`; row `i` is the forward
/// state at `i` followed by the backward state at `i`.
pub fn encode_sequence(g: &mut Graph<'_>, xs: Var, fwd: &LstmCell, bwd: &LstmCell) -> Result<Var> {
    if fwd.dims != bwd.dims {
        return Err(Error::Config("BiLSTM directions disagree on dimensions".into()));
    }
    let f = fwd.run(g, xs, false)?;
    let b = bwd.run(g, xs, true)?;
    let rows = f
        .into_iter()
        .zip(b)
        .map(|(hf, hb)| g.concat(&[hf, hb]))
        .collect::<Result<Vec<_>>>()?;
    g.stack_rows(&rows)
}

/// Sentence encoder.
pub fn encode_sentence<'a>(
    g: &mut Graph<'a>,
    x: Var,
    params: &BiLstmParams,
    store: &'a ParamStore,
) -> Result<Var> {
    if g.shape(x).first() == Some(&0) || g.shape(x).len() != 2 {
        return Err(Error::Empty("sentence"));
    }
    let fwd = params.forward.bind(g, store)?;
    let bwd = params.backward.bind(g, store)?;
    encode_sequence(g, x, &fwd, &bwd)
}

/// Target encoder; same contract as [`encode_sentence`] over the target words.
pub fn encode_target<'a>(
    g: &mut Graph<'a>,
    x_tau: Var,
    params: &BiLstmParams,
    store: &'a ParamStore,
) -> Result<Var> {
    if g.shape(x_tau).first() == Some(&0) || g.shape(x_tau).len() != 2 {
        return Err(Error::Empty("target"));
    }
    let fwd = params.forward.bind(g, store)?;
    let bwd = params.backward.bind(g, store)?;
    encode_sequence(g, x_tau, &fwd, &bwd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::{finite_difference_gradient, relative_error, sigmoid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store_with(dims: LstmDims, scale: f64, seed: u64) -> (ParamStore, LstmParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let p = LstmParams::named("lstm");
        p.init(&mut store, dims, scale, &mut rng);
        (store, p)
    }

    #[test]
    fn zero_params_give_zero_state() {
        let dims = LstmDims { input: 3, hidden: 2 };
        let (store, p) = store_with(dims, 0.0, 0);
        let mut g = Graph::new();
        let cell = p.bind(&mut g, &store).unwrap();
        let x = g.constant(Tensor::vector(vec![0.4, -1.0, 2.0]));
        let h0 = g.constant(Tensor::zeros(&[2]));
        let c0 = g.constant(Tensor::zeros(&[2]));
        let (h, c) = cell.step(&mut g, x, h0, c0).unwrap();
        assert_eq!(g.value(h).data(), &[0.0, 0.0]);
        assert_eq!(g.value(c).data(), &[0.0, 0.0]);
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let dims = LstmDims { input: 2, hidden: 2 };
        let (mut store, p) = store_with(dims, 0.0, 0);
        // forget-gate slots are rows [2, 4)
        store.get_mut(&p.bias).unwrap().data_mut()[2..4].copy_from_slice(&[100.0, 100.0]);
        let mut g = Graph::new();
        let cell = p.bind(&mut g, &store).unwrap();
        let x = g.constant(Tensor::vector(vec![1.0, 1.0]));
        let h0 = g.constant(Tensor::zeros(&[2]));
        let c0 = g.constant(Tensor::vector(vec![1.0, 1.0]));
        let (h, c) = cell.step(&mut g, x, h0, c0).unwrap();
        // c = σ(100)·1 + σ(0)·tanh(0); h = tanh(c)·σ(0)
        let c_expect = sigmoid(100.0);
        for &v in g.value(c).data() {
            assert!((v - 1.0).abs() < 1e-12);
            assert_eq!(v, c_expect);
        }
        for &v in g.value(h).data() {
            assert!((v - 0.5 * c_expect.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn step_rejects_bad_state() {
        let dims = LstmDims { input: 2, hidden: 2 };
        let (store, p) = store_with(dims, 0.1, 0);
        let mut g = Graph::new();
        let cell = p.bind(&mut g, &store).unwrap();
        let x = g.constant(Tensor::vector(vec![1.0, 1.0]));
        let h0 = g.constant(Tensor::zeros(&[3]));
        let c0 = g.constant(Tensor::zeros(&[2]));
        assert!(cell.step(&mut g, x, h0, c0).is_err());
    }

    fn sum_last_hidden(store: &ParamStore, p: &LstmParams, xs: &Tensor) -> Result<f64> {
        let mut g = Graph::new();
        let cell = p.bind(&mut g, store)?;
        let x = g.constant(xs.clone());
        let hs = cell.run(&mut g, x, false)?;
        let l = g.sum(*hs.last().unwrap());
        Ok(g.value(l).item())
    }

    #[test]
    fn run_gradient_matches_finite_differences() {
        let dims = LstmDims { input: 3, hidden: 4 };
        let (mut store, p) = store_with(dims, 0.5, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        *store.get_mut(&p.bias).unwrap() = Tensor::uniform(&[16], -0.5, 0.5, &mut rng);
        let xs = Tensor::uniform(&[4, 3], -1.0, 1.0, &mut rng);

        let mut g = Graph::new();
        let cell = p.bind(&mut g, &store).unwrap();
        let x = g.constant(xs.clone());
        let hs = cell.run(&mut g, x, false).unwrap();
        let loss = g.sum(*hs.last().unwrap());
        let analytic = g.backward(loss).unwrap().to_dense(&store);
        let numeric = finite_difference_gradient(|s| sum_last_hidden(s, &p, &xs), &store, 1e-5).unwrap();
        for (name, a) in &analytic {
            for (x, y) in a.data().iter().zip(numeric[name].data()) {
                assert!(relative_error(*x, *y, 1e-6) < 1e-4, "{name}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn hidden_states_bounded() {
        let dims = LstmDims { input: 3, hidden: 5 };
        let (store, p) = store_with(dims, 3.0, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut g = Graph::new();
        let cell = p.bind(&mut g, &store).unwrap();
        let x = g.constant(Tensor::uniform(&[6, 3], -5.0, 5.0, &mut rng));
        for h in cell.run(&mut g, x, true).unwrap() {
            assert!(g.value(h).data().iter().all(|v| v.abs() < 1.0));
        }
    }

    fn bilstm(seed: u64, dims: LstmDims, share: bool) -> (ParamStore, BiLstmParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let p = BiLstmParams::named("enc");
        p.init(&mut store, dims, 0.8, &mut rng);
        if share {
            for (f, b) in [
                (&p.forward.w_ih, &p.backward.w_ih),
                (&p.forward.w_hh, &p.backward.w_hh),
            ] {
                let t = store.get(f).unwrap().clone();
                store.insert(b.clone(), t);
            }
        }
        (store, p)
    }

    #[test]
    fn single_token_rows_concatenate_directions() {
        let dims = LstmDims { input: 2, hidden: 3 };
        let (store, p) = bilstm(3, dims, false);
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(1, 2, vec![0.3, -0.2]).unwrap());
        let out = encode_sentence(&mut g, x, &p, &store).unwrap();
        assert_eq!(g.shape(out), &[1, 6]);

        let mut g2 = Graph::new();
        let fwd = p.forward.bind(&mut g2, &store).unwrap();
        let bwd = p.backward.bind(&mut g2, &store).unwrap();
        let xv = g2.constant(Tensor::vector(vec![0.3, -0.2]));
        let z = g2.constant(Tensor::zeros(&[3]));
        let (hf, _) = fwd.step(&mut g2, xv, z, z).unwrap();
        let (hb, _) = bwd.step(&mut g2, xv, z, z).unwrap();
        let row = g.value(out).row(0);
        let expect: Vec<f64> = g2.value(hf).data().iter().chain(g2.value(hb).data()).copied().collect();
        for (a, b) in row.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_params_encode_to_zero() {
        let dims = LstmDims { input: 2, hidden: 3 };
        let mut store = ParamStore::new();
        let p = BiLstmParams::named("enc");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        p.init(&mut store, dims, 0.0, &mut rng);
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[4, 2], 0.7));
        let out = encode_target(&mut g, x, &p, &store).unwrap();
        assert_eq!(g.shape(out), &[4, 6]);
        assert!(g.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reversing_input_swaps_halves_with_shared_params() {
        let dims = LstmDims { input: 2, hidden: 3 };
        let (store, p) = bilstm(5, dims, true);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let xs = Tensor::uniform(&[5, 2], -1.0, 1.0, &mut rng);
        let rev_rows: Vec<Vec<f64>> = (0..5).rev().map(|i| xs.row(i).to_vec()).collect();
        let xr = Tensor::from_rows(&rev_rows).unwrap();

        let mut g = Graph::new();
        let a = g.constant(xs);
        let b = g.constant(xr);
        let ea = encode_sentence(&mut g, a, &p, &store).unwrap();
        let eb = encode_sentence(&mut g, b, &p, &store).unwrap();
        let (ta, tb) = (g.value(ea), g.value(eb));
        for i in 0..5 {
            let ra = ta.row(4 - i);
            let rb = tb.row(i);
            assert_eq!(&rb[..3], &ra[3..]);
            assert_eq!(&rb[3..], &ra[..3]);
        }
    }

    #[test]
    fn input_width_mismatch_rejected() {
        let dims = LstmDims { input: 2, hidden: 3 };
        let (store, p) = bilstm(1, dims, false);
        let mut g = Graph::new();
        let fwd = p.forward.bind(&mut g, &store).unwrap();
        let x = g.constant(Tensor::zeros(&[1, 3]));
        assert!(fwd.run(&mut g, x, false).is_err());
    }
}
