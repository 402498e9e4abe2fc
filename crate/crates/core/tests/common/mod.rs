//! Fixtures and plain-`f64` reference computations shared by the
//! integration tests. Nothing here calls into the graph engine.

#![allow(dead_code)]

use tnet::pipeline::{Label, TargetedSentence};

const FUNCTION: [&str; 4] = ["the", "was", "but", "honestly"];
const ASPECTS: [&str; 16] = [
    "food", "service", "staff", "menu", "price", "decor", "music", "wine", "pasta", "bread", "coffee", "dessert",
    "location", "seating", "portions", "view",
];
const POSITIVE: [&str; 10] = [
    "great", "excellent", "superb", "lovely", "tasty", "friendly", "perfect", "fresh", "amazing", "wonderful",
];
const NEGATIVE: [&str; 10] = [
    "awful", "terrible", "bland", "rude", "slow", "dirty", "stale", "noisy", "cold", "horrible",
];

/// 16 sentences with two targets of opposite sentiment each, 32 examples
/// over a 40-word vocabulary.
pub fn synthetic_corpus() -> Vec<TargetedSentence> {
    let mut out = Vec::with_capacity(32);
    for i in 0..16 {
        let a = ASPECTS[i];
        let b = ASPECTS[(i + 5) % 16];
        let pos = POSITIVE[i % 10];
        let neg = NEGATIVE[(i * 3) % 10];
        let (first, second, la, lb) = if i % 2 == 0 {
            (pos, neg, Label::Positive, Label::Negative)
        } else {
            (neg, pos, Label::Negative, Label::Positive)
        };
        let sentence = format!("the {a} was {first} but {} the {b} was {second}", FUNCTION[3]);
        out.push(TargetedSentence::locate(&sentence, a, None, la).unwrap());
        out.push(TargetedSentence::locate(&sentence, b, None, lb).unwrap());
    }
    out
}

pub fn corpus_vocabulary_size() -> usize {
    FUNCTION.len() + ASPECTS.len() + POSITIVE.len() + NEGATIVE.len()
}

pub type Mat = Vec<Vec<f64>>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// `W x + b` with `W` stored row-major as `rows × x.len()`.
pub fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(r, bias)| dot(&w[r * cols..(r + 1) * cols], x) + bias)
        .collect()
}

/// Target-specific transformation of every row of `h`.
pub fn tst(h: &Mat, h_tau: &Mat, w: &[f64], b: &[f64]) -> Mat {
    h.iter()
        .map(|hi| {
            let scores: Vec<f64> = h_tau.iter().map(|t| dot(hi, t)).collect();
            let a = softmax(&scores);
            let mut r = vec![0.0; hi.len()];
            for (aj, t) in a.iter().zip(h_tau) {
                for (rk, tk) in r.iter_mut().zip(t) {
                    *rk += aj * tk;
                }
            }
            let joined: Vec<f64> = hi.iter().chain(&r).copied().collect();
            affine(w, b, &joined).into_iter().map(f64::tanh).collect()
        })
        .collect()
}

pub fn gate(h: &Mat, w: &[f64], b: &[f64]) -> Mat {
    h.iter().map(|hi| affine(w, b, hi).into_iter().map(sigmoid).collect()).collect()
}

/// Position relevance for 1-based `i`, clamped below at 0.
pub fn position(k: usize, m: usize, n: usize, c: f64, i: usize) -> f64 {
    let (k, m, n, i) = (k as f64, m as f64, n as f64, i as f64);
    let v = if i > n {
        0.0
    } else if i < k + m {
        1.0 - (k + m - i) / c
    } else {
        1.0 - (i - k) / c
    };
    v.max(0.0)
}
