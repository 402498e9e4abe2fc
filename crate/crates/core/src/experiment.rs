//! End-to-end runs: records in, trained checkpoint and test report out.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::pipeline::{load_embeddings, EmbeddingStore, EncodedExample, EvalReport, TargetedSentence, Vocabulary};
use crate::tensor::Tensor;
use crate::trainer::{derive_seed, evaluate, train, Hyperparams, RunHistory};

/// Training and test records encoded against one vocabulary and padded to
/// the longest sentence across both.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub pad_len: usize,
    pub train: Vec<EncodedExample>,
    pub test: Vec<EncodedExample>,
}

impl Corpus {
    pub fn build(train: &[TargetedSentence], test: &[TargetedSentence]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let vocab = Vocabulary::build(train.iter().chain(test).flat_map(|r| r.tokens.iter().map(String::as_str)));
        let pad_len = train.iter().chain(test).map(TargetedSentence::len).max().unwrap_or(1);
        let encode = |rs: &[TargetedSentence]| {
            rs.iter()
                .map(|r| EncodedExample::encode(r, &vocab, pad_len))
                .collect::<Result<Vec<_>>>()
        };
        Ok(Self {
            train: encode(train)?,
            test: encode(test)?,
            vocab,
            pad_len,
        })
    }
}

fn oov_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[4]))
}

/// Embeddings for `vocab`: vectors from `path` when given, random
/// `U(−0.25, 0.25)` rows otherwise or for missing words, drawn with `seed`.
pub fn load_store(vocab: &Vocabulary, path: Option<&Path>, dim: usize, seed: u64) -> Result<EmbeddingStore> {
    let mut rng = oov_rng(seed);
    match path {
        Some(p) => load_embeddings(p, vocab.clone(), dim, &mut rng),
        None => Ok(EmbeddingStore::random(vocab.clone(), dim, &mut rng)),
    }
}

pub fn embedding_matrix(vocab: &Vocabulary, path: Option<&Path>, dim: usize, seed: u64) -> Result<Tensor> {
    Ok(load_store(vocab, path, dim, seed)?.matrix)
}

/// The matrix [`embedding_matrix`] would give for `seed`, without
/// re-reading the vector file.
pub fn reseeded_matrix(store: &EmbeddingStore, seed: u64) -> Tensor {
    let mut s = store.clone();
    s.resample_missing(&mut oov_rng(seed));
    s.matrix
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub seed: u64,
    pub history: RunHistory,
    /// Present when the corpus has test examples.
    pub test: Option<EvalReport>,
}

/// Trains on `corpus.train` with `hyper` and evaluates on `corpus.test`.
pub fn run(corpus: &Corpus, embeddings: &Tensor, hyper: &Hyperparams) -> Result<(Checkpoint, RunOutcome)> {
    let (model, history) = train(&corpus.train, embeddings, hyper)?;
    let test = if corpus.test.is_empty() {
        None
    } else {
        Some(evaluate(&model, &corpus.test)?)
    };
    let ck = Checkpoint::new(hyper.clone(), corpus.pad_len, corpus.vocab.clone(), model.params);
    Ok((
        ck,
        RunOutcome {
            seed: hyper.seed,
            history,
            test,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Label;

    #[test]
    fn corpus_pads_to_longest_of_both_splits() {
        let tr = [TargetedSentence::locate("good food", "food", None, Label::Positive).unwrap()];
        let te = [TargetedSentence::locate("the food was cold", "food", None, Label::Negative).unwrap()];
        let c = Corpus::build(&tr, &te).unwrap();
        assert_eq!(c.pad_len, 4);
        assert_eq!(c.train[0].ids.len(), 4);
        assert!(c.vocab.get("cold").is_some());
        assert!(Corpus::build(&[], &te).is_err());
    }

    #[test]
    fn reseeding_matches_fresh_load() {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"a 0.5 0.5 0.5 0.5\n").unwrap();
        let v = Vocabulary::build(["a", "b", "c"]);
        let base = load_store(&v, Some(f.path()), 4, 0).unwrap();
        for seed in [0, 1, 7] {
            assert_eq!(reseeded_matrix(&base, seed), embedding_matrix(&v, Some(f.path()), 4, seed).unwrap());
        }
        let random = load_store(&v, None, 4, 0).unwrap();
        assert_eq!(reseeded_matrix(&random, 3), embedding_matrix(&v, None, 4, 3).unwrap());
    }

    #[test]
    fn random_matrix_is_seeded() {
        let v = Vocabulary::build(["a", "b"]);
        let a = embedding_matrix(&v, None, 4, 9).unwrap();
        assert_eq!(a, embedding_matrix(&v, None, 4, 9).unwrap());
        assert_ne!(a, embedding_matrix(&v, None, 4, 10).unwrap());
    }
}
