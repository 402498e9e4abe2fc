//! Vocabulary and word-vector loading.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

/// Range of the uniform distribution for words without a pre-trained vector.
pub const OOV_RANGE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// `<pad>` and `<unk>` followed by every distinct token in first-seen order.
    pub fn build<'t>(tokens: impl IntoIterator<Item = &'t str>) -> Self {
        let mut v = Self::from(vec![PAD.to_string(), UNK.to_string()]);
        for t in tokens {
            v.add(t);
        }
        v
    }

    pub fn add(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// SHA-256 of the newline-joined token list, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

/// Embedding matrix aligned with a vocabulary. Row [`PAD_ID`] is zero.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    pub vocab: Vocabulary,
    pub matrix: Tensor,
    /// Number of vocabulary entries that received a pre-trained vector.
    pub found: usize,
    /// `present[id]` is true when row `id` came from a vector file.
    pub present: Vec<bool>,
}

impl EmbeddingStore {
    /// Every row except padding drawn from `U(−0.25, 0.25)`.
    pub fn random<R: Rng + ?Sized>(vocab: Vocabulary, dim: usize, rng: &mut R) -> Self {
        let mut store = Self {
            present: vec![false; vocab.len()],
            matrix: Tensor::zeros(&[vocab.len(), dim]),
            vocab,
            found: 0,
        };
        store.resample_missing(rng);
        store
    }

    /// Redraws every row without a pre-trained vector, in id order, from
    /// `U(−0.25, 0.25)`. The padding row stays zero.
    pub fn resample_missing<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for id in 0..self.vocab.len() {
            if id != PAD_ID && !self.present[id] {
                fill_uniform(self.matrix.row_mut(id), rng);
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }
}

fn fill_uniform<R: Rng + ?Sized>(row: &mut [f64], rng: &mut R) {
    for x in row {
        *x = rng.random_range(-OOV_RANGE..OOV_RANGE);
    }
}

/// Reads a text vector file (`token f1 f2 … f_dim` per line) and builds the
/// embedding matrix for `vocab`. Tokens absent from the file are sampled from
/// `U(−0.25, 0.25)` in vocabulary order after the file is read; the padding
/// row stays zero. A leading `count dim` header line is skipped.
pub fn load_embeddings<R: Rng + ?Sized>(
    path: &Path,
    vocab: Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<EmbeddingStore> {
    let reader = BufReader::new(File::open(path)?);
    let mut matrix = Tensor::zeros(&[vocab.len(), dim]);
    let mut seen = vec![false; vocab.len()];
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        if i == 0 && values.len() == 1 && token.parse::<usize>().is_ok() && values[0].parse::<usize>().is_ok() {
            continue;
        }
        if values.len() != dim {
            return Err(Error::EmbeddingDim {
                line: i + 1,
                expected: dim,
                found: values.len(),
            });
        }
        let Some(id) = vocab.get(token) else { continue };
        if id == PAD_ID || seen[id] {
            continue;
        }
        for (dst, v) in matrix.row_mut(id).iter_mut().zip(&values) {
            *dst = v.parse::<f64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        seen[id] = true;
    }
    let found = seen.iter().filter(|&&s| s).count();
    log::info!("{}: {found}/{} vocabulary entries found", path.display(), vocab.len());
    let mut store = EmbeddingStore {
        vocab,
        matrix,
        found,
        present: seen,
    };
    store.resample_missing(rng);
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn vocabulary_reserved_ids() {
        let v = Vocabulary::build(["good", "food", "good"]);
        assert_eq!(v.len(), 4);
        assert_eq!(v.id(PAD), PAD_ID);
        assert_eq!(v.id("food"), 3);
        assert_eq!(v.id("never-seen"), UNK_ID);
    }

    #[test]
    fn hash_depends_on_order() {
        let a = Vocabulary::build(["x", "y"]);
        let b = Vocabulary::build(["y", "x"]);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), Vocabulary::build(["x", "y"]).hash());
    }

    #[test]
    fn file_vectors_oov_and_pad() {
        let f = write("2 3\ngood 0.1 0.2 0.3\nunused 1 1 1\n");
        let vocab = Vocabulary::build(["good", "bad"]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let store = load_embeddings(f.path(), vocab, 3, &mut rng).unwrap();
        assert_eq!(store.matrix.row(2), &[0.1, 0.2, 0.3]);
        assert_eq!(store.matrix.row(PAD_ID), &[0.0, 0.0, 0.0]);
        assert!(store.matrix.row(3).iter().all(|x| x.abs() < 0.25));
        assert!(store.matrix.row(UNK_ID).iter().all(|x| x.abs() < 0.25 && *x != 0.0));
        assert_eq!(store.found, 1);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let f = write("good 0.1 0.2\n");
        let vocab = Vocabulary::build(["good"]);
        let err = load_embeddings(f.path(), vocab, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::EmbeddingDim { line: 1, expected: 3, found: 2 }));
    }

    #[test]
    fn random_store_respects_range() {
        let vocab = Vocabulary::build(["a", "b", "c"]);
        let s = EmbeddingStore::random(vocab, 50, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(s.matrix.row(PAD_ID).iter().all(|&x| x == 0.0));
        for id in 1..s.vocab.len() {
            assert!(s.matrix.row(id).iter().all(|x| x.abs() < 0.25));
        }
    }

    #[test]
    fn resampling_keeps_file_vectors() {
        let f = write("good 0.1 0.2\n");
        let vocab = Vocabulary::build(["good", "bad"]);
        let mut store = load_embeddings(f.path(), vocab, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let before = store.matrix.clone();
        store.resample_missing(&mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(store.matrix.row(2), before.row(2));
        assert_ne!(store.matrix.row(3), before.row(3));
        assert_eq!(store.matrix.row(PAD_ID), &[0.0, 0.0]);
    }
}
