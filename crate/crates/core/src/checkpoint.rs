//! JSON checkpoint container.
//!
//! Floats are written in shortest round-trip form and parsed back exactly,
//! so save → load preserves every parameter bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, EMBEDDING};
use crate::params::ParamStore;
use crate::pipeline::Vocabulary;
use crate::trainer::Hyperparams;

pub const FORMAT: &str = "tnet-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub hyperparams: Hyperparams,
    /// Padding length used at training time.
    pub pad_len: usize,
    pub vocab_hash: String,
    pub vocab: Vocabulary,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn new(hyperparams: Hyperparams, pad_len: usize, vocab: Vocabulary, params: ParamStore) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            hyperparams,
            pad_len,
            vocab_hash: vocab.hash(),
            vocab,
            params,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        ck.verify()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn verify(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format `{}`", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let hash = self.vocab.hash();
        if hash != self.vocab_hash {
            return Err(Error::Checkpoint(format!(
                "vocabulary hash mismatch: stored {}, computed {hash}",
                self.vocab_hash
            )));
        }
        let rows = self.params.get(EMBEDDING)?.rows();
        if rows != self.vocab.len() {
            return Err(Error::Checkpoint(format!(
                "embedding has {rows} rows for a vocabulary of {}",
                self.vocab.len()
            )));
        }
        Ok(())
    }

    /// Errors unless `vocab` is the vocabulary this checkpoint was trained with.
    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        if vocab.hash() != self.vocab_hash {
            return Err(Error::Checkpoint("vocabulary hash mismatch".into()));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<Model> {
        Model::from_parts(self.hyperparams.model_config(), self.params.clone())
    }
}
