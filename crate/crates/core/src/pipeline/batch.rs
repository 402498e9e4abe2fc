use serde::{Deserialize, Serialize};

use super::data::{Label, TargetedSentence};
use super::embeddings::{Vocabulary, PAD_ID};
use crate::error::{Error, Result};
use crate::head::{position_relevance, PositionWeights};

/// A record mapped to vocabulary ids and right-padded with [`PAD_ID`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub ids: Vec<usize>,
    /// True sentence length before padding.
    pub len: usize,
    /// 1-based.
    pub target_start: usize,
    pub target_len: usize,
    pub label: Option<Label>,
}

impl EncodedExample {
    pub fn encode(record: &TargetedSentence, vocab: &Vocabulary, pad_len: usize) -> Result<Self> {
        if record.len() > pad_len {
            return Err(Error::Config(format!(
                "sentence of length {} exceeds padding length {pad_len}",
                record.len()
            )));
        }
        let mut ids: Vec<usize> = record.tokens.iter().map(|t| vocab.id(t)).collect();
        ids.resize(pad_len, PAD_ID);
        Ok(Self {
            ids,
            len: record.len(),
            target_start: record.target_start,
            target_len: record.target_len,
            label: Some(record.label),
        })
    }

    pub fn padded_len(&self) -> usize {
        self.ids.len()
    }

    pub fn target_ids(&self) -> &[usize] {
        &self.ids[self.target_start - 1..self.target_start - 1 + self.target_len]
    }

    /// The unpadded token sequence.
    pub fn tokens<'v>(&self, vocab: &'v Vocabulary) -> Vec<&'v str> {
        self.ids[..self.len].iter().map(|&id| vocab.token(id)).collect()
    }

    pub fn position(&self, c: f64) -> Result<PositionWeights> {
        position_relevance(self.target_start, self.target_len, self.len, self.padded_len(), c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    pub examples: Vec<EncodedExample>,
    pub positions: Vec<PositionWeights>,
}

impl PaddedBatch {
    /// `[batch × pad_len]` token ids.
    pub fn id_matrix(&self) -> Vec<&[usize]> {
        self.examples.iter().map(|e| e.ids.as_slice()).collect()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.len).collect()
    }
}

pub fn pad_batch(records: &[TargetedSentence], vocab: &Vocabulary, pad_len: usize, c: f64) -> Result<PaddedBatch> {
    let examples = records
        .iter()
        .map(|r| EncodedExample::encode(r, vocab, pad_len))
        .collect::<Result<Vec<_>>>()?;
    let positions = examples.iter().map(|e| e.position(c)).collect::<Result<Vec<_>>>()?;
    Ok(PaddedBatch { examples, positions })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(tokens: &[&str], start: usize) -> TargetedSentence {
        TargetedSentence::new(tokens.iter().map(|s| s.to_string()).collect(), start, 1, Label::Positive).unwrap()
    }

    #[test]
    fn pads_shorter_rows() {
        let records = [rec(&["a", "b", "c"], 1), rec(&["a", "b", "c", "d", "e"], 2)];
        let vocab = Vocabulary::build(records.iter().flat_map(|r| r.tokens.iter().map(String::as_str)));
        let batch = pad_batch(&records, &vocab, 5, 40.0).unwrap();
        assert_eq!(batch.id_matrix()[0][3..], [PAD_ID, PAD_ID]);
        assert!(!batch.id_matrix()[1].contains(&PAD_ID));
        assert_eq!(batch.lengths(), vec![3, 5]);
        for (e, p) in batch.examples.iter().zip(&batch.positions) {
            for (i, &v) in p.v.iter().enumerate() {
                assert_eq!(v == 0.0, i >= e.len, "position {i}");
            }
        }
    }

    #[test]
    fn same_length_no_pads() {
        let records = [rec(&["a", "b"], 1), rec(&["c", "d"], 2)];
        let vocab = Vocabulary::build(["a", "b", "c", "d"]);
        let batch = pad_batch(&records, &vocab, 2, 40.0).unwrap();
        assert!(batch.id_matrix().iter().all(|r| !r.contains(&PAD_ID)));
    }

    #[test]
    fn too_long_is_error() {
        let records = [rec(&["a", "b", "c"], 1)];
        let vocab = Vocabulary::build(["a", "b", "c"]);
        assert!(pad_batch(&records, &vocab, 2, 40.0).is_err());
    }
}
