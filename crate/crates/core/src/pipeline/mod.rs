//! Dataset ingestion, vocabulary, padding and evaluation metrics.

mod batch;
mod data;
mod embeddings;
mod metrics;

pub use batch::{pad_batch, EncodedExample, PaddedBatch};
pub use data::{
    find_target, parse_dataset, parse_json_lines, tokenize, Dataset, DatasetFormat, Label, RawLabel,
    TargetedSentence,
};
pub use embeddings::{load_embeddings, EmbeddingStore, Vocabulary, OOV_RANGE, PAD, PAD_ID, UNK, UNK_ID};
pub use metrics::{accuracy, confusion, macro_f1, paired_t_test, per_class, ClassMetrics, EvalReport, TTest};
