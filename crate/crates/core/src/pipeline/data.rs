//! Targeted-sentence records and the JSON-lines dataset format.
//!
//! One record per line:
//!
//! ```json
//! {"sentence": "great food but the service was dreadful !", "target": "service",
//!  "target_occurrence_index": 0, "label": "negative"}
//! ```
//!
//! `sentence` is pre-tokenized text split on whitespace; tokens are
//! lowercased. `target_occurrence_index` (0-based) picks among repeated
//! occurrences of the target and is required only when the target occurs
//! more than once. Records labelled `conflict` are dropped.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentiment polarity. The discriminant is the class index used by the
/// classifier (positive, negative, neutral).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive = 0,
    Negative = 1,
    Neutral = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Positive, Label::Negative, Label::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
            Label::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Label text as found in data files, which may also say `conflict`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawLabel {
    Polarity(Label),
    Conflict,
}

impl FromStr for RawLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "p" | "1" => Ok(RawLabel::Polarity(Label::Positive)),
            "negative" | "n" | "-1" => Ok(RawLabel::Polarity(Label::Negative)),
            "neutral" | "o" | "0" => Ok(RawLabel::Polarity(Label::Neutral)),
            "conflict" => Ok(RawLabel::Conflict),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetedSentence {
    pub tokens: Vec<String>,
    /// 1-based index of the first target token.
    pub target_start: usize,
    pub target_len: usize,
    pub label: Label,
}

impl TargetedSentence {
    pub fn new(tokens: Vec<String>, target_start: usize, target_len: usize, label: Label) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Empty("sentence"));
        }
        if target_start < 1 || target_len < 1 || target_start + target_len - 1 > tokens.len() {
            return Err(Error::SpanOutOfRange {
                start: target_start,
                end: (target_start + target_len).saturating_sub(1),
                len: tokens.len(),
            });
        }
        Ok(Self {
            tokens,
            target_start,
            target_len,
            label,
        })
    }

    /// Builds a record by locating `target` inside `sentence`.
    pub fn locate(sentence: &str, target: &str, occurrence: Option<usize>, label: Label) -> Result<Self> {
        let tokens = tokenize(sentence);
        let target_tokens = tokenize(target);
        let (start, len) = find_target(&tokens, &target_tokens, occurrence)?;
        Self::new(tokens, start, len, label)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn target_tokens(&self) -> &[String] {
        &self.tokens[self.target_start - 1..self.target_start - 1 + self.target_len]
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// 1-based start and length of the chosen occurrence of `target` in `tokens`.
pub fn find_target(tokens: &[String], target: &[String], occurrence: Option<usize>) -> Result<(usize, usize)> {
    if target.is_empty() {
        return Err(Error::Empty("target"));
    }
    let starts: Vec<usize> = if tokens.len() >= target.len() {
        (0..=tokens.len() - target.len())
            .filter(|&i| tokens[i..i + target.len()] == *target)
            .collect()
    } else {
        Vec::new()
    };
    let pick = match (starts.len(), occurrence) {
        (0, _) => {
            return Err(Error::Config(format!(
                "target `{}` not found in sentence",
                target.join(" ")
            )))
        }
        (1, None) => starts[0],
        (_, None) => {
            return Err(Error::Config(format!(
                "target `{}` occurs {} times; target_occurrence_index is required",
                target.join(" "),
                starts.len()
            )))
        }
        (_, Some(i)) => *starts.get(i).ok_or_else(|| {
            Error::Config(format!(
                "target_occurrence_index {i} out of range ({} occurrences)",
                starts.len()
            ))
        })?,
    };
    Ok((pick + 1, target.len()))
}

#[derive(Debug, Deserialize)]
struct JsonRecord {
    sentence: String,
    target: String,
    #[serde(default)]
    target_occurrence_index: Option<usize>,
    label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    #[default]
    JsonLines,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<TargetedSentence>,
    pub dropped_conflicts: usize,
}

impl Dataset {
    pub fn max_len(&self) -> usize {
        self.records.iter().map(TargetedSentence::len).max().unwrap_or(0)
    }
}

pub fn parse_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    match format {
        DatasetFormat::JsonLines => parse_json_lines(&text, path),
    }
}

pub fn parse_json_lines(text: &str, path: &Path) -> Result<Dataset> {
    let mut out = Dataset::default();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg,
        };
        let rec: JsonRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let label = match rec.label.parse::<RawLabel>().map_err(err)? {
            RawLabel::Conflict => {
                out.dropped_conflicts += 1;
                continue;
            }
            RawLabel::Polarity(l) => l,
        };
        let record = TargetedSentence::locate(&rec.sentence, &rec.target, rec.target_occurrence_index, label)
            .map_err(|e| err(e.to_string()))?;
        out.records.push(record);
    }
    if out.records.is_empty() {
        log::warn!("{}: no records", path.display());
    }
    if out.dropped_conflicts > 0 {
        log::info!("{}: dropped {} conflict-labelled records", path.display(), out.dropped_conflicts);
    }
    Ok(out)
}
