//! Run configuration: command-line flags over an optional TOML file over
//! the published defaults for (variant, dataset).

use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;
use tnet::trainer::{DatasetName, Hyperparams};
use tnet::Variant;

use crate::CliError;

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub variant: Option<String>,
    pub dataset: Option<String>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub runs: Option<usize>,
    pub out: Option<PathBuf>,
    /// Any [`Hyperparams`] field.
    #[serde(default)]
    pub hyper: toml::Table,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(require_file(path)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Flags shared by the commands that train.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct TrainFlags {
    /// Model variant, e.g. tnet-lf or wo-position-as.
    #[arg(long)]
    pub variant: Option<String>,
    /// Dataset whose published hyper-parameters are used: laptop, rest or twitter.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Training records (JSON lines).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test records (JSON lines).
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Word vectors in text format. Without it every word gets a random vector.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Independent runs with seeds seed, seed+1, ...
    #[arg(long)]
    pub runs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// Use the sentence encoder for the target as well.
    #[arg(long)]
    pub share_target_encoder: bool,
    /// Separate transformation weights for every layer.
    #[arg(long)]
    pub per_layer_params: bool,
    #[arg(long)]
    pub freeze_embeddings: bool,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub hyper: Hyperparams,
    pub dataset: DatasetName,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub runs: usize,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn resolve(flags: &TrainFlags, file: &FileConfig) -> Result<Self, CliError> {
        let variant: Variant = pick(flags.variant.clone(), file.variant.clone(), "tnet-lf".into())
            .parse()
            .map_err(usage)?;
        let dataset: DatasetName = pick(flags.dataset.clone(), file.dataset.clone(), "laptop".into())
            .parse()
            .map_err(usage)?;
        let mut hyper = overlay(Hyperparams::defaults(variant, dataset), &file.hyper)?;
        hyper.variant = variant;
        hyper.seed = pick(flags.seed, file.seed, hyper.seed);
        hyper.epochs = pick(flags.epochs, file.epochs, hyper.epochs);
        if let Some(b) = flags.batch_size {
            hyper.batch_size = b;
        }
        if let Some(l) = flags.layers {
            hyper.layers = l;
        }
        hyper.share_target_encoder |= flags.share_target_encoder;
        hyper.per_layer_params |= flags.per_layer_params;
        hyper.freeze_embeddings |= flags.freeze_embeddings;
        hyper.validate().map_err(usage)?;

        let runs = pick(flags.runs, file.runs, 1);
        if runs == 0 {
            return Err(CliError::Usage("--runs must be at least 1".into()));
        }
        let cfg = Self {
            hyper,
            dataset,
            train: flags.train.clone().or_else(|| file.train.clone()),
            test: flags.test.clone().or_else(|| file.test.clone()),
            embeddings: flags.embeddings.clone().or_else(|| file.embeddings.clone()),
            runs,
            out: flags.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| "tnet-out".into()),
        };
        for p in [&cfg.train, &cfg.test, &cfg.embeddings].into_iter().flatten() {
            require_file(p)?;
        }
        Ok(cfg)
    }

    pub fn train_path(&self) -> Result<&Path, CliError> {
        self.train
            .as_deref()
            .ok_or_else(|| CliError::Usage("a training file is required (--train or `train` in the config file)".into()))
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn usage(e: tnet::Error) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn require_file(path: &Path) -> Result<&Path, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::Usage(format!("file not found: {}", path.display())))
    }
}

/// Replaces fields of `base` with the entries of `table`; unknown keys are
/// rejected.
fn overlay(base: Hyperparams, table: &toml::Table) -> Result<Hyperparams, CliError> {
    let mut value = serde_json::to_value(&base).map_err(|e| CliError::Usage(e.to_string()))?;
    let fields = value.as_object_mut().expect("struct serializes to an object");
    for (key, v) in table {
        if !fields.contains_key(key) {
            return Err(CliError::Usage(format!("unknown hyper-parameter `{key}`")));
        }
        let v: Value = serde_json::to_value(v).map_err(|e| CliError::Usage(e.to_string()))?;
        fields.insert(key.clone(), v);
    }
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("hyper-parameters: {e}")))
}
