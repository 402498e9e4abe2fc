use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use tnet::checkpoint::Checkpoint;
use tnet::experiment::{load_store, reseeded_matrix, run, Corpus, RunOutcome};
use tnet::gradcheck::gradcheck as check_variant;
use tnet::head::most_informative_window;
use tnet::pipeline::{
    paired_t_test, parse_dataset, Dataset, DatasetFormat, EncodedExample, EvalReport, Label, TargetedSentence,
};
use tnet::trainer::predict_all;
use tnet::{Model, Variant};

use crate::config::{require_file, FileConfig, RunConfig, TrainFlags};
use crate::CliError;

fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    Ok(parse_dataset(require_file(path)?, DatasetFormat::JsonLines)?)
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn print_json(value: &Value) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let xs: Vec<f64> = xs.into_iter().collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

struct Data {
    corpus: Corpus,
    train: Dataset,
    test: Option<Dataset>,
}

fn load_data(cfg: &RunConfig) -> Result<Data, CliError> {
    let train = read_dataset(cfg.train_path()?)?;
    let test = cfg.test.as_deref().map(read_dataset).transpose()?;
    let empty = Vec::new();
    let corpus = Corpus::build(&train.records, test.as_ref().map_or(&empty, |d| &d.records))?;
    Ok(Data { corpus, train, test })
}

/// Runs seeds `seed .. seed + runs`, writing `run-{i}/checkpoint.json` and
/// `run-{i}/history.json` under `dir` when given.
fn train_runs(cfg: &RunConfig, data: &Data, dir: Option<&Path>) -> Result<Vec<Value>, CliError> {
    let base = load_store(&data.corpus.vocab, cfg.embeddings.as_deref(), cfg.hyper.dim_w, cfg.hyper.seed)?;
    let mut runs = Vec::with_capacity(cfg.runs);
    for i in 0..cfg.runs {
        let mut hyper = cfg.hyper.clone();
        hyper.seed = cfg.hyper.seed + i as u64;
        log::info!("{} run {i} (seed {})", hyper.variant, hyper.seed);
        let emb = reseeded_matrix(&base, hyper.seed);
        let (ck, outcome) = run(&data.corpus, &emb, &hyper)?;
        let mut entry = run_entry(&outcome);
        if let Some(dir) = dir {
            let run_dir = dir.join(format!("run-{i}"));
            fs::create_dir_all(&run_dir)?;
            let ck_path = run_dir.join("checkpoint.json");
            ck.save(&ck_path)?;
            write_json(&run_dir.join("history.json"), &serde_json::to_value(&outcome.history)?)?;
            entry["checkpoint"] = json!(ck_path);
        }
        runs.push(entry);
    }
    Ok(runs)
}

fn run_entry(outcome: &RunOutcome) -> Value {
    let h = &outcome.history;
    json!({
        "seed": outcome.seed,
        "epochs": h.epochs(),
        "best_epoch": h.best_epoch,
        "best_heldout_accuracy": h.heldout_accuracy.get(h.best_epoch),
        "final_train_loss": h.train_loss.last(),
        "test": outcome.test,
    })
}

fn test_means(runs: &[Value]) -> Value {
    let metric = |key: &str| mean(runs.iter().filter_map(|r| r["test"][key].as_f64()));
    json!({ "accuracy": metric("accuracy"), "macro_f1": metric("macro_f1") })
}

fn dataset_summary(path: Option<&Path>, ds: Option<&Dataset>) -> Value {
    match (path, ds) {
        (Some(p), Some(d)) => json!({
            "path": p,
            "records": d.records.len(),
            "dropped_conflicts": d.dropped_conflicts,
        }),
        _ => Value::Null,
    }
}

pub fn train(flags: &TrainFlags, file: &FileConfig) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(flags, file)?;
    let data = load_data(&cfg)?;
    let runs = train_runs(&cfg, &data, Some(&cfg.out))?;
    let summary = json!({
        "variant": cfg.hyper.variant,
        "dataset": cfg.dataset.name(),
        "hyperparams": cfg.hyper,
        "embeddings": cfg.embeddings,
        "vocabulary": data.corpus.vocab.len(),
        "pad_len": data.corpus.pad_len,
        "train": dataset_summary(cfg.train.as_deref(), Some(&data.train)),
        "test": dataset_summary(cfg.test.as_deref(), data.test.as_ref()),
        "runs": runs,
        "mean_test": test_means(&runs),
    });
    write_json(&cfg.out.join("summary.json"), &summary)?;
    print_json(&summary)
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// A checkpoint file, or a training output directory holding run-*/checkpoint.json.
    /// Give it twice to compare two systems.
    #[arg(long, required = true, num_args = 1)]
    checkpoint: Vec<PathBuf>,
    /// Labelled test records (JSON lines).
    #[arg(long)]
    test: Option<PathBuf>,
    /// Paired two-sided t-test between the two systems.
    #[arg(long)]
    ttest: bool,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn checkpoint_paths(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if !path.is_dir() {
        return Err(CliError::Usage(format!("file not found: {}", path.display())));
    }
    let mut found: Vec<(usize, PathBuf)> = fs::read_dir(path)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let i = name.strip_prefix("run-")?.parse().ok()?;
            let ck = e.path().join("checkpoint.json");
            ck.is_file().then_some((i, ck))
        })
        .collect();
    found.sort();
    if found.is_empty() {
        return Err(CliError::Usage(format!("no run-*/checkpoint.json under {}", path.display())));
    }
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// Encodes `records` for `ck`, padding to at least the training length.
fn encode_for(ck: &Checkpoint, records: &[TargetedSentence]) -> Result<Vec<EncodedExample>, CliError> {
    let pad_len = records.iter().map(TargetedSentence::len).max().unwrap_or(0).max(ck.pad_len);
    Ok(records
        .iter()
        .map(|r| EncodedExample::encode(r, &ck.vocab, pad_len))
        .collect::<tnet::Result<_>>()?)
}

struct Scored {
    report: EvalReport,
    correct: Vec<f64>,
}

fn score(model: &Model, examples: &[EncodedExample], golds: &[Label]) -> Result<Scored, CliError> {
    let preds = predict_all(model, examples)?;
    let correct = preds.iter().zip(golds).map(|(p, g)| f64::from(u8::from(p == g))).collect();
    Ok(Scored {
        report: EvalReport::new(&preds, golds)?,
        correct,
    })
}

pub fn eval(args: &EvalArgs, file: &FileConfig) -> Result<(), CliError> {
    if args.checkpoint.len() > 2 {
        return Err(CliError::Usage("--checkpoint may be given at most twice".into()));
    }
    if args.ttest && args.checkpoint.len() != 2 {
        return Err(CliError::Usage("--ttest needs two --checkpoint arguments".into()));
    }
    let test_path = args
        .test
        .as_deref()
        .or(file.test.as_deref())
        .ok_or_else(|| CliError::Usage("a test file is required (--test or `test` in the config file)".into()))?;
    let test = read_dataset(test_path)?;
    if test.records.is_empty() {
        return Err(CliError::Usage(format!("{}: no labelled records", test_path.display())));
    }
    let golds: Vec<Label> = test.records.iter().map(|r| r.label).collect();

    let mut systems = Vec::new();
    let mut scored: Vec<Vec<Scored>> = Vec::new();
    for source in &args.checkpoint {
        let mut runs = Vec::new();
        let mut side = Vec::new();
        for path in checkpoint_paths(source)? {
            let ck = Checkpoint::load(&path)?;
            let examples = encode_for(&ck, &test.records)?;
            let s = score(&ck.model()?, &examples, &golds)?;
            runs.push(json!({
                "checkpoint": path,
                "variant": ck.hyperparams.variant,
                "seed": ck.hyperparams.seed,
                "report": s.report,
            }));
            side.push(s);
        }
        systems.push(json!({
            "source": source,
            "runs": runs,
            "mean": {
                "accuracy": mean(side.iter().map(|s| s.report.accuracy)),
                "macro_f1": mean(side.iter().map(|s| s.report.macro_f1)),
            },
        }));
        scored.push(side);
    }

    let mut report = json!({
        "test": dataset_summary(Some(test_path), Some(&test)),
        "systems": systems,
    });
    if args.ttest {
        report["ttest"] = ttest(&scored[0], &scored[1])?;
    }
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    print_json(&report)
}

/// Pairs runs when both systems have several, otherwise pairs test
/// examples by correctness.
fn ttest(a: &[Scored], b: &[Scored]) -> Result<Value, CliError> {
    let outcome = |r: tnet::Result<tnet::pipeline::TTest>| match r {
        Ok(t) => serde_json::to_value(t).expect("plain numbers"),
        Err(e) => json!({ "error": e.to_string() }),
    };
    match (a.len(), b.len()) {
        (1, 1) => Ok(json!({
            "paired_over": "examples",
            "pairs": a[0].correct.len(),
            "accuracy": outcome(paired_t_test(&a[0].correct, &b[0].correct)),
            "macro_f1": Value::Null,
        })),
        (n, m) if n == m => {
            let metric = |side: &[Scored], f: fn(&EvalReport) -> f64| side.iter().map(|s| f(&s.report)).collect::<Vec<_>>();
            Ok(json!({
                "paired_over": "runs",
                "pairs": n,
                "accuracy": outcome(paired_t_test(&metric(a, |r| r.accuracy), &metric(b, |r| r.accuracy))),
                "macro_f1": outcome(paired_t_test(&metric(a, |r| r.macro_f1), &metric(b, |r| r.macro_f1))),
            }))
        }
        (n, m) => Err(CliError::Usage(format!("--ttest needs the same number of runs on both sides, got {n} and {m}"))),
    }
}

#[derive(Debug, clap::Args)]
pub struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Whitespace-tokenized sentence.
    #[arg(long)]
    sentence: String,
    #[arg(long)]
    target: String,
    /// 0-based occurrence of the target; needed when it appears more than once.
    #[arg(long)]
    occurrence: Option<usize>,
}

pub fn predict(args: &PredictArgs) -> Result<(), CliError> {
    let ck = Checkpoint::load(require_file(&args.checkpoint)?)?;
    // the label is a placeholder; prediction ignores it
    let record = TargetedSentence::locate(&args.sentence, &args.target, args.occurrence, Label::Neutral)?;
    let mut example = encode_for(&ck, std::slice::from_ref(&record))?.remove(0);
    example.label = None;
    let prediction = ck.model()?.predict(&example)?;
    let s = ck.hyperparams.kernel_size;
    let ngram = most_informative_window(&prediction.pool_argmax).map(|(kernel, start)| {
        let tokens: Vec<&str> = example.ids[start..start + s].iter().map(|&id| ck.vocab.token(id)).collect();
        // 1-based like target_start
        json!({ "start": start + 1, "kernel": kernel, "tokens": tokens })
    });
    let [p, n, o] = prediction.probabilities;
    print_json(&json!({
        "sentence": record.tokens,
        "target": record.target_tokens(),
        "target_start": record.target_start,
        "label": prediction.label,
        "probabilities": { "positive": p, "negative": n, "neutral": o },
        "ngram": ngram,
    }))
}

#[derive(Debug, clap::Args)]
pub struct GradcheckArgs {
    /// Variant to check; all variants when omitted.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Offset the analytic gradient of this parameter to confirm the check can fail.
    #[arg(long, hide = true)]
    corrupt: Option<String>,
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<(), CliError> {
    let variants = match &args.variant {
        Some(v) => vec![v.parse::<Variant>().map_err(|e| CliError::Usage(e.to_string()))?],
        None => Variant::ALL.to_vec(),
    };
    let mut reports = Vec::new();
    for v in variants {
        let report = check_variant(v, args.seed, args.corrupt.as_deref())?;
        for g in &report.groups {
            log::info!("{v} {}: {:.3e}", g.name, g.max_rel_error);
        }
        reports.push(report);
    }
    let passed = reports.iter().all(|r| r.passed);
    print_json(&json!({ "passed": passed, "seed": args.seed, "reports": reports }))?;
    if passed {
        Ok(())
    } else {
        let failed: Vec<String> = reports
            .iter()
            .flat_map(|r| r.groups.iter().filter(|g| !g.passed).map(move |g| format!("{}:{}", r.variant, g.name)))
            .collect();
        Err(CliError::CheckFailed(format!("gradient check failed for {}", failed.join(", "))))
    }
}

#[derive(Debug, clap::Args)]
pub struct AblateArgs {
    #[command(flatten)]
    flags: TrainFlags,
    /// Comma-separated variants; all variants when omitted.
    #[arg(long, value_delimiter = ',')]
    variants: Vec<String>,
}

pub fn ablate(args: &AblateArgs, file: &FileConfig) -> Result<(), CliError> {
    if args.flags.variant.is_some() {
        return Err(CliError::Usage("ablate takes --variants, not --variant".into()));
    }
    let variants: Vec<Variant> = if args.variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        args.variants
            .iter()
            .map(|v| v.parse().map_err(|e: tnet::Error| CliError::Usage(e.to_string())))
            .collect::<Result<_, _>>()?
    };
    let base = RunConfig::resolve(&args.flags, file)?;
    if base.test.is_none() {
        return Err(CliError::Usage("ablate needs a test file (--test or `test` in the config file)".into()));
    }
    let data = load_data(&base)?;
    let mut rows = Vec::new();
    for variant in variants {
        let mut flags = args.flags.clone();
        flags.variant = Some(variant.name().into());
        let cfg = RunConfig::resolve(&flags, file)?;
        let runs = train_runs(&cfg, &data, None)?;
        rows.push(json!({
            "variant": variant,
            "hyperparams": cfg.hyper,
            "runs": runs,
            "mean_test": test_means(&runs),
        }));
    }
    let result = json!({
        "dataset": base.dataset.name(),
        "train": dataset_summary(base.train.as_deref(), Some(&data.train)),
        "test": dataset_summary(base.test.as_deref(), data.test.as_ref()),
        "variants": rows,
    });
    let json_path = base.out.join("ablation.json");
    write_json(&json_path, &result)?;
    let table = ablation_table(&rows);
    fs::write(base.out.join("ablation.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn ablation_table(rows: &[Value]) -> String {
    let pct = |v: &Value| v.as_f64().map_or("-".to_string(), |x| format!("{:.2}", 100.0 * x));
    let mut out = format!("{:<20} {:>5} {:>9} {:>9}\n", "variant", "runs", "accuracy", "macro-F1");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<20} {:>5} {:>9} {:>9}",
            r["variant"].as_str().unwrap_or("?"),
            r["runs"].as_array().map_or(0, Vec::len),
            pct(&r["mean_test"]["accuracy"]),
            pct(&r["mean_test"]["macro_f1"]),
        );
    }
    out
}
