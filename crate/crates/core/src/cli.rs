//! The `racnn` command line tool.
//!
//! Every subcommand reads its hyperparameters from an optional TOML file
//! (`--config`); `--seed`, `--folds`, `--replications` and `--workers`
//! override the file. Logs go to standard error. Data goes to the paths
//! named by `--out`, or to standard output where a command allows it.
//!
//! Exit codes: 0 success, 1 internal failure, 2 configuration or usage
//! error, 3 bad input data.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{
    accuracy, emit_report, explain_document, generate_synthetic, rationale_precision_at_k, ReportRow,
    SyntheticSpec,
};
use crate::gradcheck::{gradcheck, TOLERANCE};
use crate::models::checkpoint::Checkpoint;
use crate::models::{predict, rank_rationales, ModelKind};
use crate::tensor::Tensor;
use crate::text::{
    build_vocabulary, index_corpus, load_corpus, load_embeddings, write_corpus, Document, TextDocument,
    Vocabulary,
};
use crate::train::{run_cross_validation, split_validation, train_model, TrainConfig, Workers};

#[derive(Debug, Parser)]
#[command(name = "racnn", version, about = "Rationale-augmented CNN document classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a planted-rationale corpus (JSON lines) to --out.
    GenSynthetic(GenArgs),
    /// Train one model on a corpus; writes the checkpoint to --out and a
    /// training log to <out>.log.json.
    Train(TrainArgs),
    /// Replicated k-fold cross-validation; writes metrics.jsonl,
    /// summary.md, summary.tsv and plot.tsv into the --out directory.
    Cv(CvArgs),
    /// Accuracy (and rationale precision@1 for ra-cnn) of a checkpoint on a
    /// labelled corpus.
    Eval(EvalArgs),
    /// Top-k rationale sentences per document, as JSON lines.
    Explain(ExplainArgs),
    /// Compare analytic and finite-difference gradients on a tiny model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// TOML file with synthetic corpus settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct Overrides {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    pub model: ModelKind,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    pub model: ModelKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_parser = parse_kind)]
    pub model: ModelKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, hide = true)]
    pub corrupt_gradient: Option<String>,
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse::<ModelKind>().map_err(|e| match e {
        Error::Config(m) => m,
        other => other.to_string(),
    })
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code; data printed to standard output goes
/// to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, stdout: &mut dyn Write) -> Result<i32> {
    match command {
        Command::GenSynthetic(a) => cmd_gen_synthetic(&a).map(|_| 0),
        Command::Train(a) => cmd_train(&a).map(|_| 0),
        Command::Cv(a) => cmd_cv(&a).map(|_| 0),
        Command::Eval(a) => cmd_eval(&a, stdout).map(|_| 0),
        Command::Explain(a) => cmd_explain(&a, stdout).map(|_| 0),
        Command::Gradcheck(a) => cmd_gradcheck(&a, stdout),
    }
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => TrainConfig::load(p),
        None => Ok(TrainConfig::default()),
    }
}

fn apply_overrides(config: &mut TrainConfig, o: &Overrides) -> Result<()> {
    if let Some(seed) = o.seed {
        config.seed = seed;
    }
    if let Some(w) = o.workers {
        config.workers = w;
    }
    config.validate()
}

fn read_corpus(path: &Path) -> Result<Vec<TextDocument>> {
    let docs = load_corpus(path).map_err(|e| match e {
        Error::Io(io) => Error::Data(format!("{}: {io}", path.display())),
        other => other,
    })?;
    if docs.is_empty() {
        return Err(Error::Data(format!("{}: corpus is empty", path.display())));
    }
    Ok(docs)
}

struct Prepared {
    vocab: Vocabulary,
    docs: Vec<Document>,
    embeddings: Option<Tensor>,
}

fn prepare(texts: &[TextDocument], config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Prepared> {
    let vocab = build_vocabulary(texts, config.vocab_max_size)?;
    let docs = index_corpus(texts, &vocab, config.padding_policy());
    let embeddings = match &config.embeddings_path {
        Some(p) => Some(load_embeddings(p, &vocab, config.embedding_dim, rng)?),
        None => None,
    };
    info!("{} documents, vocabulary of {}", docs.len(), vocab.len());
    Ok(Prepared { vocab, docs, embeddings })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn json_line<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::Contract(e.to_string()))
}

pub fn cmd_gen_synthetic(args: &GenArgs) -> Result<()> {
    let mut spec = match &args.config {
        Some(p) => {
            let src = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            toml::from_str::<SyntheticSpec>(&src).map_err(|e| {
                let line = e.span().map_or(1, |s| src[..s.start].matches('\n').count() + 1);
                Error::Config(format!("{}:{line}: {}", p.display(), e.message()))
            })?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let records = generate_synthetic(&spec)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_corpus(&args.out, &records)?;
    info!("wrote {} documents to {}", records.len(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainLog<'a> {
    model: ModelKind,
    documents: usize,
    training_documents: usize,
    validation_documents: usize,
    best_epoch: usize,
    validation_accuracy: f64,
    sentence_dropout: Option<f64>,
    sentence_losses: &'a [f64],
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut config = load_config(args.overrides.config.as_deref())?;
    apply_overrides(&mut config, &args.overrides)?;
    let texts = read_corpus(&args.corpus)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let prep = prepare(&texts, &config, &mut rng)?;
    let all: Vec<usize> = (0..prep.docs.len()).collect();
    let (train_idx, val_idx) = split_validation(&all, config.validation_fraction, &mut rng)?;
    let train: Vec<&Document> = train_idx.iter().map(|&i| &prep.docs[i]).collect();
    let val: Vec<&Document> = val_idx.iter().map(|&i| &prep.docs[i]).collect();
    let workers = Workers::new(config.workers)?;
    let model = train_model(
        args.model,
        &train,
        &val,
        prep.vocab.len(),
        prep.embeddings.as_ref(),
        &config,
        &workers,
        &mut rng,
    )?;

    let log = TrainLog {
        model: args.model,
        documents: prep.docs.len(),
        training_documents: train.len(),
        validation_documents: val.len(),
        best_epoch: model.best_epoch,
        validation_accuracy: model.validation_accuracy,
        sentence_dropout: model.sentence_dropout,
        sentence_losses: &model.sentence_losses,
    };
    let checkpoint = Checkpoint {
        params: model.params,
        vocab: prep.vocab,
        config,
        sentence_dropout: model.sentence_dropout,
    };
    write_file(&args.out, &checkpoint.to_bytes()?)?;
    write_file(&train_log_path(&args.out), json_line(&log)?.as_bytes())?;
    info!("wrote checkpoint {}", args.out.display());
    Ok(())
}

/// Where `train` writes its log for checkpoint path `out`.
pub fn train_log_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".log.json");
    out.with_file_name(name)
}

pub fn cmd_cv(args: &CvArgs) -> Result<()> {
    let mut config = load_config(args.overrides.config.as_deref())?;
    if let Some(f) = args.folds {
        config.folds = f;
    }
    if let Some(r) = args.replications {
        config.replications = r;
    }
    apply_overrides(&mut config, &args.overrides)?;
    let texts = read_corpus(&args.corpus)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let prep = prepare(&texts, &config, &mut rng)?;
    let outcome = run_cross_validation(&prep.docs, prep.vocab.len(), prep.embeddings.as_ref(), args.model, &config)?;

    let mut metrics = String::new();
    for row in &outcome.rows {
        metrics.push_str(&json_line(row)?);
    }
    metrics.push_str(&json_line(&serde_json::json!({ "summary": &outcome.summary }))?);
    fs::create_dir_all(&args.out)?;
    write_file(&args.out.join("metrics.jsonl"), metrics.as_bytes())?;

    let dataset = args
        .corpus
        .file_stem()
        .map_or_else(|| "corpus".to_owned(), |s| s.to_string_lossy().into_owned());
    let report = ReportRow {
        model: args.model.name().to_owned(),
        dataset,
        values: outcome.summary.replication_means.clone(),
    };
    emit_report(&[report], &args.out)?;
    info!(
        "{}: mean accuracy {:.4} (min {:.4}, max {:.4})",
        args.model, outcome.summary.mean, outcome.summary.min, outcome.summary.max
    );
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Data(format!("{}: {io}", path.display())),
        other => other,
    })
}

#[derive(Serialize)]
struct EvalSummary {
    model: ModelKind,
    documents: usize,
    accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    rationale_precision_at_1: Option<f64>,
}

pub fn cmd_eval(args: &EvalArgs, stdout: &mut dyn Write) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let texts = read_corpus(&args.corpus)?;
    let docs = index_corpus(&texts, &ckpt.vocab, ckpt.config.padding_policy());
    let workers = Workers::new(args.workers.unwrap_or(ckpt.config.workers))?;
    let kind = ckpt.params.kind;
    let outputs = workers.map(docs.len(), |i| -> Result<(usize, Option<f64>)> {
        let pred = predict(&ckpt.params, &docs[i])?;
        let p_at_1 = if kind == ModelKind::RaCnn && docs[i].has_rationales() {
            let ranked = rank_rationales(&pred)?;
            Some(rationale_precision_at_k(&ranked, &docs[i].rationale_mask, 1)?)
        } else {
            None
        };
        Ok((pred.predicted_class, p_at_1))
    });
    let outputs = outputs.into_iter().collect::<Result<Vec<_>>>()?;
    let predicted: Vec<(&str, usize)> = docs
        .iter()
        .zip(&outputs)
        .map(|(d, (c, _))| (d.doc_id.as_str(), *c))
        .collect();
    let gold: Vec<(&str, usize)> = docs.iter().map(|d| (d.doc_id.as_str(), d.label.index())).collect();
    let precisions: Vec<f64> = outputs.iter().filter_map(|(_, p)| *p).collect();
    let summary = EvalSummary {
        model: kind,
        documents: docs.len(),
        accuracy: accuracy(&predicted, &gold)?,
        rationale_precision_at_1: (!precisions.is_empty())
            .then(|| precisions.iter().sum::<f64>() / precisions.len() as f64),
    };
    emit(args.out.as_deref(), &json_line(&summary)?, stdout)
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => write_file(path, text.as_bytes()),
        None => {
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn cmd_explain(args: &ExplainArgs, stdout: &mut dyn Write) -> Result<()> {
    if args.k == 0 {
        return Err(Error::Config("--k must be at least 1".into()));
    }
    let ckpt = load_checkpoint(&args.checkpoint)?;
    if ckpt.params.kind != ModelKind::RaCnn {
        return Err(Error::Capability(format!(
            "{} checkpoint: model provides no rationale scores",
            ckpt.params.kind
        )));
    }
    let texts = read_corpus(&args.corpus)?;
    let docs = index_corpus(&texts, &ckpt.vocab, ckpt.config.padding_policy());
    let mut lines = String::new();
    let mut clamped_docs = 0usize;
    for (text, doc) in texts.iter().zip(&docs) {
        let (report, clamped) = explain_document(&ckpt.params, text, doc, args.k)?;
        clamped_docs += usize::from(clamped);
        lines.push_str(&json_line(&report)?);
    }
    if clamped_docs > 0 {
        warn!("--k {} exceeds the sentence count of {clamped_docs} document(s); clamped", args.k);
    }
    emit(args.out.as_deref(), &lines, stdout)
}

pub fn cmd_gradcheck(args: &GradcheckArgs, stdout: &mut dyn Write) -> Result<i32> {
    let report = gradcheck(args.model, args.seed, args.corrupt_gradient.as_deref())?;
    for p in &report.params {
        info!("{}: {} entries, max relative error {:.3e}", p.name, p.entries, p.max_rel_error);
    }
    writeln!(stdout, "{} max relative error {:.6e}", args.model, report.max_rel_error())?;
    if report.passed() {
        return Ok(0);
    }
    let worst = report.worst().expect("a failing report has parameters");
    eprintln!(
        "gradcheck failed: parameter {} entry {} has relative error {:.3e} (tolerance {TOLERANCE:e})",
        worst.name, worst.worst_index, worst.max_rel_error
    );
    Ok(1)
}
