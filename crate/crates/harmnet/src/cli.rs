//! `harmnet` command-line interface.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use harmnet_core::data::{
    encode_text, gen_synthetic, tokenize, Profile, Report, SchemaName, Severity, SynthSpec,
};
use harmnet_core::metrics::{format_category_table, format_table};
use harmnet_core::model::{gradcheck_tiny, HarmClassifier, Variant, GRADCHECK_TOLERANCE};
use serde::Serialize;

use crate::bench::{format_rows, run_benchmark, scaled_config};
use crate::config::RunConfig;
use crate::io;
use crate::pipeline::{encode_all, evaluate_encoded, prepare, train_prepared};

pub const CONFIG_FILE: &str = "config.txt";
pub const VOCAB_FILE: &str = "vocab.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const EVAL_FILE: &str = "eval.json";
pub const EVAL_TABLE_FILE: &str = "eval.txt";
pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Parser)]
#[command(
    name = "harmnet",
    version,
    about = "Harm-level classification of incident reports"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labeled corpus as JSONL.
    GenSynth(GenSynthArgs),
    /// Split, train with early stopping and evaluate on the test split.
    Train(TrainArgs),
    /// Evaluate a trained model on a labeled dataset.
    Eval(EvalArgs),
    /// Classify text or a dataset with a trained model.
    Predict(PredictArgs),
    /// Compare analytic and finite-difference gradients of a tiny model.
    Gradcheck(GradcheckArgs),
    /// Train every variant plus the n-gram baselines on one split.
    Bench(BenchArgs),
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|_| {
        format!(
            "unknown variant; valid variants: {}",
            Variant::valid_names()
        )
    })
}

fn parse_schema(s: &str) -> Result<SchemaName, String> {
    s.parse().map_err(|e: harmnet_core::Error| e.to_string())
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse().map_err(|e: harmnet_core::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// ds1_like, ds2_like or separable
    #[arg(long, value_parser = parse_profile, default_value = "ds1_like")]
    pub profile: Profile,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// binary, four_level or full
    #[arg(long, value_parser = parse_schema)]
    pub schema: Option<SchemaName>,
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory (default: $HARMNET_OUT/<variant>-<schema>-s<seed>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub by_category: bool,
    /// Print JSON instead of tables.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, required_unless_present = "data", conflicts_with = "data")]
    pub text: Option<String>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Variant name, or `all`.
    #[arg(long)]
    pub variant: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Labeled JSONL corpus; a ds1_like corpus is generated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 5000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated variants (default: all).
    #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
    pub variants: Vec<Variant>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Also write the rows as JSON here.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    run(cli, out)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::GenSynth(a) => cmd_gen_synth(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Predict(a) => cmd_predict(&a, out),
        Command::Gradcheck(a) => cmd_gradcheck(&a, out),
        Command::Bench(a) => cmd_bench(&a, out),
    }
}

pub fn cmd_gen_synth(a: &GenSynthArgs, out: &mut dyn Write) -> Result<()> {
    let spec = SynthSpec::profile(a.profile);
    let reports = gen_synthetic(&spec, a.count, a.seed).context("data")?;
    io::write_jsonl(&a.out, &reports)?;
    let mut counts = [0usize; 10];
    for r in &reports {
        if let Some(s) = r.severity {
            counts[s.index()] += 1;
        }
    }
    let harm: usize = Severity::ALL
        .iter()
        .filter(|s| s.is_harm())
        .map(|s| counts[s.index()])
        .sum();
    let per_code: Vec<String> = Severity::ALL
        .iter()
        .map(|s| format!("{}={}", s.code(), counts[s.index()]))
        .collect();
    writeln!(
        out,
        "wrote {} reports to {}: {} harm={} ({:.3})",
        reports.len(),
        a.out.display(),
        per_code.join(" "),
        harm,
        if reports.is_empty() {
            0.0
        } else {
            harm as f64 / reports.len() as f64
        }
    )?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct RunSummary {
    variant: Variant,
    schema: SchemaName,
    parameters: usize,
    train_size: usize,
    valid_size: usize,
    test_size: usize,
    vocab_size: usize,
    best_epoch: usize,
    epochs_run: usize,
    stopped_early: bool,
    split_warnings: Vec<String>,
}

pub fn train_config_from(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &a.config {
        cfg.apply_file(p)?;
    }
    if let Some(d) = &a.data {
        cfg.data = Some(d.clone());
    }
    if let Some(v) = a.variant {
        cfg.variant = v;
    }
    if let Some(s) = a.schema {
        cfg.schema = s;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(o) = &a.out {
        cfg.out_dir = Some(o.clone());
    }
    cfg.apply_overrides(&a.overrides)?;
    Ok(cfg)
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = train_config_from(a)?;
    let data = cfg
        .data
        .clone()
        .ok_or_else(|| anyhow!("config: no dataset given (--data or data = ...)"))?;
    let dir = cfg.resolve_out_dir();
    let reports = io::read_jsonl(&data)?;
    let prep = prepare(&reports, &cfg)?;
    for w in &prep.split.warnings {
        writeln!(out, "warning: {w}")?;
    }
    let quiet = a.quiet;
    let mut log = Vec::new();
    let (model, history) = train_prepared(&prep, &cfg, |r| {
        if !quiet {
            log.push(format!(
                "epoch {:>3}  train_loss {:.5}  valid_loss {:.5}  valid_acc {:.4}  valid_macro_f1 {:.4}",
                r.epoch, r.train_loss, r.valid_loss, r.valid_accuracy, r.valid_macro_f1
            ));
        }
    })?;
    for line in log {
        writeln!(out, "{line}")?;
    }
    let eval = evaluate_encoded(&model, &prep.schema, &prep.test, None)?;

    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create run directory {}", dir.display()))?;
    io::atomic_write(&dir.join(CONFIG_FILE), cfg.to_text().as_bytes())?;
    io::save_vocab(&dir.join(VOCAB_FILE), &prep.vocab)?;
    io::save_checkpoint(
        &dir.join(CHECKPOINT_FILE),
        &io::Checkpoint::new(&model, &prep.schema, &prep.vocab),
    )?;
    io::write_history(&dir.join(HISTORY_FILE), &history.epochs)?;
    io::write_json(&dir.join(EVAL_FILE), &eval.report)?;
    let table = format_table(&eval.report);
    io::atomic_write(&dir.join(EVAL_TABLE_FILE), table.as_bytes())?;
    io::write_json(
        &dir.join(RUN_FILE),
        &RunSummary {
            variant: cfg.variant,
            schema: cfg.schema,
            parameters: model.num_parameters(),
            train_size: prep.train.len(),
            valid_size: prep.valid.len(),
            test_size: prep.test.len(),
            vocab_size: prep.vocab.size(),
            best_epoch: history.best_epoch + 1,
            epochs_run: history.epochs.len(),
            stopped_early: history.stopped_early,
            split_warnings: prep.split.warnings.clone(),
        },
    )?;
    writeln!(
        out,
        "best epoch {} of {}; test split:",
        history.best_epoch + 1,
        history.epochs.len()
    )?;
    write!(out, "{table}")?;
    writeln!(out, "run directory: {}", dir.display())?;
    Ok(())
}

/// Loads the checkpoint and vocabulary of a run directory and checks that
/// they belong together.
pub fn load_run(
    dir: &Path,
) -> Result<(
    io::Checkpoint,
    HarmClassifier,
    harmnet_core::data::Vocabulary,
)> {
    let ckpt = io::load_checkpoint(&dir.join(CHECKPOINT_FILE))?;
    let vocab = io::load_vocab(&dir.join(VOCAB_FILE))?;
    if vocab.hash() != ckpt.vocab_hash {
        bail!(
            "incompatible: vocabulary hash {} does not match the checkpoint's {}",
            vocab.hash(),
            ckpt.vocab_hash
        );
    }
    if vocab.size() != ckpt.config.vocab_size {
        bail!(
            "incompatible: vocabulary has {} entries, model expects {}",
            vocab.size(),
            ckpt.config.vocab_size
        );
    }
    let model = ckpt.model()?;
    Ok((ckpt, model, vocab))
}

#[derive(Debug, Serialize)]
struct EvalOutput<'a> {
    report: &'a harmnet_core::metrics::EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    by_category: Option<&'a std::collections::BTreeMap<String, harmnet_core::metrics::EvalReport>>,
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let (ckpt, model, vocab) = load_run(&a.model)?;
    let reports = io::read_jsonl(&a.data)?;
    let data = encode_all(&reports, &vocab, &ckpt.schema, ckpt.config.n_max)?;
    if data.is_empty() {
        bail!("data: {} holds no reports", a.data.display());
    }
    let categories: Vec<Option<String>> = reports.iter().map(|r| r.category.clone()).collect();
    let eval = evaluate_encoded(
        &model,
        &ckpt.schema,
        &data,
        a.by_category.then_some(categories.as_slice()),
    )?;
    if a.json {
        serde_json::to_writer_pretty(
            &mut *out,
            &EvalOutput {
                report: &eval.report,
                by_category: eval.by_category.as_ref(),
            },
        )?;
        writeln!(out)?;
    } else {
        write!(out, "{}", format_table(&eval.report))?;
        if let Some(groups) = &eval.by_category {
            writeln!(out)?;
            write!(out, "{}", format_category_table(groups))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    /// Tokens covered by one attention position.
    pub tokens: Vec<String>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictOutput {
    pub class: String,
    pub class_index: usize,
    pub probabilities: Vec<(String, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention: Option<Vec<Segment>>,
}

/// Predictions for raw texts; attention weights are grouped with the tokens
/// of their pooling window, masked positions omitted.
pub fn predict_texts(
    model: &HarmClassifier,
    vocab: &harmnet_core::data::Vocabulary,
    schema: &harmnet_core::data::LabelSchema,
    texts: &[&str],
) -> Result<Vec<PredictOutput>> {
    let cfg = model.config();
    let mut encoded = Vec::with_capacity(texts.len());
    for (i, t) in texts.iter().enumerate() {
        if tokenize(t).is_empty() {
            bail!("input: text {} is empty after tokenization", i + 1);
        }
        encoded.push(encode_text(t, vocab, cfg.n_max)?);
    }
    let window = if cfg.variant.has_conv() {
        cfg.pool_window
    } else {
        1
    };
    let mut outputs = Vec::with_capacity(texts.len());
    for (chunk_t, chunk_e) in texts.chunks(256).zip(encoded.chunks(256)) {
        let refs: Vec<_> = chunk_e.iter().collect();
        for ((text, enc), p) in chunk_t.iter().zip(chunk_e).zip(model.predict(&refs)?) {
            let tokens = tokenize(text);
            let attention = p.alpha.map(|alpha| {
                alpha
                    .iter()
                    .enumerate()
                    .filter(|&(pos, _)| {
                        enc.mask[pos * window..((pos + 1) * window).min(cfg.n_max)]
                            .iter()
                            .any(|&m| m)
                    })
                    .map(|(pos, &a)| Segment {
                        tokens: tokens
                            .iter()
                            .skip(pos * window)
                            .take(window)
                            .cloned()
                            .collect(),
                        alpha: a,
                    })
                    .collect()
            });
            outputs.push(PredictOutput {
                class: schema.class_names()[p.class].clone(),
                class_index: p.class,
                probabilities: schema.class_names().iter().cloned().zip(p.probs).collect(),
                attention,
            });
        }
    }
    Ok(outputs)
}

pub fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let (ckpt, model, vocab) = load_run(&a.model)?;
    let texts: Vec<String> = match (&a.text, &a.data) {
        (Some(t), _) => vec![t.clone()],
        (None, Some(p)) => io::read_jsonl(p)?
            .into_iter()
            .map(|r: Report| r.text)
            .collect(),
        (None, None) => bail!("input: give --text or --data"),
    };
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let preds = predict_texts(&model, &vocab, &ckpt.schema, &refs)?;
    for p in &preds {
        if a.json {
            serde_json::to_writer(&mut *out, p)?;
            writeln!(out)?;
        } else {
            writeln!(out, "class: {}", p.class)?;
            let probs: Vec<String> = p
                .probabilities
                .iter()
                .map(|(n, v)| format!("{n}={v}"))
                .collect();
            writeln!(out, "probabilities: {}", probs.join(" "))?;
            if let Some(att) = &p.attention {
                writeln!(out, "attention:")?;
                for s in att {
                    writeln!(out, "  {}\t{}", s.alpha, s.tokens.join(" "))?;
                }
            }
        }
    }
    Ok(())
}

pub fn cmd_gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    let variants: Vec<Variant> = if a.variant == "all" {
        Variant::ALL.to_vec()
    } else {
        vec![parse_variant(&a.variant).map_err(|e| anyhow!("config: {e}"))?]
    };
    let mut failures = Vec::new();
    for v in variants {
        let (r, worst) = gradcheck_tiny(v, a.seed)?;
        let pass = r.max_rel_error < GRADCHECK_TOLERANCE;
        writeln!(
            out,
            "{:<16} max_rel_error {:.3e}  coords {:>5}  worst {}  {}",
            v.name(),
            r.max_rel_error,
            r.coords_checked,
            worst,
            if pass { "PASS" } else { "FAIL" }
        )?;
        if !pass {
            failures.push(format!(
                "{v} (worst parameter {worst}, error {:.3e})",
                r.max_rel_error
            ));
        }
    }
    if !failures.is_empty() {
        bail!("gradient check failed for {}", failures.join(", "));
    }
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let reports = match &a.data {
        Some(p) => io::read_jsonl(p)?,
        None => gen_synthetic(&SynthSpec::profile(Profile::Ds1Like), a.count, a.seed)?,
    };
    let mut cfg = scaled_config(a.seed);
    cfg.apply_overrides(&a.overrides)?;
    let variants = if a.variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        a.variants.clone()
    };
    writeln!(out, "{} reports, schema {}", reports.len(), cfg.schema)?;
    let rows = run_benchmark(&reports, &cfg, &variants, |r| {
        eprintln!("{:<16} F-1 {:.3}  {:.1}s", r.name, r.f1, r.seconds);
    })?;
    write!(out, "{}", format_rows(&rows))?;
    if let Some(p) = &a.json_out {
        io::write_json(p, &rows)?;
    }
    Ok(())
}
