//! Split → vocabulary → encode → train → evaluate, shared by the CLI and the
//! benchmark.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use harmnet_core::data::{
    build_vocab, encode, EncodedReport, LabelSchema, Report, TokenIds, Vocabulary,
};
use harmnet_core::metrics::{evaluate, per_category_report, EvalInput, EvalReport};
use harmnet_core::model::{argmax, HarmClassifier};
use harmnet_core::training::{
    predict_probs, split_indices, train_with_callback, EpochRecord, SplitIndices, SplitRatios,
    TrainHistory,
};

use crate::config::RunConfig;

pub struct Prepared {
    pub schema: LabelSchema,
    pub vocab: Vocabulary,
    pub split: SplitIndices,
    pub train: Vec<EncodedReport>,
    pub valid: Vec<EncodedReport>,
    pub test: Vec<EncodedReport>,
}

pub fn labels_of(reports: &[Report], schema: &LabelSchema) -> Result<Vec<usize>> {
    reports
        .iter()
        .enumerate()
        .map(|(i, r)| match r.severity {
            Some(s) => Ok(schema.map(s)),
            None => bail!("data: report {} has no severity label", i + 1),
        })
        .collect()
}

/// Splits 60/20/20, builds the vocabulary from training texts only and
/// encodes every split.
pub fn prepare(reports: &[Report], cfg: &RunConfig) -> Result<Prepared> {
    let schema = LabelSchema::from_name(cfg.schema);
    let labels = labels_of(reports, &schema)?;
    let distinct: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        bail!(
            "data: fewer than two classes present under the {} schema",
            cfg.schema
        );
    }
    let split =
        split_indices(&labels, SplitRatios::default(), cfg.seed, cfg.stratify).context("data")?;
    let vocab = build_vocab(
        split.train.iter().map(|&i| reports[i].text.as_str()),
        cfg.min_count,
    )
    .context("data")?;
    let enc = |idx: &[usize]| -> Result<Vec<EncodedReport>> {
        idx.iter()
            .map(|&i| encode(&reports[i], &vocab, &schema, cfg.n_max).context("data"))
            .collect()
    };
    let (train, valid, test) = (enc(&split.train)?, enc(&split.valid)?, enc(&split.test)?);
    Ok(Prepared {
        schema,
        vocab,
        split,
        train,
        valid,
        test,
    })
}

pub fn train_prepared(
    prep: &Prepared,
    cfg: &RunConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(HarmClassifier, TrainHistory)> {
    let model_cfg = cfg.model_config(prep.vocab.size(), prep.schema.num_classes());
    let model = HarmClassifier::build(model_cfg).context("config")?;
    train_with_callback(
        model,
        &prep.train,
        &prep.valid,
        &cfg.train_config(),
        on_epoch,
    )
    .context("training")
}

/// Global evaluation and, on request, a per-category breakdown.
pub struct Evaluated {
    pub report: EvalReport,
    pub by_category: Option<BTreeMap<String, EvalReport>>,
}

pub fn evaluate_encoded(
    model: &HarmClassifier,
    schema: &LabelSchema,
    data: &[EncodedReport],
    categories: Option<&[Option<String>]>,
) -> Result<Evaluated> {
    let tokens: Vec<&TokenIds> = data.iter().map(|r| &r.tokens).collect();
    let probs = predict_probs(model, &tokens, 256)?;
    let truth: Vec<usize> = data.iter().map(|r| r.label).collect();
    let pred: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let positive = schema.harm_class();
    let scores: Option<Vec<f64>> = positive.map(|c| probs.iter().map(|p| p[c]).collect());
    let input = EvalInput {
        truth: &truth,
        pred: &pred,
        positive_scores: scores.as_deref(),
        class_names: schema.class_names(),
        positive_class: positive,
    };
    let report = evaluate(&input)?;
    let by_category = categories
        .map(|c| per_category_report(c, &input))
        .transpose()?;
    Ok(Evaluated {
        report,
        by_category,
    })
}

pub fn encode_all(
    reports: &[Report],
    vocab: &Vocabulary,
    schema: &LabelSchema,
    n_max: usize,
) -> Result<Vec<EncodedReport>> {
    reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            encode(r, vocab, schema, n_max).with_context(|| format!("data: report {}", i + 1))
        })
        .collect()
}
