//! Side-by-side comparison of all neural variants and the bag-of-n-grams
//! baselines on one shared split, scored on the harm class of the test set.

use std::time::Instant;

use anyhow::{Context, Result};
use harmnet_core::baselines::{
    linear_fit, linear_predict, mnb_fit, mnb_predict, LinearConfig, NgramFeaturizer, SparseVec,
};
use harmnet_core::data::{tokenize, Report, SchemaName};
use harmnet_core::metrics::{evaluate, EvalInput, EvalReport};
use harmnet_core::model::Variant;
use serde::Serialize;

use crate::config::RunConfig;
use crate::pipeline::{evaluate_encoded, labels_of, prepare, train_prepared, Prepared};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
    pub epochs: usize,
    pub seconds: f64,
}

impl BenchRow {
    fn new(name: &str, report: &EvalReport, epochs: usize, seconds: f64) -> Self {
        let h = report.headline();
        BenchRow {
            name: name.to_string(),
            precision: h.precision,
            recall: h.recall,
            f1: h.f1,
            auc: report.auc,
            epochs,
            seconds,
        }
    }
}

/// Reduced network size that keeps ten variants on 5,000 reports within a
/// few minutes on one CPU core.
pub fn scaled_config(seed: u64) -> RunConfig {
    RunConfig {
        schema: SchemaName::Binary,
        embed_dim: 32,
        n_max: 64,
        filter_widths: vec![2, 3, 4, 5],
        channels: 16,
        pool_window: 4,
        hidden_size: 32,
        batch_size: 32,
        max_epochs: 15,
        early_stop_patience: 3,
        seed,
        ..RunConfig::default()
    }
}

fn featurize_split(prep_docs: &[Vec<String>], f: &NgramFeaturizer) -> Result<Vec<SparseVec>> {
    prep_docs
        .iter()
        .map(|d| f.featurize(d).map_err(Into::into))
        .collect()
}

/// Scores a baseline's test predictions and harm scores.
fn score(prep: &Prepared, pred: Vec<usize>, scores: Vec<f64>) -> Result<EvalReport> {
    let truth: Vec<usize> = prep.test.iter().map(|r| r.label).collect();
    Ok(evaluate(&EvalInput {
        truth: &truth,
        pred: &pred,
        positive_scores: Some(&scores),
        class_names: prep.schema.class_names(),
        positive_class: prep.schema.harm_class(),
    })?)
}

/// Multinomial naive Bayes and the linear hinge model over n-grams of the
/// given orders, fitted on the training split.
pub fn baseline_rows(reports: &[Report], prep: &Prepared, seed: u64) -> Result<Vec<BenchRow>> {
    let docs = |idx: &[usize]| -> Vec<Vec<String>> {
        idx.iter().map(|&i| tokenize(&reports[i].text)).collect()
    };
    let train_docs = docs(&prep.split.train);
    let test_docs = docs(&prep.split.test);
    let train_labels = labels_of(
        &prep
            .split
            .train
            .iter()
            .map(|&i| reports[i].clone())
            .collect::<Vec<_>>(),
        &prep.schema,
    )?;
    let k = prep.schema.num_classes();
    let harm = prep.schema.harm_class().unwrap_or(k - 1);
    let mut rows = Vec::new();
    for (label, orders) in [
        ("bow1", vec![1]),
        ("bow12", vec![1, 2]),
        ("bow123", vec![1, 2, 3]),
    ] {
        let mut f = NgramFeaturizer::new(&orders, false)?;
        f.fit(&train_docs);
        let x_train = featurize_split(&train_docs, &f)?;
        let x_test = featurize_split(&test_docs, &f)?;

        let start = Instant::now();
        let mnb =
            mnb_fit(&x_train, &train_labels, k, f.num_features(), 1.0, true).context("mnb")?;
        let (pred, scores): (Vec<usize>, Vec<f64>) = x_test
            .iter()
            .map(|x| {
                let (c, lp) = mnb_predict(&mnb, x);
                (c, lp[harm].exp())
            })
            .unzip();
        rows.push(BenchRow::new(
            &format!("mnb_{label}"),
            &score(prep, pred, scores)?,
            0,
            start.elapsed().as_secs_f64(),
        ));

        let start = Instant::now();
        let cfg = LinearConfig {
            seed,
            ..LinearConfig::default()
        };
        let lin =
            linear_fit(&x_train, &train_labels, k, f.num_features(), &cfg).context("linear")?;
        let (pred, scores): (Vec<usize>, Vec<f64>) = x_test
            .iter()
            .map(|x| (linear_predict(&lin, x), lin.scores(x)[harm]))
            .unzip();
        rows.push(BenchRow::new(
            &format!("linear_{label}"),
            &score(prep, pred, scores)?,
            cfg.epochs,
            start.elapsed().as_secs_f64(),
        ));
    }
    Ok(rows)
}

/// Trains each variant on the same split and scores it on the test split.
pub fn run_benchmark(
    reports: &[Report],
    base: &RunConfig,
    variants: &[Variant],
    mut progress: impl FnMut(&BenchRow),
) -> Result<Vec<BenchRow>> {
    let prep = prepare(reports, base)?;
    let mut rows = baseline_rows(reports, &prep, base.seed)?;
    rows.iter().for_each(&mut progress);
    for &variant in variants {
        let cfg = RunConfig {
            variant,
            ..base.clone()
        };
        let start = Instant::now();
        let (model, history) = train_prepared(&prep, &cfg, |_| {})?;
        let eval = evaluate_encoded(&model, &prep.schema, &prep.test, None)?;
        let row = BenchRow::new(
            variant.name(),
            &eval.report,
            history.epochs.len(),
            start.elapsed().as_secs_f64(),
        );
        progress(&row);
        rows.push(row);
    }
    Ok(rows)
}

pub fn format_rows(rows: &[BenchRow]) -> String {
    let mut out = format!(
        "{:<16} {:>6} {:>6} {:>6} {:>6} {:>6} {:>8}\n",
        "model", "P", "R", "F-1", "AUC", "epochs", "seconds"
    );
    for r in rows {
        let auc = r.auc.map_or_else(|| "-".to_string(), |a| format!("{a:.3}"));
        out.push_str(&format!(
            "{:<16} {:>6.3} {:>6.3} {:>6.3} {:>6} {:>6} {:>8.1}\n",
            r.name, r.precision, r.recall, r.f1, auc, r.epochs, r.seconds
        ));
    }
    out
}
