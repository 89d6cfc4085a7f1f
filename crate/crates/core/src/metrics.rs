//! Precision, recall, F-1, ROC-AUC and per-category breakdowns.
//!
//! Ratios with a zero denominator are reported as 0.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One-vs-rest counts for every class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
    pub tn: Vec<u64>,
}

impl ConfusionCounts {
    pub fn num_classes(&self) -> usize {
        self.tp.len()
    }

    pub fn total(&self) -> u64 {
        self.tp
            .first()
            .map_or(0, |_| self.tp[0] + self.fp[0] + self.fn_[0] + self.tn[0])
    }

    pub fn support(&self, class: usize) -> u64 {
        self.tp[class] + self.fn_[class]
    }

    /// Fraction of predictions that are correct.
    pub fn accuracy(&self) -> f64 {
        let correct: u64 = self.tp.iter().sum();
        ratio(correct, self.total())
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Contract("no predictions to score".into()));
    }
    if let Some(&c) = pred.iter().chain(truth).find(|&&c| c >= num_classes) {
        return Err(Error::Data(format!("class {c} outside 0..{num_classes}")));
    }
    let mut tp = vec![0; num_classes];
    let mut fp = vec![0; num_classes];
    let mut fn_ = vec![0; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let n = pred.len() as u64;
    let tn = (0..num_classes)
        .map(|c| n - tp[c] - fp[c] - fn_[c])
        .collect();
    Ok(ConfusionCounts { tp, fp, fn_, tn })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn prf1(counts: &ConfusionCounts, class: usize) -> Prf1 {
    let tp = counts.tp[class];
    let precision = ratio(tp, tp + counts.fp[class]);
    let recall = ratio(tp, tp + counts.fn_[class]);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf1 {
        precision,
        recall,
        f1,
    }
}

/// Area under the ROC curve as the Mann–Whitney statistic, by midrank
/// summation. Tied scores count one half.
///
/// The result is `2U / 2PN` with the numerator accumulated in integers, so it
/// is bit-identical to counting `2·wins + ties` over all pairs.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::Contract(format!(
            "{} scores for {} labels",
            scores.len(),
            truth.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Input("NaN score".into()));
    }
    let pos = truth.iter().filter(|&&t| t).count() as u128;
    let neg = truth.len() as u128 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "ROC-AUC needs both positive and negative examples".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum of the positives; a tie block at sorted positions
    // i..j has midrank (i + 1 + j) / 2
    let mut rank2_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let positives = order[i..j].iter().filter(|&&k| truth[k]).count() as u128;
        rank2_sum += positives * (i as u128 + 1 + j as u128);
        i = j;
    }
    let u2 = rank2_sum - pos * (pos + 1);
    Ok(u2 as f64 / (2 * pos * neg) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    pub classes: Vec<ClassReport>,
    pub macro_avg: Prf1,
    /// Averages weighted by true-class support.
    pub weighted_avg: Prf1,
    /// Class treated as positive for AUC and headline scores.
    pub positive_class: Option<usize>,
    pub auc: Option<f64>,
    /// Fraction of examples whose true class is the positive class.
    pub harm_ratio: Option<f64>,
    pub confusion: ConfusionCounts,
}

impl EvalReport {
    /// Scores of the positive class, or the macro average without one.
    pub fn headline(&self) -> Prf1 {
        match self.positive_class {
            Some(c) => {
                let r = &self.classes[c];
                Prf1 {
                    precision: r.precision,
                    recall: r.recall,
                    f1: r.f1,
                }
            }
            None => self.macro_avg,
        }
    }
}

/// Inputs shared by [`evaluate`] and [`per_category_report`].
#[derive(Debug, Clone, Copy)]
pub struct EvalInput<'a> {
    pub truth: &'a [usize],
    pub pred: &'a [usize],
    /// Probability of the positive class per example, for AUC.
    pub positive_scores: Option<&'a [f64]>,
    pub class_names: &'a [String],
    pub positive_class: Option<usize>,
}

pub fn evaluate(input: &EvalInput<'_>) -> Result<EvalReport> {
    let k = input.class_names.len();
    let counts = confusion(input.pred, input.truth, k)?;
    let classes: Vec<ClassReport> = (0..k)
        .map(|c| {
            let s = prf1(&counts, c);
            ClassReport {
                name: input.class_names[c].clone(),
                precision: s.precision,
                recall: s.recall,
                f1: s.f1,
                support: counts.support(c),
            }
        })
        .collect();
    let avg = |weight: &dyn Fn(&ClassReport) -> f64| {
        let total: f64 = classes.iter().map(weight).sum();
        let mean = |f: &dyn Fn(&ClassReport) -> f64| {
            if total == 0.0 {
                0.0
            } else {
                classes.iter().map(|c| weight(c) * f(c)).sum::<f64>() / total
            }
        };
        Prf1 {
            precision: mean(&|c| c.precision),
            recall: mean(&|c| c.recall),
            f1: mean(&|c| c.f1),
        }
    };
    let macro_avg = avg(&|_| 1.0);
    let weighted_avg = avg(&|c| c.support as f64);

    let (auc, harm_ratio) = match input.positive_class {
        Some(p) => {
            let truth: Vec<bool> = input.truth.iter().map(|&t| t == p).collect();
            let auc = match input.positive_scores {
                Some(s) => match roc_auc(s, &truth) {
                    Ok(a) => Some(a),
                    Err(Error::UndefinedMetric(_)) => None,
                    Err(e) => return Err(e),
                },
                None => None,
            };
            let ratio = truth.iter().filter(|&&t| t).count() as f64 / truth.len() as f64;
            (auc, Some(ratio))
        }
        None => (None, None),
    };
    Ok(EvalReport {
        n: input.truth.len(),
        accuracy: counts.accuracy(),
        classes,
        macro_avg,
        weighted_avg,
        positive_class: input.positive_class,
        auc,
        harm_ratio,
        confusion: counts,
    })
}

/// Label used for examples without a category.
pub const UNCATEGORIZED: &str = "(uncategorized)";

/// Scores each category separately. Groups holding a single true class get
/// no AUC.
pub fn per_category_report(
    categories: &[Option<String>],
    input: &EvalInput<'_>,
) -> Result<BTreeMap<String, EvalReport>> {
    if categories.len() != input.truth.len() {
        return Err(Error::Contract(format!(
            "{} categories for {} labels",
            categories.len(),
            input.truth.len()
        )));
    }
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, c) in categories.iter().enumerate() {
        groups
            .entry(c.clone().unwrap_or_else(|| UNCATEGORIZED.to_string()))
            .or_default()
            .push(i);
    }
    groups
        .into_iter()
        .map(|(name, idx)| {
            let truth: Vec<usize> = idx.iter().map(|&i| input.truth[i]).collect();
            let pred: Vec<usize> = idx.iter().map(|&i| input.pred[i]).collect();
            let scores: Option<Vec<f64>> = input
                .positive_scores
                .map(|s| idx.iter().map(|&i| s[i]).collect());
            let sub = EvalInput {
                truth: &truth,
                pred: &pred,
                positive_scores: scores.as_deref(),
                ..*input
            };
            evaluate(&sub).map(|r| (name, r))
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

/// Plain-text table with columns P, R, F-1, AUC.
pub fn format_table(report: &EvalReport) -> String {
    let width = report
        .classes
        .iter()
        .map(|c| c.name.len())
        .chain(["weighted avg".len()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>6} {:>6} {:>6} {:>6} {:>7}",
        "class", "P", "R", "F-1", "AUC", "support"
    );
    for (i, c) in report.classes.iter().enumerate() {
        let auc = if report.positive_class == Some(i) {
            report.auc
        } else {
            None
        };
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.3} {:>6.3} {:>6.3} {:>6} {:>7}",
            c.name,
            c.precision,
            c.recall,
            c.f1,
            fmt_opt(auc),
            c.support
        );
    }
    for (label, avg) in [
        ("macro avg", report.macro_avg),
        ("weighted avg", report.weighted_avg),
    ] {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.3} {:>6.3} {:>6.3} {:>6} {:>7}",
            label, avg.precision, avg.recall, avg.f1, "-", report.n
        );
    }
    let _ = writeln!(
        out,
        "accuracy {:.4} over {} examples",
        report.accuracy, report.n
    );
    out
}

/// One row per category: size, harm ratio and headline P, R, F-1, AUC.
pub fn format_category_table(reports: &BTreeMap<String, EvalReport>) -> String {
    let width = reports
        .keys()
        .map(String::len)
        .chain(["category".len()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>6} {:>6}  {:>6} {:>6} {:>6} {:>6}",
        "category", "n", "harm", "P", "R", "F-1", "AUC"
    );
    for (name, r) in reports {
        let h = r.headline();
        let _ = writeln!(
            out,
            "{:<width$}  {:>6} {:>6}  {:>6.3} {:>6.3} {:>6.3} {:>6}",
            name,
            r.n,
            fmt_opt(r.harm_ratio),
            h.precision,
            h.recall,
            h.f1,
            fmt_opt(r.auc)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn perfect_predictions() {
        let t = [0, 1, 2, 1];
        let c = confusion(&t, &t, 3).unwrap();
        assert!(c.fp.iter().chain(&c.fn_).all(|&x| x == 0));
        assert_eq!(
            prf1(&c, 1),
            Prf1 {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0
            }
        );
    }

    #[test]
    fn single_wrong_prediction() {
        let c = confusion(&[1], &[0], 2).unwrap();
        assert_eq!((c.fp[1], c.fn_[0], c.tp[0], c.tp[1]), (1, 1, 0, 0));
        for k in 0..2 {
            assert_eq!(c.tp[k] + c.fp[k] + c.fn_[k] + c.tn[k], 1);
        }
    }

    #[test]
    fn confusion_errors() {
        assert!(matches!(
            confusion(&[0], &[0, 1], 2),
            Err(Error::Contract(_))
        ));
        assert!(matches!(confusion(&[], &[], 2), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_over_zero_is_zero() {
        let c = ConfusionCounts {
            tp: vec![0],
            fp: vec![0],
            fn_: vec![5],
            tn: vec![0],
        };
        assert_eq!(prf1(&c, 0), Prf1::default());
    }

    #[test]
    fn prf1_direct_formula() {
        let c = ConfusionCounts {
            tp: vec![3],
            fp: vec![1],
            fn_: vec![2],
            tn: vec![0],
        };
        let s = prf1(&c, 0);
        assert_eq!(s.precision, 0.75);
        assert_eq!(s.recall, 0.6);
        assert!((s.f1 - 2.0 * 0.45 / 1.35).abs() < 1e-15);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(
            roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(),
            1.0
        );
        assert_eq!(
            roc_auc(&[0.3; 4], &[false, true, false, true]).unwrap(),
            0.5
        );
        assert_eq!(
            roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(),
            0.75
        );
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[true, true]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn weighted_average_uses_support() {
        let truth = [0, 0, 0, 1];
        let pred = [0, 0, 0, 0];
        let r = evaluate(&EvalInput {
            truth: &truth,
            pred: &pred,
            positive_scores: None,
            class_names: &names(2),
            positive_class: Some(1),
        })
        .unwrap();
        assert!((r.weighted_avg.recall - 0.75).abs() < 1e-15);
        assert_eq!(r.harm_ratio, Some(0.25));
        assert_eq!(r.headline().f1, 0.0);
    }

    #[test]
    fn category_without_harm_scores_zero() {
        let truth = [0, 1, 0, 0];
        let pred = [0, 1, 0, 0];
        let scores = [0.1, 0.9, 0.2, 0.3];
        let cats = [
            Some("Fall".to_string()),
            Some("Fall".to_string()),
            Some("Lab/Specimen".to_string()),
            Some("Lab/Specimen".to_string()),
        ];
        let r = per_category_report(
            &cats,
            &EvalInput {
                truth: &truth,
                pred: &pred,
                positive_scores: Some(&scores),
                class_names: &names(2),
                positive_class: Some(1),
            },
        )
        .unwrap();
        let lab = &r["Lab/Specimen"];
        assert_eq!(lab.headline(), Prf1::default());
        assert_eq!(lab.auc, None);
        assert_eq!(lab.harm_ratio, Some(0.0));
        assert_eq!(r["Fall"].auc, Some(1.0));
        let table = format_category_table(&r);
        assert!(table
            .lines()
            .next()
            .unwrap()
            .contains("P      R    F-1    AUC"));
    }

    #[test]
    fn table_column_order() {
        let truth = [0, 1];
        let r = evaluate(&EvalInput {
            truth: &truth,
            pred: &truth,
            positive_scores: Some(&[0.2, 0.7]),
            class_names: &names(2),
            positive_class: Some(1),
        })
        .unwrap();
        let header = format_table(&r);
        let header = header.lines().next().unwrap();
        let pos: Vec<usize> = [" P ", " R ", "F-1", "AUC"]
            .iter()
            .map(|c| header.find(c).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{header}");
    }
}
