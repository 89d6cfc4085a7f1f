//! Bag-of-n-grams baselines: multinomial naive Bayes and a one-vs-rest
//! linear classifier trained on the hinge loss.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::argmax;
use crate::{Error, Result};

/// Sparse feature vector: `(feature index, value)` sorted by index.
pub type SparseVec = Vec<(usize, f64)>;

/// Joins the tokens of an n-gram into one feature name.
pub const NGRAM_JOINER: &str = "_";

fn ngrams<'a>(tokens: &'a [String], orders: &'a [usize]) -> impl Iterator<Item = String> + 'a {
    orders.iter().flat_map(move |&n| {
        tokens
            .windows(n.max(1))
            .filter(move |_| n > 0)
            .map(|w| w.join(NGRAM_JOINER))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "FeaturizerData")]
pub struct NgramFeaturizer {
    pub orders: Vec<usize>,
    /// Presence indicators instead of counts.
    pub binary: bool,
    features: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl NgramFeaturizer {
    pub fn new(orders: &[usize], binary: bool) -> Result<Self> {
        if orders.is_empty() || orders.contains(&0) {
            return Err(Error::Config(format!(
                "n-gram orders must be positive: {orders:?}"
            )));
        }
        Ok(NgramFeaturizer {
            orders: orders.to_vec(),
            binary,
            features: Vec::new(),
            index: BTreeMap::new(),
        })
    }

    /// Builds the feature map from training documents, ordered by frequency
    /// (descending) then lexicographically.
    pub fn fit(&mut self, docs: &[Vec<String>]) {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for doc in docs {
            for g in ngrams(doc, &self.orders) {
                *counts.entry(g).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1));
        self.features = ranked.into_iter().map(|(g, _)| g).collect();
        self.rebuild_index();
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();
    }

    pub fn is_fitted(&self) -> bool {
        !self.index.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature(&self, index: usize) -> Option<&str> {
        self.features.get(index).map(String::as_str)
    }

    /// Counts of known n-grams in `tokens`; unseen n-grams are dropped.
    pub fn featurize(&self, tokens: &[String]) -> Result<SparseVec> {
        if !self.is_fitted() {
            return Err(Error::State("featurizer has not been fitted".into()));
        }
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for g in ngrams(tokens, &self.orders) {
            if let Some(&i) = self.index.get(&g) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        Ok(counts
            .into_iter()
            .map(|(i, c)| (i, if self.binary { 1.0 } else { c }))
            .collect())
    }
}

#[derive(Deserialize)]
struct FeaturizerData {
    orders: Vec<usize>,
    binary: bool,
    features: Vec<String>,
}

impl From<FeaturizerData> for NgramFeaturizer {
    fn from(d: FeaturizerData) -> Self {
        let mut f = NgramFeaturizer {
            orders: d.orders,
            binary: d.binary,
            features: d.features,
            index: BTreeMap::new(),
        };
        f.rebuild_index();
        f
    }
}

fn check_labels(n_vectors: usize, labels: &[usize], num_classes: usize) -> Result<()> {
    if n_vectors != labels.len() {
        return Err(Error::Contract(format!(
            "{n_vectors} vectors for {} labels",
            labels.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Data(format!("label {l} outside 0..{num_classes}")));
    }
    Ok(())
}

fn num_features(vectors: &[SparseVec]) -> usize {
    vectors
        .iter()
        .flat_map(|v| v.iter().map(|&(i, _)| i + 1))
        .max()
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnbModel {
    pub alpha: f64,
    pub log_prior: Vec<f64>,
    /// `[class][feature]` smoothed log likelihoods.
    pub log_likelihood: Vec<Vec<f64>>,
}

/// Multinomial naive Bayes with additive smoothing `alpha`. Without
/// `priors_from_data` the class prior is uniform.
pub fn mnb_fit(
    vectors: &[SparseVec],
    labels: &[usize],
    num_classes: usize,
    n_features: usize,
    alpha: f64,
    priors_from_data: bool,
) -> Result<MnbModel> {
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!(
            "smoothing alpha must be positive, got {alpha}"
        )));
    }
    check_labels(vectors.len(), labels, num_classes)?;
    if num_features(vectors) > n_features {
        return Err(Error::Data(
            "feature index beyond the declared feature count".into(),
        ));
    }
    let mut docs = vec![0u64; num_classes];
    let mut counts = vec![vec![0.0; n_features]; num_classes];
    for (v, &l) in vectors.iter().zip(labels) {
        docs[l] += 1;
        for &(i, c) in v {
            counts[l][i] += c;
        }
    }
    if let Some(c) = docs.iter().position(|&d| d == 0) {
        return Err(Error::Data(format!("class {c} has no training documents")));
    }
    let total = vectors.len() as f64;
    let log_prior = docs
        .iter()
        .map(|&d| {
            if priors_from_data {
                libm::log(d as f64 / total)
            } else {
                -libm::log(num_classes as f64)
            }
        })
        .collect();
    let log_likelihood = counts
        .into_iter()
        .map(|row| {
            let denom: f64 = row.iter().sum::<f64>() + alpha * n_features as f64;
            row.into_iter()
                .map(|c| libm::log((c + alpha) / denom))
                .collect()
        })
        .collect();
    Ok(MnbModel {
        alpha,
        log_prior,
        log_likelihood,
    })
}

/// Predicted class and normalized log posterior per class.
pub fn mnb_predict(model: &MnbModel, vector: &SparseVec) -> (usize, Vec<f64>) {
    let joint: Vec<f64> = model
        .log_prior
        .iter()
        .zip(&model.log_likelihood)
        .map(|(p, ll)| {
            p + vector
                .iter()
                .filter(|(i, _)| *i < ll.len())
                .map(|&(i, c)| c * ll[i])
                .sum::<f64>()
        })
        .collect();
    let class = argmax(&joint);
    let m = joint[class];
    let lse = m + libm::log(joint.iter().map(|&j| libm::exp(j - m)).sum::<f64>());
    (class, joint.into_iter().map(|j| j - lse).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        LinearConfig {
            l2: 1e-4,
            epochs: 20,
            learning_rate: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBowModel {
    /// `[class][feature]`
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LinearBowModel {
    pub fn scores(&self, vector: &SparseVec) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| {
                b + vector
                    .iter()
                    .filter(|(i, _)| *i < w.len())
                    .map(|&(i, x)| w[i] * x)
                    .sum::<f64>()
            })
            .collect()
    }
}

/// One-vs-rest hinge loss with L2 penalty, minimized by per-example
/// subgradient steps over shuffled epochs. The penalty is applied through a
/// shared scale factor so each step only touches the example's features.
pub fn linear_fit(
    vectors: &[SparseVec],
    labels: &[usize],
    num_classes: usize,
    n_features: usize,
    config: &LinearConfig,
) -> Result<LinearBowModel> {
    if !(config.l2 >= 0.0) {
        return Err(Error::Parameter(format!(
            "l2 must be non-negative, got {}",
            config.l2
        )));
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::Parameter(format!(
            "learning rate must be positive, got {}",
            config.learning_rate
        )));
    }
    check_labels(vectors.len(), labels, num_classes)?;
    if num_features(vectors) > n_features {
        return Err(Error::Data(
            "feature index beyond the declared feature count".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut raw = vec![vec![0.0; n_features]; num_classes];
    let mut scale = vec![1.0; num_classes];
    let mut bias = vec![0.0; num_classes];
    let decay = 1.0 - config.learning_rate * config.l2;
    if !(decay > 0.0) {
        return Err(Error::Parameter(
            "learning_rate · l2 must be below 1".into(),
        ));
    }
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &n in &order {
            let x = &vectors[n];
            for k in 0..num_classes {
                let y = if labels[n] == k { 1.0 } else { -1.0 };
                let s = scale[k];
                let score = bias[k] + s * x.iter().map(|&(i, v)| raw[k][i] * v).sum::<f64>();
                scale[k] *= decay;
                if y * score < 1.0 {
                    let step = config.learning_rate * y / scale[k];
                    for &(i, v) in x {
                        raw[k][i] += step * v;
                    }
                    bias[k] += config.learning_rate * y;
                }
                if scale[k] < 1e-9 {
                    raw[k].iter_mut().for_each(|w| *w *= scale[k]);
                    scale[k] = 1.0;
                }
            }
        }
    }
    let weights = raw
        .into_iter()
        .zip(&scale)
        .map(|(w, &s)| w.into_iter().map(|v| v * s).collect())
        .collect();
    Ok(LinearBowModel { weights, bias })
}

pub fn linear_predict(model: &LinearBowModel, vector: &SparseVec) -> usize {
    argmax(&model.scores(vector))
}
