//! Data splitting, gradient clipping, Adam and the epoch loop with early
//! stopping.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{GradientMap, ParamStore, Tape, Tensor};
use crate::data::{EncodedReport, TokenIds};
use crate::metrics::{confusion, prf1};
use crate::model::{argmax, HarmClassifier};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Splitting

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.6,
            valid: 0.2,
            test: 0.2,
        }
    }
}

/// Positions into the original dataset.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    /// Classes too small to stratify, which were placed in the training split.
    pub warnings: Vec<String>,
}

fn round(x: f64) -> usize {
    libm::round(x) as usize
}

/// Shuffles by `seed` and cuts into train/valid/test.
///
/// With `stratify`, each class is cut separately so its share of every split
/// is within one example of exact. Classes with fewer than three members go
/// entirely to the training split and produce a warning.
pub fn split_indices(
    labels: &[usize],
    ratios: SplitRatios,
    seed: u64,
    stratify: bool,
) -> Result<SplitIndices> {
    let r = [ratios.train, ratios.valid, ratios.test];
    if r.iter().any(|&x| !(x >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must be non-negative and sum to 1: {r:?}"
        )));
    }
    if labels.is_empty() {
        return Err(Error::Data("cannot split an empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SplitIndices::default();
    let groups: Vec<(Option<usize>, Vec<usize>)> = if stratify {
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            by_class.entry(l).or_default().push(i);
        }
        by_class.into_iter().map(|(c, v)| (Some(c), v)).collect()
    } else {
        alloc::vec![(None, (0..labels.len()).collect())]
    };
    for (class, mut members) in groups {
        members.shuffle(&mut rng);
        let n = members.len();
        if let (Some(c), true) = (class, n < 3) {
            out.warnings.push(format!(
                "class {c} has only {n} member(s); assigned to the training split"
            ));
            out.train.extend(members);
            continue;
        }
        let n_train = round(ratios.train * n as f64).min(n);
        let n_valid = round(ratios.valid * n as f64).min(n - n_train);
        out.train.extend_from_slice(&members[..n_train]);
        out.valid
            .extend_from_slice(&members[n_train..n_train + n_valid]);
        out.test.extend_from_slice(&members[n_train + n_valid..]);
    }
    if stratify {
        out.train.shuffle(&mut rng);
        out.valid.shuffle(&mut rng);
        out.test.shuffle(&mut rng);
    }
    Ok(out)
}

/// [`split_indices`] applied to a slice of items.
pub fn split_dataset<T: Clone>(
    items: &[T],
    labels: &[usize],
    ratios: SplitRatios,
    seed: u64,
    stratify: bool,
) -> Result<(Vec<T>, Vec<T>, Vec<T>, Vec<String>)> {
    if items.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} items for {} labels",
            items.len(),
            labels.len()
        )));
    }
    let s = split_indices(labels, ratios, seed, stratify)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
    Ok((pick(&s.train), pick(&s.valid), pick(&s.test), s.warnings))
}

// ---------------------------------------------------------------------------
// Optimization

/// Clamps every component into `[−threshold, threshold]`.
pub fn clip_gradients(mut grads: GradientMap, threshold: f64) -> Result<GradientMap> {
    if !(threshold > 0.0) {
        return Err(Error::Parameter(format!(
            "clip threshold must be positive, got {threshold}"
        )));
    }
    for g in grads.iter_mut() {
        g.data_mut()
            .iter_mut()
            .for_each(|v| *v = v.clamp(-threshold, threshold));
    }
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params
            .iter()
            .map(|(_, p)| Tensor::zeros(p.value.shape()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &GradientMap,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::dim(
            "adam_step",
            &[params.len()],
            &[grads.len(), state.m.len()],
        ));
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(cfg.beta1, t);
    let c2 = 1.0 - libm::pow(cfg.beta2, t);
    for (((p, (_, g)), m), v) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        if p.value.shape() != g.shape() {
            return Err(Error::dim("adam_step", p.value.shape(), g.shape()));
        }
        let theta = p.value.data_mut();
        for i in 0..theta.len() {
            let gi = g.data()[i];
            let mi = &mut m.data_mut()[i];
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            let m_hat = *mi / c1;
            let vi = &mut v.data_mut()[i];
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let v_hat = *vi / c2;
            theta[i] -= cfg.learning_rate * m_hat / (libm::sqrt(v_hat) + cfg.eps);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Training loop

/// Validation quantity used for early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    #[default]
    Accuracy,
    /// Negated validation loss.
    Loss,
    MacroF1,
}

impl core::str::FromStr for Monitor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "accuracy" => Ok(Monitor::Accuracy),
            "loss" => Ok(Monitor::Loss),
            "macro_f1" => Ok(Monitor::MacroF1),
            other => Err(Error::Config(format!(
                "unknown monitor {other:?}; expected accuracy, loss or macro_f1"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Elementwise gradient cap.
    pub clip_threshold: f64,
    pub early_stop_patience: usize,
    pub monitor: Monitor,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            max_epochs: 6,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            clip_threshold: 5.0,
            early_stop_patience: 2,
            monitor: Monitor::Accuracy,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.clip_threshold > 0.0) {
            return Err(Error::Config(
                "learning_rate and clip_threshold must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
            || !(self.adam_eps > 0.0)
        {
            return Err(Error::Config(
                "Adam betas must lie in [0, 1) and eps must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_accuracy: f64,
    pub valid_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the restored snapshot.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Loss, accuracy and macro F-1 of `model` on `data` in inference mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Class probabilities for `data`, computed in chunks of `batch_size`.
pub fn predict_probs(
    model: &HarmClassifier,
    data: &[&TokenIds],
    batch_size: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks(batch_size.max(1)) {
        let p = model.forward(chunk)?;
        out.extend((0..p.rows()).map(|i| p.row(i).to_vec()));
    }
    Ok(out)
}

pub fn evaluate_model(
    model: &HarmClassifier,
    data: &[EncodedReport],
    batch_size: usize,
) -> Result<Evaluation> {
    let tokens: Vec<&TokenIds> = data.iter().map(|r| &r.tokens).collect();
    let probs = predict_probs(model, &tokens, batch_size)?;
    let labels: Vec<usize> = data.iter().map(|r| r.label).collect();
    let pred: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let k = model.config().num_classes;
    if let Some(&l) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Data(format!("label {l} outside 0..{k}")));
    }
    let loss = probs
        .iter()
        .zip(&labels)
        .map(|(p, &l)| -libm::log(p[l].max(crate::autodiff::PROB_FLOOR)))
        .sum::<f64>()
        / data.len() as f64;
    let counts = confusion(&pred, &labels, k)?;
    let macro_f1 = (0..k).map(|c| prf1(&counts, c).f1).sum::<f64>() / k as f64;
    Ok(Evaluation {
        loss,
        accuracy: counts.accuracy(),
        macro_f1,
    })
}

/// Per-epoch generator; `stream` separates batch order from dropout masks.
fn epoch_rng(seed: u64, epoch: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(epoch as u64));
    rng.set_stream(stream);
    rng
}

/// One optimizer step on `batch`; returns the batch loss before the update.
pub fn train_step(
    model: &mut HarmClassifier,
    batch: &[&EncodedReport],
    state: &mut AdamState,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let tokens: Vec<&TokenIds> = batch.iter().map(|r| &r.tokens).collect();
    let labels: Vec<usize> = batch.iter().map(|r| r.label).collect();
    let mut tape = Tape::new();
    let vars = model.params().register(&mut tape);
    let training = model.is_training();
    let loss = model.loss_graph(&mut tape, &vars, &tokens, &labels, training, rng)?;
    let value = tape.value(loss).data()[0];
    let grads = tape.backward(loss)?;
    let grads = GradientMap::collect(&tape, &grads, &vars);
    drop(tape);
    let grads = clip_gradients(grads, cfg.clip_threshold)?;
    adam_step(model.params_mut(), &grads, state, &cfg.adam())?;
    Ok(value)
}

/// Mini-batch training with early stopping on the monitored validation
/// metric. Returns the best snapshot (earliest epoch on ties).
///
/// Training stops once `early_stop_patience` consecutive epochs fail to
/// improve on the best value (at the first such epoch when patience is 0),
/// or after `max_epochs`.
pub fn train(
    model: HarmClassifier,
    train_set: &[EncodedReport],
    valid_set: &[EncodedReport],
    cfg: &TrainConfig,
) -> Result<(HarmClassifier, TrainHistory)> {
    train_with_callback(model, train_set, valid_set, cfg, |_| {})
}

pub fn train_with_callback(
    mut model: HarmClassifier,
    train_set: &[EncodedReport],
    valid_set: &[EncodedReport],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(HarmClassifier, TrainHistory)> {
    cfg.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::Config(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let mut state = AdamState::new(model.params());
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut wait = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut epoch_rng(cfg.seed, epoch, 0));
        let mut dropout_rng = epoch_rng(cfg.seed, epoch, 1);
        model.set_training(true);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&EncodedReport> = chunk.iter().map(|&i| &train_set[i]).collect();
            total += train_step(&mut model, &batch, &mut state, cfg, &mut dropout_rng)?
                * batch.len() as f64;
        }
        model.set_training(false);

        let eval = evaluate_model(&model, valid_set, cfg.batch_size)?;
        let record = EpochRecord {
            epoch,
            train_loss: total / train_set.len() as f64,
            valid_loss: eval.loss,
            valid_accuracy: eval.accuracy,
            valid_macro_f1: eval.macro_f1,
        };
        on_epoch(&record);
        history.epochs.push(record);

        let score = match cfg.monitor {
            Monitor::Accuracy => eval.accuracy,
            Monitor::Loss => -eval.loss,
            Monitor::MacroF1 => eval.macro_f1,
        };
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, model.params().clone()));
            history.best_epoch = epoch - 1;
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.early_stop_patience.max(1) {
                history.stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    if let Some((_, params)) = best {
        *model.params_mut() = params;
    }
    Ok((model, history))
}
