//! The ten classifier variants, wired from the shared layer set.
//!
//! Every variant starts with a word embedding and ends with one dense layer
//! and a softmax. In between:
//!
//! | variant          | body                                                     |
//! |------------------|----------------------------------------------------------|
//! | `cnn`            | conv → pool → dropout → global max                       |
//! | `lstm`           | LSTM → last state                                        |
//! | `*_cnn`          | conv → pool → dropout → (Bi)GRU/LSTM → last state(s)     |
//! | `att_*_cnn`      | conv → pool → dropout → (Bi)GRU/LSTM → attention pooling |

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{finite_diff_check, GradCheck, ParamStore, Tape, Tensor, Var};
use crate::data::TokenIds;
use crate::layers::{
    attention_pool, birnn, conv1d_multi, dense, embed_sequence, max_pool, pool_mask, run_rnn,
    AttentionParams, CellKind, ConvBlockParams, DenseParams, Direction, EmbeddingTable,
    RecurrentCellParams,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Cnn,
    Lstm,
    GruCnn,
    BigruCnn,
    LstmCnn,
    BilstmCnn,
    AttGruCnn,
    AttBigruCnn,
    AttLstmCnn,
    AttBilstmCnn,
}

impl Variant {
    pub const ALL: [Variant; 10] = [
        Variant::Cnn,
        Variant::Lstm,
        Variant::GruCnn,
        Variant::BigruCnn,
        Variant::LstmCnn,
        Variant::BilstmCnn,
        Variant::AttGruCnn,
        Variant::AttBigruCnn,
        Variant::AttLstmCnn,
        Variant::AttBilstmCnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Cnn => "cnn",
            Variant::Lstm => "lstm",
            Variant::GruCnn => "gru_cnn",
            Variant::BigruCnn => "bigru_cnn",
            Variant::LstmCnn => "lstm_cnn",
            Variant::BilstmCnn => "bilstm_cnn",
            Variant::AttGruCnn => "att_gru_cnn",
            Variant::AttBigruCnn => "att_bigru_cnn",
            Variant::AttLstmCnn => "att_lstm_cnn",
            Variant::AttBilstmCnn => "att_bilstm_cnn",
        }
    }

    pub fn has_conv(self) -> bool {
        self != Variant::Lstm
    }

    /// Recurrent cell kind and whether it runs in both directions.
    pub fn recurrent(self) -> Option<(CellKind, bool)> {
        use Variant::*;
        match self {
            Cnn => None,
            Lstm | LstmCnn | AttLstmCnn => Some((CellKind::Lstm, false)),
            BilstmCnn | AttBilstmCnn => Some((CellKind::Lstm, true)),
            GruCnn | AttGruCnn => Some((CellKind::Gru, false)),
            BigruCnn | AttBigruCnn => Some((CellKind::Gru, true)),
        }
    }

    pub fn has_attention(self) -> bool {
        matches!(
            self,
            Variant::AttGruCnn | Variant::AttBigruCnn | Variant::AttLstmCnn | Variant::AttBilstmCnn
        )
    }

    pub fn valid_names() -> String {
        Variant::ALL
            .iter()
            .map(|v| v.name())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.name() == key)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant {s:?}; valid variants: {}",
                    Variant::valid_names()
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub n_max: usize,
    pub filter_widths: Vec<usize>,
    pub channels: usize,
    pub pool_window: usize,
    pub hidden_size: usize,
    pub dropout_rate: f64,
    pub num_classes: usize,
    /// Attention softmax sharpness.
    pub beta: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(variant: Variant, vocab_size: usize, num_classes: usize) -> Self {
        ModelConfig {
            variant,
            vocab_size,
            embed_dim: 100,
            n_max: 100,
            filter_widths: vec![2, 3, 4, 5],
            channels: 128,
            pool_window: 4,
            hidden_size: 100,
            dropout_rate: 0.25,
            num_classes,
            beta: 1.0,
            seed: 0,
        }
    }

    /// Small configuration used for finite-difference checks.
    pub fn tiny(variant: Variant, seed: u64) -> Self {
        ModelConfig {
            embed_dim: 8,
            n_max: 12,
            filter_widths: vec![2, 3],
            channels: 4,
            hidden_size: 8,
            seed,
            ..ModelConfig::new(variant, 20, 3)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_classes < 2 {
            return fail(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            ));
        }
        if self.vocab_size < 2 {
            return fail(format!(
                "vocab_size must be at least 2, got {}",
                self.vocab_size
            ));
        }
        if self.embed_dim == 0
            || self.hidden_size == 0
            || self.channels == 0
            || self.pool_window == 0
        {
            return fail(
                "embed_dim, hidden_size, channels and pool_window must be positive".into(),
            );
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return fail(format!("beta must be positive, got {}", self.beta));
        }
        if self.variant.has_conv() {
            if self.filter_widths.is_empty()
                || self.filter_widths.windows(2).any(|w| w[0] >= w[1])
                || self.filter_widths[0] == 0
            {
                return fail(format!(
                    "filter widths must be positive and strictly increasing: {:?}",
                    self.filter_widths
                ));
            }
            if self.n_max < *self.filter_widths.last().unwrap() {
                return fail(format!(
                    "n_max {} shorter than the widest filter",
                    self.n_max
                ));
            }
        } else if self.n_max == 0 {
            return fail("n_max must be positive".into());
        }
        Ok(())
    }

    /// Sequence length seen by the recurrent/attention layers.
    pub fn pooled_len(&self) -> usize {
        if self.variant.has_conv() {
            self.n_max.div_ceil(self.pool_window)
        } else {
            self.n_max
        }
    }

    /// Width of the vector fed to the output layer.
    pub fn feature_width(&self) -> usize {
        match self.variant.recurrent() {
            None => self.channels * self.filter_widths.len(),
            Some((_, bi)) => self.hidden_size * if bi { 2 } else { 1 },
        }
    }
}

/// Output of one forward pass recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct ForwardGraph {
    /// `[B × C]` class probabilities.
    pub probs: Var,
    /// `[B × pooled_len]` attention weights for attention variants.
    pub alpha: Option<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probs: Vec<f64>,
    /// One weight per pooled position (`pool_window` tokens each).
    pub alpha: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmClassifier {
    config: ModelConfig,
    params: ParamStore,
    embedding: EmbeddingTable,
    conv: Option<ConvBlockParams>,
    forward_cell: Option<RecurrentCellParams>,
    backward_cell: Option<RecurrentCellParams>,
    attention: Option<AttentionParams>,
    output: DenseParams,
    training: bool,
}

impl HarmClassifier {
    /// Initializes every parameter from `config.seed`.
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let embedding = EmbeddingTable::init(
            &mut params,
            "embedding",
            config.vocab_size,
            config.embed_dim,
            &mut rng,
        );
        let mut width = config.embed_dim;
        let conv = if config.variant.has_conv() {
            let c = ConvBlockParams::init(
                &mut params,
                "conv",
                &config.filter_widths,
                width,
                config.channels,
                &mut rng,
            )?;
            width = c.out_width();
            Some(c)
        } else {
            None
        };
        let (mut forward_cell, mut backward_cell) = (None, None);
        if let Some((kind, bi)) = config.variant.recurrent() {
            forward_cell = Some(RecurrentCellParams::init(
                &mut params,
                "rnn.fwd",
                kind,
                width,
                config.hidden_size,
                &mut rng,
            ));
            if bi {
                backward_cell = Some(RecurrentCellParams::init(
                    &mut params,
                    "rnn.bwd",
                    kind,
                    width,
                    config.hidden_size,
                    &mut rng,
                ));
            }
        }
        width = config.feature_width();
        let attention = config
            .variant
            .has_attention()
            .then(|| AttentionParams::init(&mut params, "attention", width, width, &mut rng));
        let output = DenseParams::init(
            &mut params,
            "output",
            width,
            config.num_classes,
            None,
            &mut rng,
        );
        Ok(HarmClassifier {
            config,
            params,
            embedding,
            conv,
            forward_cell,
            backward_cell,
            attention,
            output,
            training: false,
        })
    }

    /// Rebuilds the architecture for `config` and installs named tensors.
    pub fn from_parameters(config: ModelConfig, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let mut model = HarmClassifier::build(config)?;
        if tensors.len() != model.params.len() {
            return Err(Error::Data(format!(
                "checkpoint holds {} tensors, architecture needs {}",
                tensors.len(),
                model.params.len()
            )));
        }
        for (name, value) in tensors {
            let id = model
                .params
                .find(&name)
                .ok_or_else(|| Error::Data(format!("unexpected parameter {name:?}")))?;
            let slot = model.params.get_mut(id);
            if slot.shape() != value.shape() {
                return Err(Error::Data(format!(
                    "parameter {name}: shape {:?} does not match {:?}",
                    value.shape(),
                    slot.shape()
                )));
            }
            *slot = value;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    /// Input width of the attention layer, if any.
    pub fn attention_input(&self) -> Option<usize> {
        self.attention.as_ref().map(|a| a.input)
    }

    /// Records the forward pass for `batch` on `tape`, reading parameters
    /// from `vars` (as returned by [`ParamStore::register`]). Dropout is
    /// active only when `training` is set.
    pub fn graph<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &[&TokenIds],
        training: bool,
        rng: &mut R,
    ) -> Result<ForwardGraph> {
        let cfg = &self.config;
        let n = cfg.n_max;
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let mut ids = Vec::with_capacity(batch.len() * n);
        let mut mask = Vec::with_capacity(batch.len() * n);
        for (i, r) in batch.iter().enumerate() {
            if r.ids.len() != n || r.mask.len() != n {
                return Err(Error::Contract(format!(
                    "report {i} is encoded to length {}, model expects {n}",
                    r.ids.len()
                )));
            }
            ids.extend_from_slice(&r.ids);
            mask.extend_from_slice(&r.mask);
        }
        let mut x = embed_sequence(tape, vars, &self.embedding, &ids)?;
        let mut seq_len = n;
        if let Some(conv) = &self.conv {
            x = conv1d_multi(tape, vars, conv, x, n)?;
            x = max_pool(tape, x, n, cfg.pool_window)?;
            x = tape.dropout(x, cfg.dropout_rate, rng, training)?;
            mask = pool_mask(&mask, n, cfg.pool_window);
            seq_len = cfg.pooled_len();
        }

        let mut alpha = None;
        let features = match (&self.forward_cell, &self.backward_cell) {
            (None, _) => tape.max_pool_rows(x, seq_len, seq_len)?,
            (Some(fwd), bwd) => {
                let out = match bwd {
                    Some(bwd) => birnn(tape, vars, fwd, bwd, x, seq_len, Some(&mask))?,
                    None => run_rnn(tape, vars, fwd, x, seq_len, Direction::Forward, Some(&mask))?,
                };
                match &self.attention {
                    None => out.last,
                    Some(att) => {
                        // an all-padding report attends to its first position
                        for seq in mask.chunks_mut(seq_len) {
                            if !seq.iter().any(|&m| m) {
                                seq[0] = true;
                            }
                        }
                        let a =
                            attention_pool(tape, vars, att, out.states, seq_len, &mask, cfg.beta)?;
                        alpha = Some(a.alpha);
                        a.context
                    }
                }
            }
        };
        let logits = dense(tape, vars, &self.output, features)?;
        let probs = tape.softmax_rows(logits, 1.0)?;
        Ok(ForwardGraph { probs, alpha })
    }

    /// Mean negative log-likelihood of `labels` for `batch`.
    pub fn loss_graph<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &[&TokenIds],
        labels: &[usize],
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let g = self.graph(tape, vars, batch, training, rng)?;
        tape.nll_loss(g.probs, labels)
    }

    fn run(&self, batch: &[&TokenIds]) -> Result<(Tensor, Option<Tensor>)> {
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape);
        // dropout is off outside training, so this generator is never drawn from
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = self.graph(&mut tape, &vars, batch, false, &mut rng)?;
        let alpha = g.alpha.map(|a| tape.value(a).clone());
        Ok((tape.value(g.probs).clone(), alpha))
    }

    /// Class probabilities `[B × C]` in inference mode.
    pub fn forward(&self, batch: &[&TokenIds]) -> Result<Tensor> {
        Ok(self.run(batch)?.0)
    }

    pub fn predict(&self, batch: &[&TokenIds]) -> Result<Vec<Prediction>> {
        let (probs, alpha) = self.run(batch)?;
        Ok((0..probs.rows())
            .map(|i| Prediction {
                class: argmax(probs.row(i)),
                probs: probs.row(i).to_vec(),
                alpha: alpha.as_ref().map(|a| a.row(i).to_vec()),
            })
            .collect())
    }

    /// Compares analytic gradients of the batch loss against central
    /// differences over every parameter, with dropout disabled.
    pub fn gradient_check(
        &self,
        batch: &[&TokenIds],
        labels: &[usize],
        epsilon: f64,
    ) -> Result<GradCheck> {
        let tensors = self.params.tensors();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        finite_diff_check(&tensors, epsilon, |tape, vars| {
            self.loss_graph(tape, vars, batch, labels, false, &mut rng)
        })
    }

    pub fn parameter_name(&self, index: usize) -> String {
        self.params
            .iter()
            .nth(index)
            .map_or_else(|| index.to_string(), |(_, p)| p.name.clone())
    }
}

/// Relative-error bound for [`gradcheck_tiny`].
pub const GRADCHECK_TOLERANCE: f64 = 1e-3;
pub const GRADCHECK_EPSILON: f64 = 1e-4;

/// Smallest distance from a relu kink or max-pool tie accepted for the point
/// checked by [`gradcheck_tiny`]. One ε step moves any pre-activation by far
/// less than this, so central differences never straddle a kink.
pub const GRADCHECK_KINK_MARGIN: f64 = 10.0 * GRADCHECK_EPSILON;

/// Finite-difference check of `variant` in its [`ModelConfig::tiny`] shape on
/// a two-report batch (one full, one padded). Parameters are jittered, and
/// the jitter and batch are redrawn until the forward pass keeps
/// [`GRADCHECK_KINK_MARGIN`] away from every relu kink and pooling tie.
/// Returns the report and the name of the parameter holding the worst
/// coordinate.
pub fn gradcheck_tiny(variant: Variant, seed: u64) -> Result<(GradCheck, String)> {
    let cfg = ModelConfig::tiny(variant, seed);
    let (n, vocab, classes) = (cfg.n_max, cfg.vocab_size, cfg.num_classes);
    let base = HarmClassifier::build(cfg)?;
    for attempt in 0..256 {
        let mut model = base.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(7 + attempt);
        for p in model.params_mut().iter_mut() {
            p.value
                .data_mut()
                .iter_mut()
                .for_each(|x| *x += rng.random_range(-0.1..0.1));
        }
        let mut report = |real: usize| {
            let ids: Vec<u32> = (0..n)
                .map(|t| {
                    if t < real {
                        rng.random_range(1..vocab as u32)
                    } else {
                        0
                    }
                })
                .collect();
            TokenIds {
                mask: ids.iter().map(|&i| i != 0).collect(),
                ids,
            }
        };
        let full = report(n);
        let padded = report(5);
        let labels = [rng.random_range(0..classes), rng.random_range(0..classes)];
        let batch = [&full, &padded];

        let mut tape = Tape::new();
        let vars = model.params.register(&mut tape);
        model.loss_graph(&mut tape, &vars, &batch, &labels, false, &mut rng)?;
        if tape.kink_margin() < GRADCHECK_KINK_MARGIN {
            continue;
        }
        let check = model.gradient_check(&batch, &labels, GRADCHECK_EPSILON)?;
        let name = model.parameter_name(check.worst_param);
        return Ok((check, name));
    }
    Err(Error::Contract(format!(
        "{variant}: no draw kept clear of relu kinks and pooling ties"
    )))
}

/// Index of the largest value; ties go to the lower index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean negative log-likelihood with probabilities floored at `1e−12`.
pub fn loss(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.constant(probs.clone());
    let l = tape.nll_loss(p, labels)?;
    Ok(tape.value(l).data()[0])
}
