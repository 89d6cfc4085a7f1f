//! Network building blocks over the autodiff tape.
//!
//! Parameter aggregates only hold [`ParamId`]s into a [`ParamStore`]; every
//! forward function takes the tape plus the leaf handles returned by
//! [`ParamStore::register`], so one store can be replayed on many tapes.
//!
//! Sequences are processed in batches: a batch of `B` sequences of length `n`
//! is a `[B·n × d]` matrix whose row `b·n + t` is position `t` of sequence `b`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, ParamId, ParamStore, Tape, Tensor, Var};
use crate::{Error, Result};

/// Uniform(−a, a) with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<R: Rng + ?Sized>(
    rng: &mut R,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
) -> Tensor {
    let a = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    uniform(rng, shape, a)
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], a: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-a..a)).collect();
    Tensor::new(shape.to_vec(), data).expect("positive shape")
}

const EMBEDDING_INIT: f64 = 0.05;

// ---------------------------------------------------------------------------
// Embedding

/// `vocab_size × dim` lookup table. Row 0 is padding and always reads as zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub table: ParamId,
    pub vocab_size: usize,
    pub dim: usize,
}

impl EmbeddingTable {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        vocab_size: usize,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut t = uniform(rng, &[vocab_size, dim], EMBEDDING_INIT);
        t.data_mut()[..dim].iter_mut().for_each(|v| *v = 0.0);
        let table = store.push(format!("{name}.table"), t);
        EmbeddingTable {
            table,
            vocab_size,
            dim,
        }
    }
}

/// Looks up each id; id 0 yields a zero row and never receives gradient.
pub fn embed_sequence(
    tape: &mut Tape,
    vars: &[Var],
    emb: &EmbeddingTable,
    ids: &[u32],
) -> Result<Var> {
    let mut index = Vec::with_capacity(ids.len());
    for (pos, &id) in ids.iter().enumerate() {
        let id = id as usize;
        if id >= emb.vocab_size {
            return Err(Error::Data(format!(
                "token id {id} at position {pos} outside vocabulary of {}",
                emb.vocab_size
            )));
        }
        index.push((id != 0).then_some(id));
    }
    tape.gather_rows(vars[emb.table.0], index)
}

// ---------------------------------------------------------------------------
// Convolution

/// One filter bank per width; all banks share the channel count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBlockParams {
    pub widths: Vec<usize>,
    pub d_in: usize,
    pub channels: usize,
    /// `(weights [k·d_in × channels], bias [channels])` per width.
    pub filters: Vec<(ParamId, ParamId)>,
}

impl ConvBlockParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        d_in: usize,
        channels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.is_empty() || widths.windows(2).any(|w| w[0] >= w[1]) || widths[0] == 0 {
            return Err(Error::Config(format!(
                "filter widths must be non-empty, positive and strictly increasing: {widths:?}"
            )));
        }
        let filters = widths
            .iter()
            .map(|&k| {
                let w = xavier_uniform(rng, &[k * d_in, channels], k * d_in, channels);
                let w = store.push(format!("{name}.w{k}"), w);
                let b = store.push(format!("{name}.b{k}"), Tensor::zeros(&[channels]));
                (w, b)
            })
            .collect();
        Ok(ConvBlockParams {
            widths: widths.to_vec(),
            d_in,
            channels,
            filters,
        })
    }

    pub fn out_width(&self) -> usize {
        self.channels * self.widths.len()
    }

    pub fn max_width(&self) -> usize {
        *self.widths.last().expect("non-empty widths")
    }
}

/// Zero-padding on each side of a "same" convolution of width `k`.
pub fn same_padding(k: usize) -> (usize, usize) {
    let left = (k - 1) / 2;
    (left, k - 1 - left)
}

/// Same-length 1-D convolution for every width, followed by relu, with the
/// per-width feature maps concatenated along the channel axis.
///
/// Output row `t` of width `k` sees input rows `t − left .. t − left + k`
/// (see [`same_padding`]); positions outside the sequence read as zeros.
pub fn conv1d_multi(
    tape: &mut Tape,
    vars: &[Var],
    params: &ConvBlockParams,
    x: Var,
    seq_len: usize,
) -> Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    if shape.len() != 2
        || shape[1] != params.d_in
        || seq_len == 0
        || !shape[0].is_multiple_of(seq_len)
    {
        return Err(Error::dim("conv1d_multi", &shape, &[seq_len, params.d_in]));
    }
    if seq_len < params.max_width() {
        return Err(Error::Input(format!(
            "sequence of length {seq_len} is shorter than the widest filter ({})",
            params.max_width()
        )));
    }
    let batch = shape[0] / seq_len;
    let mut maps = Vec::with_capacity(params.widths.len());
    for (&k, &(w, b)) in params.widths.iter().zip(&params.filters) {
        let (left, _) = same_padding(k);
        let mut index = Vec::with_capacity(batch * seq_len * k);
        for s in 0..batch {
            for t in 0..seq_len {
                for j in 0..k {
                    let src = (t + j).checked_sub(left).filter(|&p| p < seq_len);
                    index.push(src.map(|p| s * seq_len + p));
                }
            }
        }
        let windows = tape.gather_rows(x, index)?;
        let windows = tape.reshape(windows, vec![batch * seq_len, k * params.d_in])?;
        let z = tape.matmul(windows, vars[w.0])?;
        let z = tape.add_row(z, vars[b.0])?;
        maps.push(tape.activation(z, Activation::Relu));
    }
    if maps.len() == 1 {
        Ok(maps[0])
    } else {
        tape.concat(&maps, 1)
    }
}

/// Non-overlapping max pooling over time; see [`Tape::max_pool_rows`].
pub fn max_pool(tape: &mut Tape, x: Var, seq_len: usize, window: usize) -> Result<Var> {
    tape.max_pool_rows(x, seq_len, window)
}

/// A pooled position is real when its window contains at least one real position.
pub fn pool_mask(mask: &[bool], seq_len: usize, window: usize) -> Vec<bool> {
    mask.chunks(seq_len)
        .flat_map(|seq| seq.chunks(window).map(|w| w.iter().any(|&m| m)))
        .collect()
}

// ---------------------------------------------------------------------------
// Recurrent cells

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    /// `h' = g(W x + U h + b)`
    Plain(Activation),
    Lstm,
    Gru,
}

impl CellKind {
    pub fn gate_blocks(self) -> usize {
        match self {
            CellKind::Plain(_) => 1,
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }
}

/// Weights of one recurrent cell. Gate blocks are laid out along columns:
/// LSTM `[input, forget, candidate, output]`, GRU `[update, reset, candidate]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentCellParams {
    pub kind: CellKind,
    pub d_in: usize,
    pub hidden: usize,
    /// Input weights `[d_in × G·H]`.
    pub w: ParamId,
    /// Recurrent weights `[H × G·H]`.
    pub u: ParamId,
    /// Bias `[G·H]`.
    pub b: ParamId,
}

pub const LSTM_FORGET_BIAS: f64 = 1.0;

impl RecurrentCellParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        kind: CellKind,
        d_in: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let g = kind.gate_blocks() * hidden;
        let w = store.push(
            format!("{name}.w"),
            xavier_uniform(rng, &[d_in, g], d_in, g),
        );
        let u = store.push(
            format!("{name}.u"),
            xavier_uniform(rng, &[hidden, g], hidden, g),
        );
        let mut bias = Tensor::zeros(&[g]);
        if kind == CellKind::Lstm {
            bias.data_mut()[hidden..2 * hidden]
                .iter_mut()
                .for_each(|v| *v = LSTM_FORGET_BIAS);
        }
        let b = store.push(format!("{name}.b"), bias);
        RecurrentCellParams {
            kind,
            d_in,
            hidden,
            w,
            u,
            b,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

fn check_state(
    tape: &Tape,
    op: &'static str,
    state: Var,
    batch: usize,
    hidden: usize,
) -> Result<()> {
    let s = tape.value(state).shape();
    if s != [batch, hidden] {
        return Err(Error::dim(op, s, &[batch, hidden]));
    }
    Ok(())
}

fn project_input(tape: &mut Tape, vars: &[Var], cell: &RecurrentCellParams, x: Var) -> Result<Var> {
    let xw = tape.matmul(x, vars[cell.w.0])?;
    tape.add_row(xw, vars[cell.b.0])
}

/// LSTM transition from a pre-computed input projection `W x + b` (`[B × 4H]`).
fn lstm_from_projection(
    tape: &mut Tape,
    vars: &[Var],
    cell: &RecurrentCellParams,
    xp: Var,
    state: LstmState,
) -> Result<LstmState> {
    let h = cell.hidden;
    let hu = tape.matmul(state.h, vars[cell.u.0])?;
    let gates = tape.add(xp, hu)?;
    let pre_i = tape.slice_cols(gates, 0, h)?;
    let pre_f = tape.slice_cols(gates, h, 2 * h)?;
    let pre_g = tape.slice_cols(gates, 2 * h, 3 * h)?;
    let pre_o = tape.slice_cols(gates, 3 * h, 4 * h)?;
    let i = tape.activation(pre_i, Activation::Sigmoid);
    let f = tape.activation(pre_f, Activation::Sigmoid);
    let g = tape.activation(pre_g, Activation::Tanh);
    let o = tape.activation(pre_o, Activation::Sigmoid);
    let keep = tape.mul(f, state.c)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.activation(c, Activation::Tanh);
    let h = tape.mul(o, tc)?;
    Ok(LstmState { h, c })
}

/// GRU transition; `u_zr` and `u_n` are the update/reset and candidate column blocks of `U`.
fn gru_from_projection(
    tape: &mut Tape,
    hidden: usize,
    u_zr: Var,
    u_n: Var,
    xp: Var,
    h: Var,
) -> Result<Var> {
    let x_zr = tape.slice_cols(xp, 0, 2 * hidden)?;
    let x_n = tape.slice_cols(xp, 2 * hidden, 3 * hidden)?;
    let hu = tape.matmul(h, u_zr)?;
    let pre_zr = tape.add(x_zr, hu)?;
    let zr = tape.activation(pre_zr, Activation::Sigmoid);
    let z = tape.slice_cols(zr, 0, hidden)?;
    let r = tape.slice_cols(zr, hidden, 2 * hidden)?;
    let rh = tape.mul(r, h)?;
    let rhu = tape.matmul(rh, u_n)?;
    let pre_n = tape.add(x_n, rhu)?;
    let cand = tape.activation(pre_n, Activation::Tanh);
    // (1 − z)⊙h + z⊙h̃ = h + z⊙(h̃ − h)
    let delta = tape.sub(cand, h)?;
    let step = tape.mul(z, delta)?;
    tape.add(h, step)
}

fn plain_from_projection(
    tape: &mut Tape,
    vars: &[Var],
    cell: &RecurrentCellParams,
    act: Activation,
    xp: Var,
    h: Var,
) -> Result<Var> {
    let hu = tape.matmul(h, vars[cell.u.0])?;
    let pre = tape.add(xp, hu)?;
    Ok(tape.activation(pre, act))
}

fn expect_kind(cell: &RecurrentCellParams, want: &str, ok: bool) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "expected a {want} cell, got {:?}",
            cell.kind
        )))
    }
}

/// One LSTM step on a batch `x_t: [B × d_in]` with state `(h, c)` of `[B × H]`.
///
/// Gates `i, f, o = σ(·)`, candidate `g = tanh(·)`, `c' = f⊙c + i⊙g`,
/// `h' = o⊙tanh(c')`; no peepholes.
pub fn lstm_step(
    tape: &mut Tape,
    vars: &[Var],
    cell: &RecurrentCellParams,
    x_t: Var,
    state: LstmState,
) -> Result<LstmState> {
    expect_kind(cell, "lstm", cell.kind == CellKind::Lstm)?;
    let batch = tape.value(x_t).rows();
    check_state(tape, "lstm_step", state.h, batch, cell.hidden)?;
    check_state(tape, "lstm_step", state.c, batch, cell.hidden)?;
    let xp = project_input(tape, vars, cell, x_t)?;
    lstm_from_projection(tape, vars, cell, xp, state)
}

/// One GRU step: `z, r = σ(·)`, `h̃ = tanh(W x + U(r⊙h) + b)`, `h' = (1−z)⊙h + z⊙h̃`.
pub fn gru_step(
    tape: &mut Tape,
    vars: &[Var],
    cell: &RecurrentCellParams,
    x_t: Var,
    h: Var,
) -> Result<Var> {
    expect_kind(cell, "gru", cell.kind == CellKind::Gru)?;
    let batch = tape.value(x_t).rows();
    check_state(tape, "gru_step", h, batch, cell.hidden)?;
    let xp = project_input(tape, vars, cell, x_t)?;
    let hid = cell.hidden;
    let u_zr = tape.slice_cols(vars[cell.u.0], 0, 2 * hid)?;
    let u_n = tape.slice_cols(vars[cell.u.0], 2 * hid, 3 * hid)?;
    gru_from_projection(tape, hid, u_zr, u_n, xp, h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy)]
pub struct RnnOutput {
    /// `[B·n × H]`; row `b·n + t` is the state after consuming position `t`.
    pub states: Var,
    /// `[B × H]` state after the whole sequence has been consumed
    /// (position `n−1` going forward, position 0 going backward).
    pub last: Var,
}

/// Runs a cell over a batch of sequences from a zero state.
///
/// With a mask, steps at masked positions leave the state unchanged, so the
/// final state is the state after the last real token in reading order.
/// Without one every position is consumed.
pub fn run_rnn(
    tape: &mut Tape,
    vars: &[Var],
    cell: &RecurrentCellParams,
    x: Var,
    seq_len: usize,
    direction: Direction,
    mask: Option<&[bool]>,
) -> Result<RnnOutput> {
    let shape = tape.value(x).shape().to_vec();
    if seq_len == 0 || shape.len() != 2 || shape[0] == 0 {
        return Err(Error::Input(
            "recurrent layer needs a non-empty sequence".into(),
        ));
    }
    if !shape[0].is_multiple_of(seq_len) || shape[1] != cell.d_in {
        return Err(Error::dim("run_rnn", &shape, &[seq_len, cell.d_in]));
    }
    let batch = shape[0] / seq_len;
    if let Some(m) = mask {
        if m.len() != shape[0] {
            return Err(Error::dim("run_rnn mask", &shape, &[m.len()]));
        }
    }
    let hid = cell.hidden;
    let xp_all = project_input(tape, vars, cell, x)?;
    let (u_zr, u_n) = if cell.kind == CellKind::Gru {
        (
            Some(tape.slice_cols(vars[cell.u.0], 0, 2 * hid)?),
            Some(tape.slice_cols(vars[cell.u.0], 2 * hid, 3 * hid)?),
        )
    } else {
        (None, None)
    };

    let zeros = Tensor::zeros(&[batch, hid]);
    let mut h = tape.constant(zeros.clone());
    let mut c = tape.constant(zeros);
    let mut per_pos: Vec<Option<Var>> = vec![None; seq_len];
    let order: Vec<usize> = match direction {
        Direction::Forward => (0..seq_len).collect(),
        Direction::Backward => (0..seq_len).rev().collect(),
    };
    for &t in &order {
        let rows = (0..batch).map(|b| Some(b * seq_len + t)).collect();
        let xp = tape.gather_rows(xp_all, rows)?;
        let (mut h_new, mut c_new) = match cell.kind {
            CellKind::Lstm => {
                let s = lstm_from_projection(tape, vars, cell, xp, LstmState { h, c })?;
                (s.h, s.c)
            }
            CellKind::Gru => {
                let h_new = gru_from_projection(tape, hid, u_zr.unwrap(), u_n.unwrap(), xp, h)?;
                (h_new, c)
            }
            CellKind::Plain(act) => (plain_from_projection(tape, vars, cell, act, xp, h)?, c),
        };
        if let Some(m) = mask {
            let step: Vec<bool> = (0..batch).map(|b| m[b * seq_len + t]).collect();
            if step.iter().any(|&v| !v) {
                let gate = Tensor::new(
                    vec![batch, 1],
                    step.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
                )?;
                let gate = tape.constant(gate);
                h_new = blend(tape, h, h_new, gate)?;
                if cell.kind == CellKind::Lstm {
                    c_new = blend(tape, c, c_new, gate)?;
                }
            }
        }
        h = h_new;
        c = c_new;
        per_pos[t] = Some(h);
    }
    let stacked: Vec<Var> = per_pos
        .into_iter()
        .map(|v| v.expect("every position visited"))
        .collect();
    let time_major = if stacked.len() == 1 {
        stacked[0]
    } else {
        tape.concat(&stacked, 0)?
    };
    let index = (0..batch)
        .flat_map(|b| (0..seq_len).map(move |t| Some(t * batch + b)))
        .collect();
    let states = tape.gather_rows(time_major, index)?;
    Ok(RnnOutput { states, last: h })
}

/// `old + gate ⊙ (new − old)` with a per-row 0/1 gate.
fn blend(tape: &mut Tape, old: Var, new: Var, gate: Var) -> Result<Var> {
    let delta = tape.sub(new, old)?;
    let delta = tape.scale_rows(delta, gate)?;
    tape.add(old, delta)
}

/// Bidirectional recurrence: per-position concatenation `[→h_t ; ←h_t]`.
/// `last` concatenates the final forward and final backward states.
pub fn birnn(
    tape: &mut Tape,
    vars: &[Var],
    fwd: &RecurrentCellParams,
    bwd: &RecurrentCellParams,
    x: Var,
    seq_len: usize,
    mask: Option<&[bool]>,
) -> Result<RnnOutput> {
    if fwd.hidden != bwd.hidden {
        return Err(Error::Config(format!(
            "bidirectional hidden sizes differ: {} vs {}",
            fwd.hidden, bwd.hidden
        )));
    }
    let f = run_rnn(tape, vars, fwd, x, seq_len, Direction::Forward, mask)?;
    let b = run_rnn(tape, vars, bwd, x, seq_len, Direction::Backward, mask)?;
    Ok(RnnOutput {
        states: tape.concat(&[f.states, b.states], 1)?,
        last: tape.concat(&[f.last, b.last], 1)?,
    })
}

// ---------------------------------------------------------------------------
// Attention

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub input: usize,
    pub proj_dim: usize,
    /// `U: [input × proj_dim]`
    pub proj: ParamId,
    pub bias: ParamId,
    /// Context vector `z: [proj_dim × 1]`.
    pub context: ParamId,
}

impl AttentionParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        proj_dim: usize,
        rng: &mut R,
    ) -> Self {
        let proj = store.push(
            format!("{name}.proj"),
            xavier_uniform(rng, &[input, proj_dim], input, proj_dim),
        );
        let bias = store.push(format!("{name}.bias"), Tensor::zeros(&[proj_dim]));
        let context = store.push(
            format!("{name}.context"),
            uniform(rng, &[proj_dim, 1], EMBEDDING_INIT),
        );
        AttentionParams {
            input,
            proj_dim,
            proj,
            bias,
            context,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Attended {
    /// Pooled context `[B × H']`.
    pub context: Var,
    /// Weights `[B × n]`, exactly zero at masked positions.
    pub alpha: Var,
}

/// Soft attention over time: `u_t = tanh(U h_t + b)`, `α = softmax_β(u_tᵀ z)`
/// restricted to unmasked positions, `c = Σ α_t h_t`.
pub fn attention_pool(
    tape: &mut Tape,
    vars: &[Var],
    params: &AttentionParams,
    h: Var,
    seq_len: usize,
    mask: &[bool],
    beta: f64,
) -> Result<Attended> {
    let shape = tape.value(h).shape().to_vec();
    if shape.len() != 2
        || seq_len == 0
        || !shape[0].is_multiple_of(seq_len)
        || shape[1] != params.input
    {
        return Err(Error::dim(
            "attention_pool",
            &shape,
            &[seq_len, params.input],
        ));
    }
    if mask.len() != shape[0] {
        return Err(Error::dim("attention_pool mask", &shape, &[mask.len()]));
    }
    let batch = shape[0] / seq_len;
    if let Some(b) = mask.chunks(seq_len).position(|m| !m.iter().any(|&v| v)) {
        return Err(Error::Input(format!("sequence {b} is fully masked")));
    }
    let proj = tape.matmul(h, vars[params.proj.0])?;
    let proj = tape.add_row(proj, vars[params.bias.0])?;
    let u = tape.activation(proj, Activation::Tanh);
    let scores = tape.matmul(u, vars[params.context.0])?;
    let scores = tape.reshape(scores, vec![batch, seq_len])?;
    let alpha = tape.masked_softmax_rows(scores, beta, mask)?;
    let weights = tape.reshape(alpha, vec![batch * seq_len, 1])?;
    let weighted = tape.scale_rows(h, weights)?;
    let context = tape.sum_row_groups(weighted, seq_len)?;
    Ok(Attended { context, alpha })
}

// ---------------------------------------------------------------------------
// Dense

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub d_in: usize,
    pub d_out: usize,
    pub w: ParamId,
    pub b: ParamId,
    pub activation: Option<Activation>,
}

impl DenseParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        activation: Option<Activation>,
        rng: &mut R,
    ) -> Self {
        let w = store.push(
            format!("{name}.w"),
            xavier_uniform(rng, &[d_in, d_out], d_in, d_out),
        );
        let b = store.push(format!("{name}.b"), Tensor::zeros(&[d_out]));
        DenseParams {
            d_in,
            d_out,
            w,
            b,
            activation,
        }
    }
}

/// `activation(x W + b)` for row-stacked inputs `x: [B × d_in]`.
pub fn dense(tape: &mut Tape, vars: &[Var], params: &DenseParams, x: Var) -> Result<Var> {
    let z = tape.matmul(x, vars[params.w.0])?;
    let z = tape.add_row(z, vars[params.b.0])?;
    Ok(match params.activation {
        Some(act) => tape.activation(z, act),
        None => z,
    })
}

/// Human-readable label for a parameter shape, used in diagnostics.
pub fn describe(store: &ParamStore, id: ParamId) -> String {
    format!("{} {:?}", store.name(id), store.get(id).shape())
}
