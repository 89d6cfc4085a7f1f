//! Dataset, vocabulary, checkpoint and history files.
//!
//! Every writer goes through [`atomic_write`]: the bytes land in a temporary
//! file next to the target which is then renamed over it, so a failed command
//! never leaves a partial file behind.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use harmnet_core::autodiff::Tensor;
use harmnet_core::data::{LabelSchema, Report, Vocabulary};
use harmnet_core::model::{HarmClassifier, ModelConfig};
use harmnet_core::training::EpochRecord;
use serde::{Deserialize, Serialize};

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// One JSON object per line; blank lines are skipped.
pub fn read_jsonl(path: &Path) -> Result<Vec<Report>> {
    let file =
        fs::File::open(path).with_context(|| format!("cannot open dataset {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("{}:{}: read error", path.display(), i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        let report: Report = serde_json::from_str(&line)
            .with_context(|| format!("data: {}:{}: malformed report", path.display(), i + 1))?;
        out.push(report);
    }
    Ok(out)
}

pub fn jsonl_bytes<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    atomic_write(path, &jsonl_bytes(items)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("malformed JSON in {}", path.display()))
}

#[derive(Debug, Serialize, Deserialize)]
struct VocabFile {
    hash: String,
    /// `[token, id, count]`
    tokens: Vec<(String, u32, u64)>,
}

pub fn save_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    write_json(
        path,
        &VocabFile {
            hash: vocab.hash().to_string(),
            tokens: vocab.triples(),
        },
    )
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let file: VocabFile = read_json(path)?;
    let vocab = Vocabulary::from_triples(file.tokens)
        .with_context(|| format!("data: invalid vocabulary {}", path.display()))?;
    if vocab.hash() != file.hash {
        bail!(
            "data: vocabulary {} does not match its recorded hash",
            path.display()
        );
    }
    Ok(vocab)
}

pub const CHECKPOINT_FORMAT: &str = "harmnet-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: ModelConfig,
    pub schema: LabelSchema,
    pub vocab_hash: String,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(model: &HarmClassifier, schema: &LabelSchema, vocab: &Vocabulary) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            config: model.config().clone(),
            schema: schema.clone(),
            vocab_hash: vocab.hash().to_string(),
            params: model
                .params()
                .iter()
                .map(|(_, p)| NamedTensor {
                    name: p.name.clone(),
                    tensor: p.value.clone(),
                })
                .collect(),
        }
    }

    pub fn model(&self) -> Result<HarmClassifier> {
        let tensors = self
            .params
            .iter()
            .map(|p| (p.name.clone(), p.tensor.clone()))
            .collect();
        Ok(HarmClassifier::from_parameters(
            self.config.clone(),
            tensors,
        )?)
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_json(path, ckpt)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let ckpt: Checkpoint = read_json(path)?;
    if ckpt.format != CHECKPOINT_FORMAT {
        bail!(
            "data: {} is not a {CHECKPOINT_FORMAT} file (found {:?})",
            path.display(),
            ckpt.format
        );
    }
    Ok(ckpt)
}

pub fn write_history(path: &Path, epochs: &[EpochRecord]) -> Result<()> {
    write_jsonl(path, epochs)
}

pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .with_context(|| format!("{}:{}: malformed record", path.display(), i + 1))
        })
        .collect()
}
