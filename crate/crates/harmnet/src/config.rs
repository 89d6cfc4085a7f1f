//! Flat `key = value` run configuration.
//!
//! Lines starting with `#` are comments. Later assignments win, so a config
//! file can be followed by command-line overrides of the same form.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use harmnet_core::data::SchemaName;
use harmnet_core::model::{ModelConfig, Variant};
use harmnet_core::training::{Monitor, TrainConfig};

/// Environment variable naming the directory under which run directories
/// are created when `--out` is not given.
pub const OUT_ROOT_ENV: &str = "HARMNET_OUT";
pub const DEFAULT_OUT_ROOT: &str = "runs";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub schema: SchemaName,
    pub embed_dim: usize,
    pub n_max: usize,
    pub filter_widths: Vec<usize>,
    pub channels: usize,
    pub pool_window: usize,
    pub hidden_size: usize,
    pub dropout_rate: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub clip_threshold: f64,
    pub early_stop_patience: usize,
    pub monitor: Monitor,
    pub min_count: u64,
    pub stratify: bool,
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::new(Variant::AttLstmCnn, 2, 2);
        let t = TrainConfig::default();
        RunConfig {
            variant: m.variant,
            schema: SchemaName::Binary,
            embed_dim: m.embed_dim,
            n_max: m.n_max,
            filter_widths: m.filter_widths,
            channels: m.channels,
            pool_window: m.pool_window,
            hidden_size: m.hidden_size,
            dropout_rate: m.dropout_rate,
            beta: m.beta,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            learning_rate: t.learning_rate,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_eps: t.adam_eps,
            clip_threshold: t.clip_threshold,
            early_stop_patience: t.early_stop_patience,
            monitor: t.monitor,
            min_count: 1,
            stratify: true,
            seed: 0,
            data: None,
            out_dir: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("config: invalid value {value:?} for {key}: {e}"))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn monitor_name(m: Monitor) -> &'static str {
    match m {
        Monitor::Accuracy => "accuracy",
        Monitor::Loss => "loss",
        Monitor::MacroF1 => "macro_f1",
    }
}

impl RunConfig {
    pub const KEYS: [&'static str; 24] = [
        "variant",
        "schema",
        "embed_dim",
        "n_max",
        "filter_widths",
        "channels",
        "pool_window",
        "hidden_size",
        "dropout_rate",
        "beta",
        "batch_size",
        "max_epochs",
        "learning_rate",
        "adam_beta1",
        "adam_beta2",
        "adam_eps",
        "clip_threshold",
        "early_stop_patience",
        "monitor",
        "min_count",
        "stratify",
        "seed",
        "data",
        "out_dir",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "variant" => self.variant = parse(key, v)?,
            "schema" => self.schema = parse(key, v)?,
            "embed_dim" => self.embed_dim = parse(key, v)?,
            "n_max" => self.n_max = parse(key, v)?,
            "filter_widths" => self.filter_widths = parse_list(key, v)?,
            "channels" => self.channels = parse(key, v)?,
            "pool_window" => self.pool_window = parse(key, v)?,
            "hidden_size" => self.hidden_size = parse(key, v)?,
            "dropout_rate" => self.dropout_rate = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "max_epochs" => self.max_epochs = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "adam_beta1" => self.adam_beta1 = parse(key, v)?,
            "adam_beta2" => self.adam_beta2 = parse(key, v)?,
            "adam_eps" => self.adam_eps = parse(key, v)?,
            "clip_threshold" => self.clip_threshold = parse(key, v)?,
            "early_stop_patience" => self.early_stop_patience = parse(key, v)?,
            "monitor" => self.monitor = parse(key, v)?,
            "min_count" => self.min_count = parse(key, v)?,
            "stratify" => self.stratify = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "data" => self.data = Some(PathBuf::from(v)),
            "out_dir" => self.out_dir = Some(PathBuf::from(v)),
            other => bail!(
                "config: unknown key {other:?}; known keys: {}",
                Self::KEYS.join(", ")
            ),
        }
        Ok(())
    }

    /// Applies `key = value` lines.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config: {origin}:{}: expected key = value", i + 1))?;
            self.set(k, v)
                .with_context(|| format!("{origin}:{}", i + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("config: cannot read {}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| anyhow!("config: override {o:?} is not key=value"))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// The effective configuration in the same `key = value` format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let widths: Vec<String> = self.filter_widths.iter().map(ToString::to_string).collect();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("variant", self.variant.to_string());
        line("schema", self.schema.to_string());
        line("embed_dim", self.embed_dim.to_string());
        line("n_max", self.n_max.to_string());
        line("filter_widths", widths.join(","));
        line("channels", self.channels.to_string());
        line("pool_window", self.pool_window.to_string());
        line("hidden_size", self.hidden_size.to_string());
        line("dropout_rate", self.dropout_rate.to_string());
        line("beta", self.beta.to_string());
        line("batch_size", self.batch_size.to_string());
        line("max_epochs", self.max_epochs.to_string());
        line("learning_rate", self.learning_rate.to_string());
        line("adam_beta1", self.adam_beta1.to_string());
        line("adam_beta2", self.adam_beta2.to_string());
        line("adam_eps", self.adam_eps.to_string());
        line("clip_threshold", self.clip_threshold.to_string());
        line("early_stop_patience", self.early_stop_patience.to_string());
        line("monitor", monitor_name(self.monitor).to_string());
        line("min_count", self.min_count.to_string());
        line("stratify", self.stratify.to_string());
        line("seed", self.seed.to_string());
        if let Some(d) = &self.data {
            line("data", d.display().to_string());
        }
        if let Some(d) = &self.out_dir {
            line("out_dir", d.display().to_string());
        }
        s
    }

    pub fn model_config(&self, vocab_size: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            vocab_size,
            embed_dim: self.embed_dim,
            n_max: self.n_max,
            filter_widths: self.filter_widths.clone(),
            channels: self.channels,
            pool_window: self.pool_window,
            hidden_size: self.hidden_size,
            dropout_rate: self.dropout_rate,
            num_classes,
            beta: self.beta,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            learning_rate: self.learning_rate,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            clip_threshold: self.clip_threshold,
            early_stop_patience: self.early_stop_patience,
            monitor: self.monitor,
            seed: self.seed,
        }
    }

    /// `out_dir`, or `$HARMNET_OUT/<variant>-<schema>-s<seed>`.
    pub fn resolve_out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| {
            let root = std::env::var_os(OUT_ROOT_ENV)
                .map_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT), PathBuf::from);
            root.join(format!("{}-{}-s{}", self.variant, self.schema, self.seed))
        })
    }
}
