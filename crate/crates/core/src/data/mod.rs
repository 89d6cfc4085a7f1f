//! Text and label pipeline.

mod encode;
mod labels;
mod synth;
mod tokenize;
mod vocab;

use alloc::string::String;

use serde::{Deserialize, Serialize};

pub use encode::{encode, encode_text, EncodedReport, TokenIds};
pub use labels::{map_label, LabelSchema, SchemaName, Severity, FOUR_LEVEL_DEFAULT};
pub use synth::{gen_synthetic, Category, ClassTemplates, LengthDist, Profile, SynthSpec};
pub use tokenize::tokenize;
pub use vocab::{build_vocab, Vocabulary, PAD_ID, UNK_ID};

/// One incident narrative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<Severity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    /// Keys not understood by this crate, kept for round-tripping.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Report {
    pub fn new(text: impl Into<String>, severity: Option<Severity>) -> Self {
        Report {
            text: text.into(),
            severity,
            category: None,
            extra: serde_json::Map::new(),
        }
    }

    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self
    }

    /// Whether the severity code is one of the harm codes E–I.
    pub fn is_harm(&self) -> Option<bool> {
        self.severity.map(Severity::is_harm)
    }
}
