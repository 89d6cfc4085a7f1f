use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{tokenize, LabelSchema, Report, Vocabulary, PAD_ID};
use crate::{Error, Result};

/// Fixed-length id sequence: real tokens first, then padding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenIds {
    pub ids: Vec<u32>,
    /// `true` on real-token positions.
    pub mask: Vec<bool>,
}

impl TokenIds {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedReport {
    pub tokens: TokenIds,
    pub label: usize,
}

/// Keeps the first `n_max` tokens and right-pads with [`PAD_ID`].
pub fn encode_text(text: &str, vocab: &Vocabulary, n_max: usize) -> Result<TokenIds> {
    if n_max == 0 {
        return Err(Error::Parameter("n_max must be positive".into()));
    }
    let mut ids: Vec<u32> = tokenize(text)
        .iter()
        .take(n_max)
        .map(|t| vocab.id(t))
        .collect();
    let real = ids.len();
    ids.resize(n_max, PAD_ID);
    let mask = (0..n_max).map(|i| i < real).collect();
    Ok(TokenIds { ids, mask })
}

pub fn encode(
    report: &Report,
    vocab: &Vocabulary,
    schema: &LabelSchema,
    n_max: usize,
) -> Result<EncodedReport> {
    let severity = report
        .severity
        .ok_or_else(|| Error::Data(format!("report is unlabeled: {:?}", truncate(&report.text))))?;
    Ok(EncodedReport {
        tokens: encode_text(&report.text, vocab, n_max)?,
        label: schema.map(severity),
    })
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(40) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_vocab, Severity, UNK_ID};
    use alloc::vec;

    #[test]
    fn pads_and_crops() {
        let v = build_vocab(["a b c d e f g"], 1).unwrap();
        let e = encode_text("a b c", &v, 5).unwrap();
        assert_eq!(e.ids, vec![v.id("a"), v.id("b"), v.id("c"), 0, 0]);
        assert_eq!(e.mask, vec![true, true, true, false, false]);
        let e = encode_text("a b c d e f g", &v, 5).unwrap();
        assert_eq!(e.ids, ["a", "b", "c", "d", "e"].map(|t| v.id(t)).to_vec());
        assert!(e.mask.iter().all(|&m| m));
        assert_eq!(encode_text("zzz", &v, 2).unwrap().ids, vec![UNK_ID, 0]);
    }

    #[test]
    fn label_mapping_and_unlabeled() {
        let v = build_vocab(["pt fell"], 1).unwrap();
        let r = Report::new("pt fell", Some(Severity::E));
        let e = encode(&r, &v, &LabelSchema::binary(), 4).unwrap();
        assert_eq!(LabelSchema::binary().class_names()[e.label], "harm");
        let u = Report::new("pt fell", None);
        assert!(matches!(
            encode(&u, &v, &LabelSchema::binary(), 4),
            Err(Error::Data(_))
        ));
    }
}
