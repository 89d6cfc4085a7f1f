use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use sha2::{Digest, Sha256};

use super::tokenize;
use crate::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
const FIRST_ID: u32 = 2;

/// Token → id map. Ids 0 and 1 are reserved for padding and unknown tokens;
/// real tokens start at 2 in descending frequency, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    /// `(token, count)`; entry `i` has id `i + 2`.
    entries: Vec<(String, u64)>,
    index: BTreeMap<String, u32>,
    hash: String,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from persisted `(token, id, count)` triples.
    pub fn from_triples(mut triples: Vec<(String, u32, u64)>) -> Result<Self> {
        triples.sort_by_key(|t| t.1);
        for (i, (tok, id, _)) in triples.iter().enumerate() {
            if *id != FIRST_ID + i as u32 {
                return Err(Error::Data(format!(
                    "vocabulary ids not contiguous at token {tok:?} (id {id})"
                )));
            }
        }
        let entries: Vec<(String, u64)> = triples.into_iter().map(|(t, _, c)| (t, c)).collect();
        Self::from_entries(entries)
    }

    fn from_entries(entries: Vec<(String, u64)>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, (tok, _)) in entries.iter().enumerate() {
            if index.insert(tok.clone(), FIRST_ID + i as u32).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token {tok:?}")));
            }
        }
        let hash = content_hash(&entries);
        Ok(Vocabulary {
            entries,
            index,
            hash,
        })
    }

    /// Number of ids including the two reserved ones.
    pub fn size(&self) -> usize {
        self.entries.len() + FIRST_ID as usize
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        match id {
            PAD_ID => Some("<pad>"),
            UNK_ID => Some("<unk>"),
            _ => self
                .entries
                .get((id - FIRST_ID) as usize)
                .map(|(t, _)| t.as_str()),
        }
    }

    pub fn count(&self, token: &str) -> u64 {
        self.index
            .get(token)
            .map_or(0, |&id| self.entries[(id - FIRST_ID) as usize].1)
    }

    /// `(token, id, count)` for every real token in id order.
    pub fn triples(&self) -> Vec<(String, u32, u64)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, (t, c))| (t.clone(), FIRST_ID + i as u32, *c))
            .collect()
    }

    /// Hex SHA-256 over the token → id assignment.
    pub fn hash(&self) -> &str {
        &self.hash
    }
}

fn content_hash(entries: &[(String, u64)]) -> String {
    let mut hasher = Sha256::new();
    for (i, (tok, _)) in entries.iter().enumerate() {
        hasher.update(tok.as_bytes());
        hasher.update([0u8]);
        hasher.update((FIRST_ID + i as u32).to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Counts tokens over `texts`; tokens seen fewer than `min_count` times map to
/// the unknown id.
pub fn build_vocab<'a, I>(texts: I, min_count: u64) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut docs = 0usize;
    for text in texts {
        docs += 1;
        for tok in tokenize(text) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    if docs == 0 || counts.is_empty() {
        return Err(Error::Data(
            "cannot build a vocabulary from an empty corpus".into(),
        ));
    }
    let min_count = min_count.max(1);
    let mut entries: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .collect();
    // BTreeMap order is lexicographic already; a stable sort keeps it within equal counts
    entries.sort_by(|a, b| b.1.cmp(&a.1));
    Vocabulary::from_entries(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn frequency_then_lexicographic() {
        let v = build_vocab(["a a b"], 1).unwrap();
        assert_eq!(v.id("a"), 2);
        assert_eq!(v.id("b"), 3);
        assert_eq!(v.size(), 4);
        let v = build_vocab(["c b a", "b"], 1).unwrap();
        assert_eq!((v.id("b"), v.id("a"), v.id("c")), (2, 3, 4));
    }

    #[test]
    fn min_count_maps_rare_tokens_to_unknown() {
        let v = build_vocab(["a a b"], 2).unwrap();
        assert_eq!(v.id("b"), UNK_ID);
        assert_eq!(v.id("never"), UNK_ID);
        assert_eq!(v.size(), 3);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            build_vocab(core::iter::empty::<&str>(), 1),
            Err(Error::Data(_))
        ));
        assert!(matches!(build_vocab(["   "], 1), Err(Error::Data(_))));
    }

    #[test]
    fn deterministic_and_triples_round_trip() {
        let corpus = ["the pt fell", "pt fell again", "the end"];
        let a = build_vocab(corpus, 1).unwrap();
        let b = build_vocab(corpus, 1).unwrap();
        assert_eq!(a, b);
        let c = Vocabulary::from_triples(a.triples()).unwrap();
        assert_eq!(a, c);
        assert_eq!(a.hash().len(), 64);
        let other = build_vocab(["something else"], 1).unwrap();
        assert_ne!(a.hash(), other.hash());
        assert!(Vocabulary::from_triples(vec![("x".into(), 5, 1)]).is_err());
    }
}
