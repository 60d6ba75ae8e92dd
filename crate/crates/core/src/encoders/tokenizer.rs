//! Whitespace tokenizer with a corpus-derived vocabulary.

use std::collections::BTreeMap;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

/// Lowercase whitespace tokenizer. The vocabulary is the sorted set of
/// corpus words preceded by `<pad>` and `<unk>`, so identical corpora yield
/// identical id assignments.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    words: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl Tokenizer {
    pub fn from_corpus<'a, I>(texts: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut seen: Vec<String> = texts
            .into_iter()
            .flat_map(|t| t.split_whitespace())
            .map(|w| w.to_lowercase())
            .collect();
        seen.sort_unstable();
        seen.dedup();
        let mut words = vec!["<pad>".to_string(), "<unk>".to_string()];
        words.extend(seen);
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Tokenizer { words, index }
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    /// Encode to ids, truncated to `max_len`. Unknown words map to `<unk>`.
    pub fn encode(&self, text: &str, max_len: usize) -> Vec<u32> {
        text.split_whitespace()
            .take(max_len)
            .map(|w| {
                let lw = w.to_lowercase();
                self.index.get(&lw).copied().unwrap_or(UNK_ID)
            })
            .collect()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(|s| s.as_str())
    }
}
