//! Frozen sentiment scoring over seven emotion classes.
//!
//! The scorer stands in for an off-the-shelf sentiment model: it is pluggable
//! behind [`SentimentScorer`], owns no trainable parameters, and never
//! participates in gradient computation. The built-in implementation counts
//! keyword-lexicon hits per class and softmaxes the counts.

use crate::error::{Error, Result};
use crate::tensor::validate_simplex;

/// Number of emotion classes.
pub const SENTIMENT_CLASSES: usize = 7;

/// Class order used everywhere: index ↔ emotion.
pub const CLASS_NAMES: [&str; SENTIMENT_CLASSES] = [
    "anger",
    "disgust",
    "fear",
    "joy",
    "neutral",
    "sadness",
    "surprise",
];

/// Index of the neutral class, which absorbs unknown words.
pub const NEUTRAL_CLASS: usize = 4;

/// A point on the 7-class probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SentimentDistribution([f64; SENTIMENT_CLASSES]);

impl SentimentDistribution {
    pub fn new(values: [f64; SENTIMENT_CLASSES]) -> Result<Self> {
        validate_simplex(&values)?;
        Ok(SentimentDistribution(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() != SENTIMENT_CLASSES {
            return Err(Error::validation(format!(
                "sentiment distribution needs {SENTIMENT_CLASSES} entries, got {}",
                values.len()
            )));
        }
        let mut arr = [0.0; SENTIMENT_CLASSES];
        arr.copy_from_slice(values);
        Self::new(arr)
    }

    pub fn uniform() -> Self {
        SentimentDistribution([1.0 / SENTIMENT_CLASSES as f64; SENTIMENT_CLASSES])
    }

    pub fn values(&self) -> &[f64; SENTIMENT_CLASSES] {
        &self.0
    }

    /// Index of the most probable class (lowest index wins ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..SENTIMENT_CLASSES {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// A frozen text → sentiment mapping. Implementations must be deterministic.
pub trait SentimentScorer: Send + Sync {
    fn score(&self, text: &str) -> SentimentDistribution;
}

/// Per-class keyword lists. Kept in sync with the caption templates in the
/// synthetic generator so same-class captions share sentiment peaks.
pub const LEXICON: [&[&str]; SENTIMENT_CLASSES] = [
    &["angry", "furious", "rage", "mad", "irritated", "annoyed", "outraged", "fuming", "resentful", "hostile"],
    &["disgusted", "gross", "revolting", "nauseating", "repulsed", "sickening", "foul", "vile", "nasty", "yuck"],
    &["afraid", "scared", "terrified", "fearful", "anxious", "panicked", "dread", "frightened", "nervous", "alarmed"],
    &["happy", "joyful", "delighted", "cheerful", "smiling", "laughing", "glad", "thrilled", "excited", "beaming"],
    &["calm", "plain", "ordinary", "neutral", "composed", "indifferent", "routine", "steady", "flat", "unmoved"],
    &["sad", "gloomy", "tearful", "miserable", "sorrowful", "crying", "downcast", "heartbroken", "mournful", "dejected"],
    &["surprised", "astonished", "amazed", "startled", "shocked", "stunned", "unexpected", "sudden", "astounded", "dumbfounded"],
];

/// Weight an out-of-lexicon word contributes to the neutral class.
const UNKNOWN_WEIGHT: f64 = 0.25;

/// Keyword-count scorer: lexicon hits add 1 to their class, unknown words add
/// a fractional count to neutral, and the counts are softmaxed (temperature 1).
#[derive(Debug, Default, Clone)]
pub struct LexiconScorer;

impl LexiconScorer {
    fn class_of(word: &str) -> Option<usize> {
        LEXICON
            .iter()
            .position(|words| words.contains(&word))
    }
}

impl SentimentScorer for LexiconScorer {
    fn score(&self, text: &str) -> SentimentDistribution {
        let mut counts = [0.0; SENTIMENT_CLASSES];
        for raw in text.split_whitespace() {
            let word = raw.to_lowercase();
            match Self::class_of(&word) {
                Some(c) => counts[c] += 1.0,
                None => counts[NEUTRAL_CLASS] += UNKNOWN_WEIGHT,
            }
        }
        // softmax with max subtraction; all-zero counts give the uniform
        let max = counts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut exps = [0.0; SENTIMENT_CLASSES];
        let mut sum = 0.0;
        for (e, &c) in exps.iter_mut().zip(&counts) {
            *e = (c - max).exp();
            sum += *e;
        }
        for e in exps.iter_mut() {
            *e /= sum;
        }
        SentimentDistribution(exps)
    }
}
