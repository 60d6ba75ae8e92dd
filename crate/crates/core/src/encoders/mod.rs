//! Dual-encoder model: frame encoder (patchify + transformer over patch,
//! cls and hmn tokens), temporal encoder, text encoder, and the frozen
//! sentiment scorer.

pub mod checkpoint;
pub mod config;
pub mod model;
pub mod sentiment;
pub mod tokenizer;

pub use config::{AttentionMode, InitMode, ModelConfig, TemporalMode};
pub use model::{patchify, Bound, FrameInput, Model, Param, ParamSet, LOGIT_SCALE_INIT, LOGIT_SCALE_MAX};
pub use sentiment::{LexiconScorer, SentimentDistribution, SentimentScorer, SENTIMENT_CLASSES};
pub use tokenizer::Tokenizer;
