//! Desk-scale video-text contrastive learning with subject-aware attention
//! and sentiment-guided loss reweighting.
//!
//! The crate is organized around six pieces:
//!
//! - [`tensor`]: dense f64 tensors with reverse-mode autodiff and a
//!   finite-difference gradient checker;
//! - [`attention`]: canonical attention, the subject-aware masked variant,
//!   and subject-prompt token construction;
//! - [`encoders`]: frame/temporal/text encoders, the frozen sentiment scorer,
//!   and the binary checkpoint format;
//! - [`loss`]: the sentiment-reweighted contrastive objective;
//! - [`data`]: synthetic paired video/text generation, on-disk formats, and
//!   batch assembly;
//! - [`harness`]: training loop, linear-probe evaluation, metrics, attention
//!   diagnostics, and ablation orchestration.
//!
//! Heavy inner loops are data-parallel via rayon when the default `parallel`
//! feature is enabled; the sequential fallback produces bit-identical output.

pub mod error;
pub mod exec;
pub mod attention;
pub mod data;
pub mod encoders;
pub mod harness;
pub mod loss;
pub mod tensor;

pub use error::{Error, Result};
