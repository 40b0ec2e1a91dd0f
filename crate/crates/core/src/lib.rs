//! Contrastive self-supervised sentence representation learning on top of a
//! small from-scratch Transformer encoder.
//!
//! The crate covers the full workflow: masked-token pretraining of the
//! encoder, continued pretraining with momentum contrast over augmented
//! sentence pairs, and supervised finetuning with GLUE-style evaluation.

pub mod augment;
pub mod cssl;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod numeric;
pub mod pipeline;
pub mod rng;
pub mod synthetic;
pub mod text;

pub use error::{CertError, ErrorCategory, Result};
