//! Unsupervised log anomaly detection with a masked language model.
//!
//! The pipeline runs in stages:
//!
//! 1. [`normalize`] rewrites raw log lines without parsing them: timestamps go,
//!    compound tokens are split, paths/numbers/addresses become placeholder words.
//! 2. [`tokenize`] builds a whitespace vocabulary over the cleaned normal corpus.
//! 3. [`model`] is a small bidirectional transformer encoder with an MLM head,
//!    written out by hand together with its reverse pass.
//! 4. [`train`] fits the encoder on normal logs only, [`score`] turns masked-token
//!    probabilities into a per-log anomaly score, [`calibrate`] picks the threshold
//!    as a quantile of held-out normal scores, and [`detect`] classifies and evaluates.
//!
//! [`corpus`] handles deduplication, splitting and a synthetic log generator.

pub mod calibrate;
pub mod corpus;
pub mod detect;
mod error;
pub mod masking;
pub mod model;
pub mod normalize;
pub mod score;
pub mod seed;
pub mod tensor;
pub mod tokenize;
pub mod train;

pub use error::{Error, Result};

/// Hex-encoded SHA-256 of a byte string.
pub fn digest(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
