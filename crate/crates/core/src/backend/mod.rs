//! The model-inference boundary.
//!
//! An [`MlmBackend`] tokenizes text and returns full-vocabulary
//! distributions for masked positions. Two implementations ship with the
//! crate: [`FixtureBackend`], a table-driven stand-in used as a test oracle,
//! and [`HttpBackend`], a client for servers speaking the JSON wire protocol.

mod fixture;
mod http;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fixture::{FixtureBackend, FixtureError, FixtureFile, FixtureRow, MASK};
pub use http::{HttpBackend, HttpOptions};

/// Allowed deviation of `Σ exp(log_probs)` from 1.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("cannot tokenize empty text")]
    EmptyText,
    #[error("sequence of {len} tokens exceeds the maximum of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("mask position {position} out of range for {len} tokens")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("mask position {0} requested more than once")]
    DuplicatePosition(usize),
    #[error("position {0} is a special framing token and cannot be masked")]
    MaskedSpecialToken(usize),
    #[error("distribution {index} sums to {sum} (tolerance {NORMALIZATION_TOLERANCE})")]
    NonNormalizedDistribution { index: usize, sum: f64 },
    #[error("distribution {index} has a non-finite entry at {entry}")]
    InvalidDistribution { index: usize, entry: usize },
    #[error("`{0}` is not in the fixture vocabulary")]
    UnknownToken(String),
    #[error("invalid token sequence: {0}")]
    InvalidTokenSequence(String),
    #[error("HTTP {status} from {endpoint}: {body}")]
    Http {
        endpoint: String,
        status: u16,
        body: String,
    },
    #[error("protocol violation from {endpoint}: {message}")]
    Protocol { endpoint: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub model_name: String,
    pub language: String,
    pub vocab_size: usize,
    pub max_sequence_length: usize,
}

impl BackendInfo {
    pub(crate) fn check(&self) -> Result<(), String> {
        if self.vocab_size < 2 {
            return Err(format!("vocab_size {} < 2", self.vocab_size));
        }
        if self.max_sequence_length < 3 {
            return Err(format!(
                "max_sequence_length {} < 3",
                self.max_sequence_length
            ));
        }
        Ok(())
    }
}

/// Tokenized text. All four lists have the same length; offsets are
/// character offsets into the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    ids: Vec<u32>,
    texts: Vec<String>,
    offsets: Vec<(usize, usize)>,
    special_mask: Vec<bool>,
}

impl TokenSequence {
    pub fn new(
        ids: Vec<u32>,
        texts: Vec<String>,
        offsets: Vec<(usize, usize)>,
        special_mask: Vec<bool>,
    ) -> Result<Self, BackendError> {
        let n = ids.len();
        if texts.len() != n || offsets.len() != n || special_mask.len() != n {
            return Err(BackendError::InvalidTokenSequence(format!(
                "list lengths differ: {} ids, {} texts, {} offsets, {} special flags",
                n,
                texts.len(),
                offsets.len(),
                special_mask.len()
            )));
        }
        let mut last_end = 0;
        for (i, &(start, end)) in offsets.iter().enumerate() {
            if special_mask[i] {
                continue;
            }
            if start > end || start < last_end {
                return Err(BackendError::InvalidTokenSequence(format!(
                    "token {i} offsets ({start}, {end}) overlap or go backwards"
                )));
            }
            last_end = end;
        }
        Ok(Self {
            ids,
            texts,
            offsets,
            special_mask,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn offsets(&self) -> &[(usize, usize)] {
        &self.offsets
    }

    pub fn special_mask(&self) -> &[bool] {
        &self.special_mask
    }

    /// Positions that belong to the scored text (framing tokens excluded).
    pub fn content_positions(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| !self.special_mask[i])
    }

    /// Non-special positions whose character range intersects
    /// `start..end`.
    pub fn positions_in_span(&self, start: usize, end: usize) -> Vec<usize> {
        self.content_positions()
            .filter(|&i| {
                let (s, e) = self.offsets[i];
                s < end && start < e
            })
            .collect()
    }
}

/// Full-vocabulary distribution over a masked position, in natural-log
/// space.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    log_probs: Vec<f64>,
}

impl Distribution {
    /// Validates entries (finite or −∞) and normalization.
    pub fn from_log_probs(log_probs: Vec<f64>) -> Result<Self, BackendError> {
        Self::checked(log_probs, 0)
    }

    pub(crate) fn checked(log_probs: Vec<f64>, index: usize) -> Result<Self, BackendError> {
        if let Some(entry) = log_probs
            .iter()
            .position(|v| v.is_nan() || *v == f64::INFINITY)
        {
            return Err(BackendError::InvalidDistribution { index, entry });
        }
        let sum: f64 = log_probs.iter().map(|v| v.exp()).sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(BackendError::NonNormalizedDistribution { index, sum });
        }
        Ok(Self { log_probs })
    }

    pub fn from_probs(probs: &[f64]) -> Result<Self, BackendError> {
        Self::from_log_probs(probs.iter().map(|p| p.ln()).collect())
    }

    pub fn uniform(size: usize) -> Self {
        let lp = -(size as f64).ln();
        Self {
            log_probs: vec![lp; size],
        }
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn log_prob(&self, id: u32) -> f64 {
        self.log_probs[id as usize]
    }

    pub fn prob(&self, id: u32) -> f64 {
        self.log_prob(id).exp()
    }

    pub fn probs(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_probs.iter().map(|v| v.exp())
    }
}

/// A masked language model as seen by the scoring and metric code.
pub trait MlmBackend: Send + Sync {
    fn info(&self) -> Result<BackendInfo, BackendError>;

    fn tokenize(&self, text: &str) -> Result<TokenSequence, BackendError>;

    /// Masks every listed position at once and returns one distribution per
    /// position, in input order.
    fn mask_distributions(
        &self,
        tokens: &TokenSequence,
        positions: &[usize],
    ) -> Result<Vec<Distribution>, BackendError>;

    fn vocab(&self) -> Result<Arc<[String]>, BackendError>;

    /// Upper bound on requests callers should keep in flight.
    fn max_concurrency(&self) -> usize {
        1
    }
}

/// Rejects out-of-range, repeated, or special positions.
pub fn check_mask_positions(tokens: &TokenSequence, positions: &[usize]) -> Result<(), BackendError> {
    let mut seen = BTreeSet::new();
    for &position in positions {
        if position >= tokens.len() {
            return Err(BackendError::PositionOutOfRange {
                position,
                len: tokens.len(),
            });
        }
        if !seen.insert(position) {
            return Err(BackendError::DuplicatePosition(position));
        }
        if tokens.special_mask[position] {
            return Err(BackendError::MaskedSpecialToken(position));
        }
    }
    Ok(())
}
