//! Deterministic table-driven backend.
//!
//! Text is split on whitespace and every word must be a vocabulary entry.
//! A row is keyed by the token-text context with [`MASK`] at every masked
//! position, plus the position whose distribution it gives. Contexts with no
//! row get a uniform distribution.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    check_mask_positions, BackendError, BackendInfo, Distribution, MlmBackend, TokenSequence,
};

/// Sentinel marking masked positions in a fixture row context.
pub const MASK: &str = "[MASK]";

// Slack for hand-written probabilities that are meant to sum to one.
const MASS_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureRow {
    pub context: Vec<String>,
    pub position: usize,
    /// Probabilities for listed vocabulary entries; the remaining mass is
    /// shared uniformly by unlisted entries.
    pub probs: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureFile {
    pub vocab: Vec<String>,
    #[serde(default)]
    pub rows: Vec<FixtureRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_sequence_length: Option<usize>,
}

impl FixtureFile {
    pub fn new<S: Into<String>>(vocab: impl IntoIterator<Item = S>) -> Self {
        Self {
            vocab: vocab.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
            model_name: None,
            language: None,
            max_sequence_length: None,
        }
    }

    pub fn with_row<S: AsRef<str>>(
        mut self,
        context: &[S],
        position: usize,
        probs: &[(&str, f64)],
    ) -> Self {
        self.rows.push(FixtureRow {
            context: context.iter().map(|s| s.as_ref().to_owned()).collect(),
            position,
            probs: probs.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect(),
        });
        self
    }

    pub fn from_reader<R: Read>(source: R) -> Result<Self, FixtureError> {
        let mut de = serde_json::Deserializer::from_reader(source);
        let file = serde_path_to_error::deserialize(&mut de).map_err(|err| {
            FixtureError::Document {
                path: err.path().to_string(),
                message: err.into_inner().to_string(),
            }
        })?;
        de.end().map_err(|err| FixtureError::Document {
            path: ".".into(),
            message: err.to_string(),
        })?;
        Ok(file)
    }
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("invalid fixture document at `{path}`: {message}")]
    Document { path: String, message: String },
    #[error("invalid fixture: {0}")]
    Invalid(String),
    #[error("fixture row {row}: {message}")]
    Row { row: usize, message: String },
}

#[derive(Debug, Clone)]
pub struct FixtureBackend {
    info: BackendInfo,
    vocab: Arc<[String]>,
    ids: HashMap<String, u32>,
    rows: HashMap<(Vec<String>, usize), Distribution>,
    concurrency: usize,
}

impl FixtureBackend {
    pub fn new(file: FixtureFile) -> Result<Self, FixtureError> {
        let vocab_size = file.vocab.len();
        let mut ids = HashMap::with_capacity(vocab_size);
        for (i, token) in file.vocab.iter().enumerate() {
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(FixtureError::Invalid(format!(
                    "vocab entry {i} ({token:?}) is empty or contains whitespace"
                )));
            }
            if ids.insert(token.clone(), i as u32).is_some() {
                return Err(FixtureError::Invalid(format!(
                    "vocab entry `{token}` appears twice"
                )));
            }
        }
        let info = BackendInfo {
            model_name: file.model_name.unwrap_or_else(|| "fixture".into()),
            language: file.language.unwrap_or_else(|| "und".into()),
            vocab_size,
            max_sequence_length: file.max_sequence_length.unwrap_or(512),
        };
        info.check().map_err(FixtureError::Invalid)?;

        let mut rows = HashMap::with_capacity(file.rows.len());
        for (index, row) in file.rows.into_iter().enumerate() {
            let bad = |message: String| FixtureError::Row {
                row: index,
                message,
            };
            if row.context.get(row.position).map(String::as_str) != Some(MASK) {
                return Err(bad(format!(
                    "context position {} must hold {MASK}",
                    row.position
                )));
            }
            let dist = row_distribution(&row.probs, &ids, vocab_size).map_err(bad)?;
            if rows.insert((row.context, row.position), dist).is_some() {
                return Err(bad("duplicate (context, position) key".into()));
            }
        }

        Ok(Self {
            info,
            vocab: file.vocab.into(),
            ids,
            rows,
            concurrency: 1,
        })
    }

    pub fn from_reader<R: Read>(source: R) -> Result<Self, FixtureError> {
        Self::new(FixtureFile::from_reader(source)?)
    }

    /// Sets how many requests callers may keep in flight.
    pub fn with_concurrency(mut self, limit: usize) -> Self {
        self.concurrency = limit.max(1);
        self
    }

    pub fn token_id(&self, text: &str) -> Option<u32> {
        self.ids.get(text).copied()
    }
}

fn row_distribution(
    probs: &BTreeMap<String, f64>,
    ids: &HashMap<String, u32>,
    vocab_size: usize,
) -> Result<Distribution, String> {
    let mut listed = vec![None; vocab_size];
    let mut mass = 0.0;
    for (token, &p) in probs {
        let id = *ids
            .get(token)
            .ok_or_else(|| format!("`{token}` is not in the vocabulary"))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(format!("probability {p} for `{token}` is outside [0, 1]"));
        }
        listed[id as usize] = Some(p);
        mass += p;
    }
    if mass > 1.0 + MASS_SLACK {
        return Err(format!("listed probabilities sum to {mass} > 1"));
    }
    let unlisted = vocab_size - probs.len();
    let residual = (1.0 - mass).max(0.0);
    if unlisted == 0 && residual > MASS_SLACK {
        return Err(format!(
            "every vocab entry is listed but the probabilities sum to {mass}"
        ));
    }
    let shared = if unlisted == 0 {
        0.0
    } else {
        residual / unlisted as f64
    };
    let log_probs = listed
        .into_iter()
        .map(|p| p.unwrap_or(shared).ln())
        .collect();
    Distribution::from_log_probs(log_probs).map_err(|e| e.to_string())
}

impl MlmBackend for FixtureBackend {
    fn info(&self) -> Result<BackendInfo, BackendError> {
        Ok(self.info.clone())
    }

    fn tokenize(&self, text: &str) -> Result<TokenSequence, BackendError> {
        let mut ids = Vec::new();
        let mut texts = Vec::new();
        let mut offsets = Vec::new();
        let mut start = None;
        let chars = text.chars().chain(std::iter::once(' '));
        let mut word = String::new();
        for (i, ch) in chars.enumerate() {
            if ch.is_whitespace() {
                if let Some(s) = start.take() {
                    let id = self
                        .token_id(&word)
                        .ok_or_else(|| BackendError::UnknownToken(word.clone()))?;
                    ids.push(id);
                    texts.push(std::mem::take(&mut word));
                    offsets.push((s, i));
                }
            } else {
                start.get_or_insert(i);
                word.push(ch);
            }
        }
        if ids.is_empty() {
            return Err(BackendError::EmptyText);
        }
        if ids.len() > self.info.max_sequence_length {
            return Err(BackendError::SequenceTooLong {
                len: ids.len(),
                max: self.info.max_sequence_length,
            });
        }
        let special_mask = vec![false; ids.len()];
        TokenSequence::new(ids, texts, offsets, special_mask)
    }

    fn mask_distributions(
        &self,
        tokens: &TokenSequence,
        positions: &[usize],
    ) -> Result<Vec<Distribution>, BackendError> {
        check_mask_positions(tokens, positions)?;
        let mut context = tokens.texts().to_vec();
        for &p in positions {
            context[p] = MASK.to_owned();
        }
        let mut key = (context, 0);
        Ok(positions
            .iter()
            .map(|&p| {
                key.1 = p;
                self.rows
                    .get(&key)
                    .cloned()
                    .unwrap_or_else(|| Distribution::uniform(self.info.vocab_size))
            })
            .collect())
    }

    fn vocab(&self) -> Result<Arc<[String]>, BackendError> {
        Ok(self.vocab.clone())
    }

    fn max_concurrency(&self) -> usize {
        self.concurrency
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn backend() -> FixtureBackend {
        let file = FixtureFile::new(["men", "women", "are", "rude", "kind", "."])
            .with_row(&["men", "are", MASK, "."], 2, &[("rude", 0.5), ("kind", 0.25)])
            .with_row(&[MASK, "are", MASK, "."], 0, &[("men", 0.1)]);
        FixtureBackend::new(file).unwrap()
    }

    #[test]
    fn whitespace_tokenizer() {
        let b = backend();
        let t = b.tokenize("men  are rude .").unwrap();
        assert_eq!(t.len(), 4);
        assert!(t.special_mask().iter().all(|s| !s));
        assert_eq!(t.offsets(), &[(0, 3), (5, 8), (9, 13), (14, 15)]);
        assert_eq!(t.ids()[0] as usize, b.vocab().unwrap().iter().position(|v| v == "men").unwrap());
        assert!(matches!(b.tokenize(""), Err(BackendError::EmptyText)));
        assert!(matches!(b.tokenize("   "), Err(BackendError::EmptyText)));
        assert!(matches!(b.tokenize("dogs are"), Err(BackendError::UnknownToken(w)) if w == "dogs"));
    }

    #[test]
    fn char_offsets_for_non_ascii() {
        let b = FixtureBackend::new(FixtureFile::new(["άνδρες", "είναι"])).unwrap();
        let t = b.tokenize("άνδρες είναι").unwrap();
        assert_eq!(t.offsets(), &[(0, 6), (7, 12)]);
    }

    #[test]
    fn table_lookup_and_residual() {
        let b = backend();
        let t = b.tokenize("men are rude .").unwrap();
        let d = &b.mask_distributions(&t, &[2]).unwrap()[0];
        let vocab = b.vocab().unwrap();
        let id = |w: &str| vocab.iter().position(|v| v == w).unwrap() as u32;
        assert_eq!(d.prob(id("rude")), 0.5);
        assert_eq!(d.prob(id("kind")), 0.25);
        // 0.25 left over for 4 unlisted entries
        assert!((d.prob(id("men")) - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn uniform_fallback() {
        let b = backend();
        let t = b.tokenize("women are kind .").unwrap();
        let d = &b.mask_distributions(&t, &[1]).unwrap()[0];
        assert!(d.probs().all(|p| (p - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn simultaneous_masks_use_joint_context() {
        let b = backend();
        let t = b.tokenize("men are rude .").unwrap();
        let both = b.mask_distributions(&t, &[0, 2]).unwrap();
        let men = b.token_id("men").unwrap();
        assert!((both[0].prob(men) - 0.1).abs() < 1e-15);
        // order of the request list does not change any row
        let swapped = b.mask_distributions(&t, &[2, 0]).unwrap();
        assert_eq!(both[0], swapped[1]);
        assert_eq!(both[1], swapped[0]);
    }

    #[test]
    fn position_errors() {
        let b = backend();
        let t = b.tokenize("men are rude .").unwrap();
        assert!(matches!(
            b.mask_distributions(&t, &[0, 0]),
            Err(BackendError::DuplicatePosition(0))
        ));
        assert!(matches!(
            b.mask_distributions(&t, &[9]),
            Err(BackendError::PositionOutOfRange { .. })
        ));
    }

    #[test]
    fn rejects_bad_rows() {
        let base = || FixtureFile::new(["a", "b"]);
        assert!(FixtureBackend::new(base().with_row(&["a", "b"], 0, &[])).is_err());
        assert!(FixtureBackend::new(base().with_row(&[MASK], 0, &[("a", 0.7), ("b", 0.7)])).is_err());
        assert!(FixtureBackend::new(base().with_row(&[MASK], 0, &[("a", 0.5), ("b", 0.2)])).is_err());
        assert!(FixtureBackend::new(base().with_row(&[MASK], 0, &[("zzz", 0.5)])).is_err());
        assert!(FixtureBackend::new(FixtureFile::new(["a"])).is_err());
        assert!(FixtureBackend::new(FixtureFile::new(["a", "a"])).is_err());
    }

    #[test]
    fn parses_documented_schema() {
        let doc = r#"{"vocab":["men","are","[MASK]",".","rude","kind"],"rows":[{"context":["men","are","[MASK]","."],"position":2,"probs":{"rude":0.5,"kind":0.25}}]}"#;
        let b = FixtureBackend::from_reader(doc.as_bytes()).unwrap();
        assert_eq!(b.vocab().unwrap().len(), 6);
        assert_eq!(b.info().unwrap().vocab_size, 6);
    }
}
