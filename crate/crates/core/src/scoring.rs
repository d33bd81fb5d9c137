//! Sentence pseudo-likelihood and the (template, concept, attribute) score
//! grid consumed by the metrics.
//!
//! A sentence's pseudo-log-likelihood is the sum, over its non-special
//! tokens, of the log-probability the model assigns to the true token when
//! only that position is masked. Everything stays in natural-log space until
//! shares are formed.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, MlmBackend};
use crate::lexicon::Lexicon;
use crate::template::{expand, ExpandError, TemplateSet, NO_CONCEPT};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("true token `{token}` at position {position} has probability 0")]
    ZeroProbability { position: usize, token: String },
    #[error("token id {id} at position {position} is outside a distribution of {len} entries")]
    VocabMismatch { position: usize, id: u32, len: usize },
    #[error(transparent)]
    Expand(#[from] ExpandError),
    #[error("template {template}, concept {concept}, attribute {attribute}: {source}")]
    Cell {
        template: usize,
        concept: usize,
        attribute: usize,
        #[source]
        source: Box<ScoringError>,
    },
    #[error("concept index {index} out of range for {len} concepts")]
    IndexOutOfRange { index: usize, len: usize },
}

impl ScoringError {
    /// (template, concept, attribute) coordinates, when the error is tied
    /// to one cell of the grid.
    pub fn coordinates(&self) -> Option<(usize, usize, usize)> {
        match self {
            ScoringError::Cell {
                template,
                concept,
                attribute,
                ..
            } => Some((*template, *concept, *attribute)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProb {
    pub position: usize,
    pub token: String,
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    /// Pseudo-log-likelihood in nats.
    pub log_pl: f64,
    pub per_token_logp: Vec<TokenLogProb>,
    pub token_count: usize,
}

/// Scores `text` by masking each non-special token in turn.
pub fn pseudo_log_likelihood(
    backend: &dyn MlmBackend,
    text: &str,
) -> Result<SentenceScore, ScoringError> {
    let tokens = backend.tokenize(text)?;
    let mut per_token_logp = Vec::with_capacity(tokens.len());
    for position in tokens.content_positions() {
        let dist = backend
            .mask_distributions(&tokens, &[position])?
            .pop()
            .ok_or_else(|| BackendError::Protocol {
                endpoint: "mask_distributions".into(),
                message: "no distribution returned".into(),
            })?;
        let id = tokens.ids()[position];
        if id as usize >= dist.len() {
            return Err(ScoringError::VocabMismatch {
                position,
                id,
                len: dist.len(),
            });
        }
        let log_prob = dist.log_prob(id);
        let token = tokens.texts()[position].clone();
        if log_prob == f64::NEG_INFINITY {
            return Err(ScoringError::ZeroProbability { position, token });
        }
        per_token_logp.push(TokenLogProb {
            position,
            token,
            log_prob,
        });
    }
    Ok(SentenceScore {
        log_pl: per_token_logp.iter().map(|t| t.log_prob).sum(),
        token_count: per_token_logp.len(),
        per_token_logp,
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid score tensor: {0}")]
pub struct TensorError(String);

/// Log pseudo-likelihoods over templates × concepts × attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorFile", into = "TensorFile")]
pub struct ScoreTensor {
    template_set: String,
    templates: Vec<String>,
    concepts: Vec<String>,
    attributes: Vec<String>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorFile {
    template_set: String,
    dims: [usize; 3],
    templates: Vec<String>,
    concepts: Vec<String>,
    attributes: Vec<String>,
    log_pl: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<TensorFile> for ScoreTensor {
    type Error = TensorError;

    fn try_from(file: TensorFile) -> Result<Self, Self::Error> {
        let [t, a, n] = file.dims;
        if file.log_pl.len() != t
            || file.log_pl.iter().any(|plane| {
                plane.len() != a || plane.iter().any(|row| row.len() != n)
            })
        {
            return Err(TensorError(format!(
                "log_pl shape does not match dims {:?}",
                file.dims
            )));
        }
        let values = file.log_pl.into_iter().flatten().flatten().collect();
        ScoreTensor::new(
            file.template_set,
            file.templates,
            file.concepts,
            file.attributes,
            values,
        )
    }
}

impl From<ScoreTensor> for TensorFile {
    fn from(tensor: ScoreTensor) -> Self {
        let [_, a, n] = tensor.dims();
        let log_pl = tensor
            .values
            .chunks(a * n)
            .map(|plane| plane.chunks(n).map(<[f64]>::to_vec).collect())
            .collect();
        TensorFile {
            dims: tensor.dims(),
            template_set: tensor.template_set,
            templates: tensor.templates,
            concepts: tensor.concepts,
            attributes: tensor.attributes,
            log_pl,
        }
    }
}

impl ScoreTensor {
    /// `values` is laid out row-major as `[template][concept][attribute]`.
    pub fn new(
        template_set: String,
        templates: Vec<String>,
        concepts: Vec<String>,
        attributes: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self, TensorError> {
        let expected = templates.len() * concepts.len() * attributes.len();
        if templates.is_empty() || concepts.is_empty() || attributes.is_empty() {
            return Err(TensorError("every dimension must be at least 1".into()));
        }
        if values.len() != expected {
            return Err(TensorError(format!(
                "{} values for dims {}×{}×{}",
                values.len(),
                templates.len(),
                concepts.len(),
                attributes.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(TensorError(format!("value {i} is not finite")));
        }
        Ok(Self {
            template_set,
            templates,
            concepts,
            attributes,
            values,
        })
    }

    pub fn template_set(&self) -> &str {
        &self.template_set
    }

    /// `[|T|, |A|, |N|]`
    pub fn dims(&self) -> [usize; 3] {
        [
            self.templates.len(),
            self.concepts.len(),
            self.attributes.len(),
        ]
    }

    pub fn templates(&self) -> &[String] {
        &self.templates
    }

    pub fn concepts(&self) -> &[String] {
        &self.concepts
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, template: usize, concept: usize, attribute: usize) -> f64 {
        self.row(template, concept)[attribute]
    }

    /// Log PLs of every attribute term for one (template, concept) cell.
    pub fn row(&self, template: usize, concept: usize) -> &[f64] {
        let [_, a, n] = self.dims();
        let start = (template * a + concept) * n;
        &self.values[start..start + n]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tensor serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Scores every expanded sentence of `set`. Sentences are scored on up to
/// `backend.max_concurrency()` threads; the tensor layout follows expansion
/// order regardless of completion order, and the first failing cell (in that
/// order) is reported.
pub fn score_template_set(
    backend: &dyn MlmBackend,
    set: &TemplateSet,
    lexicon: &Lexicon,
) -> Result<ScoreTensor, ScoringError> {
    let attributes = set.attribute_set(lexicon).map_err(ExpandError::from)?;
    let concepts = set.concept_set(lexicon).map_err(ExpandError::from)?;
    let attribute_ids: Vec<String> = attributes.terms.iter().map(|t| t.id.clone()).collect();
    let concept_ids: Vec<String> = match concepts {
        Some(c) => c.words.iter().map(|w| w.id.clone()).collect(),
        None => vec![NO_CONCEPT.to_owned()],
    };
    let n = attribute_ids.len();
    let a = concept_ids.len();
    let cell = |index: usize, source: ScoringError| ScoringError::Cell {
        template: index / (a * n),
        concept: (index / n) % a,
        attribute: index % n,
        source: Box::new(source),
    };

    let sentences = expand(set, lexicon).map_err(|err| match &err {
        ExpandError::NoMatchingForm {
            template_index,
            attribute_id,
            concept_id,
            ..
        } => {
            let attribute = attribute_ids.iter().position(|id| id == attribute_id);
            let concept = match concept_id {
                Some(id) => concept_ids.iter().position(|c| c == id),
                None => Some(0),
            };
            ScoringError::Cell {
                template: *template_index,
                concept: concept.unwrap_or(0),
                attribute: attribute.unwrap_or(0),
                source: Box::new(ScoringError::Expand(err)),
            }
        }
        ExpandError::Bind(_) => ScoringError::Expand(err),
    })?;

    let workers = backend.max_concurrency().clamp(1, sentences.len().max(1));
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let results: Mutex<Vec<(usize, Result<f64, ScoringError>)>> =
        Mutex::new(Vec::with_capacity(sentences.len()));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let index = next.fetch_add(1, Ordering::Relaxed);
                let Some(sentence) = sentences.get(index) else {
                    break;
                };
                let result = pseudo_log_likelihood(backend, &sentence.text).map(|s| s.log_pl);
                if result.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                results
                    .lock()
                    .unwrap_or_else(|e| e.into_inner())
                    .push((index, result));
            });
        }
    });

    let mut results = results.into_inner().unwrap_or_else(|e| e.into_inner());
    results.sort_by_key(|(index, _)| *index);
    let mut values = Vec::with_capacity(results.len());
    for (index, result) in results {
        values.push(result.map_err(|e| cell(index, e))?);
    }
    let templates = set.templates().iter().map(|t| t.raw().to_owned()).collect();
    Ok(ScoreTensor::new(
        set.id.clone(),
        templates,
        concept_ids,
        attribute_ids,
        values,
    )
    .expect("expansion yields exactly |T|·|A|·|N| finite scores"))
}

/// Softmax of one (template, concept) row of log PLs.
pub fn template_shares(tensor: &ScoreTensor, template: usize, concept: usize) -> Vec<f64> {
    softmax(tensor.row(template, concept))
}

pub(crate) fn softmax(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logs.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Per-template sentence probabilities normalized over the attribute terms,
/// then averaged across template variants.
pub fn normalized_shares(tensor: &ScoreTensor, concept: usize) -> Result<Vec<f64>, ScoringError> {
    let [t, a, n] = tensor.dims();
    if concept >= a {
        return Err(ScoringError::IndexOutOfRange {
            index: concept,
            len: a,
        });
    }
    let mut shares = vec![0.0; n];
    for template in 0..t {
        for (acc, s) in shares.iter_mut().zip(template_shares(tensor, template, concept)) {
            *acc += s;
        }
    }
    shares.iter_mut().for_each(|s| *s /= t as f64);
    Ok(shares)
}
