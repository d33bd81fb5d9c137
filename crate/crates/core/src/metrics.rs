//! Bias metrics over scored template sets.
//!
//! * [`cb_score`]: mean over (template, concept) cells of the population
//!   variance of log PL across attribute terms.
//! * [`distribution_difference`]: pairwise KL divergence between the
//!   full-vocabulary distributions at a masked concept slot, one per
//!   attribute fill.
//! * [`normalized_word_probability`]: probability of an attribute term in a
//!   biased context divided by its probability with the concept also masked.
//!
//! All quantities are in nats.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, Distribution, MlmBackend, TokenSequence};
use crate::lexicon::{ConceptWord, Lexicon};
use crate::scoring::{softmax, ScoreTensor};
use crate::template::{fill, BindError, ExpandError, FilledSentence, Segment, TemplateSet};

/// Additive smoothing applied to both inputs of [`kl_divergence`].
pub const KL_EPSILON: f64 = 1e-12;

/// Denominators below this flag a term as [`NormFlag::TinyDenominator`].
pub const TINY_DENOMINATOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("attribute set has {0} terms, need at least 2")]
    DegenerateAttributeSet(usize),
    #[error("no results to aggregate")]
    EmptyInput,
    #[error("distribution sizes differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("template {0} does not exist in the set")]
    TemplateIndex(usize),
    #[error("template needs exactly one concept slot occurrence, found {0}")]
    ConceptSlotCount(usize),
    #[error("unknown concept word `{0}`")]
    UnknownConcept(String),
    #[error("attribute `{attribute}`: slot `{slot}` covers no tokens")]
    SlotNotTokenized { attribute: String, slot: String },
    #[error("attribute `{attribute}`: concept mask spans {positions} tokens, limit is {max}")]
    ConceptSpanTooLong {
        attribute: String,
        positions: usize,
        max: usize,
    },
    #[error("every denominator is zero; shares are undefined")]
    DegenerateNormalization,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Expand(#[from] ExpandError),
}

impl From<BindError> for MetricsError {
    fn from(err: BindError) -> Self {
        MetricsError::Expand(err.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbResult {
    pub cb: f64,
    /// `|T| × |A|` population variances across attribute terms.
    pub per_template_per_concept_variance: Vec<Vec<f64>>,
}

impl CbResult {
    pub fn cell_count(&self) -> usize {
        self.per_template_per_concept_variance
            .iter()
            .map(Vec::len)
            .sum()
    }
}

// Deviations are taken from the first element so a constant row is exactly
// zero and large common offsets do not cost precision.
fn population_variance(xs: &[f64]) -> f64 {
    let pivot = xs[0];
    let n = xs.len() as f64;
    let mean = xs.iter().map(|x| x - pivot).sum::<f64>() / n;
    xs.iter()
        .map(|x| {
            let d = x - pivot - mean;
            d * d
        })
        .sum::<f64>()
        / n
}

pub fn cb_score(tensor: &ScoreTensor) -> Result<CbResult, MetricsError> {
    let [t, a, n] = tensor.dims();
    if n < 2 {
        return Err(MetricsError::DegenerateAttributeSet(n));
    }
    let matrix: Vec<Vec<f64>> = (0..t)
        .map(|ti| {
            (0..a)
                .map(|ai| population_variance(tensor.row(ti, ai)))
                .collect()
        })
        .collect();
    let cb = matrix.iter().flatten().sum::<f64>() / (t * a) as f64;
    Ok(CbResult {
        cb,
        per_template_per_concept_variance: matrix,
    })
}

/// Mean of per-set CB scores weighted by cell count `|T|·|A|`.
pub fn aggregate_cb<'a>(
    results: impl IntoIterator<Item = &'a CbResult>,
) -> Result<f64, MetricsError> {
    let (weighted, cells) = results
        .into_iter()
        .fold((0.0, 0usize), |(sum, cells), r| {
            let w = r.cell_count();
            (sum + r.cb * w as f64, cells + w)
        });
    if cells == 0 {
        return Err(MetricsError::EmptyInput);
    }
    Ok(weighted / cells as f64)
}

fn smoothed(d: &Distribution) -> Vec<f64> {
    let raw: Vec<f64> = d.probs().map(|p| p + KL_EPSILON).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

/// `KL(p ‖ q)` after ε-smoothing and renormalizing both inputs.
pub fn kl_divergence(p: &Distribution, q: &Distribution) -> Result<f64, MetricsError> {
    if p.len() != q.len() {
        return Err(MetricsError::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let (p, q) = (smoothed(p), smoothed(q));
    let kl: f64 = p
        .iter()
        .zip(&q)
        .map(|(pv, qv)| pv * (pv.ln() - qv.ln()))
        .sum();
    // Rounding can land a near-identical pair just below zero.
    Ok(kl.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlMatrix {
    pub template_index: usize,
    pub template: String,
    pub attributes: Vec<String>,
    /// `kl[i][j] = KL(p_i ‖ p_j)`.
    pub kl: Vec<Vec<f64>>,
    pub max_value: f64,
    /// Ordered pair attaining `max_value`; first in row-major order on ties.
    pub max_pair: Option<(String, String)>,
}

impl KlMatrix {
    pub fn from_distributions(
        template_index: usize,
        template: String,
        attributes: Vec<String>,
        distributions: &[Distribution],
    ) -> Result<Self, MetricsError> {
        let n = distributions.len();
        let mut kl = vec![vec![0.0; n]; n];
        let mut max_value = 0.0;
        let mut max_pair = None;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let v = kl_divergence(&distributions[i], &distributions[j])?;
                kl[i][j] = v;
                if max_pair.is_none() || v > max_value {
                    max_value = v;
                    max_pair = Some((attributes[i].clone(), attributes[j].clone()));
                }
            }
        }
        Ok(Self {
            template_index,
            template,
            attributes,
            kl,
            max_value,
            max_pair,
        })
    }
}

#[derive(Debug, Clone)]
pub struct DistDiffOptions {
    /// Most tokens the masked concept slot may span. The distribution at the
    /// first of them is compared.
    pub max_mask_positions: usize,
}

impl Default for DistDiffOptions {
    fn default() -> Self {
        Self {
            max_mask_positions: 1,
        }
    }
}

struct Probe<'a> {
    set: &'a TemplateSet,
    template: usize,
    concept_slot: &'a str,
}

impl<'a> Probe<'a> {
    fn new(set: &'a TemplateSet, template: usize) -> Result<Self, MetricsError> {
        let t = set
            .templates()
            .get(template)
            .ok_or(MetricsError::TemplateIndex(template))?;
        let concept_slot = set.concept_slot().ok_or(MetricsError::ConceptSlotCount(0))?;
        let occurrences = t
            .segments()
            .iter()
            .filter(|s| matches!(s, Segment::Slot { name, .. } if name == concept_slot))
            .count();
        if occurrences != 1 {
            return Err(MetricsError::ConceptSlotCount(occurrences));
        }
        Ok(Self {
            set,
            template,
            concept_slot,
        })
    }

    fn fill(
        &self,
        term: &crate::lexicon::AttributeTerm,
        word: &ConceptWord,
    ) -> Result<FilledSentence, MetricsError> {
        Ok(fill(
            &self.set.templates()[self.template],
            self.template,
            self.set.attribute_slot(),
            term,
            Some((self.concept_slot, word)),
        )?)
    }

    fn positions(
        sentence: &FilledSentence,
        tokens: &TokenSequence,
        slot: &str,
    ) -> Result<Vec<usize>, MetricsError> {
        let mut positions: Vec<usize> = sentence
            .spans_of(slot)
            .flat_map(|span| tokens.positions_in_span(span.start, span.end))
            .collect();
        positions.sort_unstable();
        positions.dedup();
        if positions.is_empty() {
            return Err(MetricsError::SlotNotTokenized {
                attribute: sentence.attribute_id.clone(),
                slot: slot.to_owned(),
            });
        }
        Ok(positions)
    }
}

/// Masks the concept slot of one template under every attribute fill and
/// compares the resulting vocabulary distributions pairwise.
///
/// The concept slot is filled with the first word of its concept set (in
/// the form agreeing with each attribute term) purely so the text tokenizes;
/// those tokens are then masked.
pub fn distribution_difference(
    backend: &dyn MlmBackend,
    set: &TemplateSet,
    template: usize,
    lexicon: &Lexicon,
    options: &DistDiffOptions,
) -> Result<KlMatrix, MetricsError> {
    let probe = Probe::new(set, template)?;
    let attributes = set.attribute_set(lexicon)?;
    let filler = set
        .concept_set(lexicon)?
        .and_then(|c| c.words.first())
        .ok_or(MetricsError::ConceptSlotCount(0))?;

    let mut distributions = Vec::with_capacity(attributes.terms.len());
    for term in &attributes.terms {
        let sentence = probe.fill(term, filler)?;
        let tokens = backend.tokenize(&sentence.text)?;
        let positions = Probe::positions(&sentence, &tokens, probe.concept_slot)?;
        if positions.len() > options.max_mask_positions {
            return Err(MetricsError::ConceptSpanTooLong {
                attribute: term.id.clone(),
                positions: positions.len(),
                max: options.max_mask_positions,
            });
        }
        let first = backend
            .mask_distributions(&tokens, &positions)?
            .into_iter()
            .next()
            .expect("one distribution per position");
        distributions.push(first);
    }
    KlMatrix::from_distributions(
        template,
        set.templates()[template].raw().to_owned(),
        attributes.terms.iter().map(|t| t.id.clone()).collect(),
        &distributions,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormFlag {
    MultiSubword,
    TinyDenominator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormProbEntry {
    pub attribute_id: String,
    pub numerator: f64,
    pub denominator: f64,
    /// `None` when the denominator is exactly zero.
    pub p_norm: Option<f64>,
    pub share: f64,
    pub flags: Vec<NormFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormProbResult {
    pub template_index: usize,
    pub template: String,
    pub concept_id: String,
    pub entries: Vec<NormProbEntry>,
}

// Geometric mean of the true-token probabilities at `targets`, with every
// position in `masked` masked at once.
fn term_probability(
    backend: &dyn MlmBackend,
    tokens: &TokenSequence,
    masked: &[usize],
    targets: &[usize],
) -> Result<(f64, f64), MetricsError> {
    let distributions = backend.mask_distributions(tokens, masked)?;
    let mut log_sum = 0.0;
    for &target in targets {
        let k = masked.iter().position(|&p| p == target).expect("target is masked");
        let id = tokens.ids()[target];
        let dist = &distributions[k];
        if id as usize >= dist.len() {
            return Err(MetricsError::DimensionMismatch {
                left: id as usize + 1,
                right: dist.len(),
            });
        }
        log_sum += dist.log_prob(id);
    }
    let log_mean = log_sum / targets.len() as f64;
    Ok((log_mean, log_mean.exp()))
}

/// Normalized probability of each attribute term for one concept word.
///
/// Shares renormalize the raw ratios over the whole attribute set. Terms
/// with a tiny denominator are flagged but kept, so the ratio blow-up stays
/// visible.
pub fn normalized_word_probability(
    backend: &dyn MlmBackend,
    set: &TemplateSet,
    template: usize,
    concept_id: &str,
    lexicon: &Lexicon,
) -> Result<NormProbResult, MetricsError> {
    let probe = Probe::new(set, template)?;
    let attributes = set.attribute_set(lexicon)?;
    let word = set
        .concept_set(lexicon)?
        .and_then(|c| c.words.iter().find(|w| w.id == concept_id))
        .ok_or_else(|| MetricsError::UnknownConcept(concept_id.to_owned()))?;

    let mut entries = Vec::with_capacity(attributes.terms.len());
    let mut log_ratios = Vec::with_capacity(attributes.terms.len());
    for term in &attributes.terms {
        let sentence = probe.fill(term, word)?;
        let tokens = backend.tokenize(&sentence.text)?;
        let attr = Probe::positions(&sentence, &tokens, set.attribute_slot())?;
        let concept = Probe::positions(&sentence, &tokens, probe.concept_slot)?;

        let (log_num, numerator) = term_probability(backend, &tokens, &attr, &attr)?;
        let mut both: Vec<usize> = attr.iter().chain(&concept).copied().collect();
        both.sort_unstable();
        both.dedup();
        let (log_den, denominator) = term_probability(backend, &tokens, &both, &attr)?;

        let mut flags = Vec::new();
        if attr.len() > 1 {
            flags.push(NormFlag::MultiSubword);
        }
        if denominator < TINY_DENOMINATOR {
            flags.push(NormFlag::TinyDenominator);
        }
        let p_norm = (denominator > 0.0).then(|| numerator / denominator);
        log_ratios.push(if denominator > 0.0 {
            log_num - log_den
        } else {
            f64::NEG_INFINITY
        });
        entries.push(NormProbEntry {
            attribute_id: term.id.clone(),
            numerator,
            denominator,
            p_norm,
            share: 0.0,
            flags,
        });
    }

    if log_ratios.iter().all(|v| *v == f64::NEG_INFINITY) {
        return Err(MetricsError::DegenerateNormalization);
    }
    for (entry, share) in entries.iter_mut().zip(softmax(&log_ratios)) {
        entry.share = share;
    }
    Ok(NormProbResult {
        template_index: template,
        template: set.templates()[template].raw().to_owned(),
        concept_id: concept_id.to_owned(),
        entries,
    })
}

/// Highest shares first; ties go to the lexicographically smaller id.
pub fn top_k(result: &NormProbResult, k: usize) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = result
        .entries
        .iter()
        .map(|e| (e.attribute_id.clone(), e.share))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}
