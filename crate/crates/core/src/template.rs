//! Declension-aware sentence templates.
//!
//! Concrete syntax:
//!
//! * `{name}` is a slot,
//! * `{name@other}` is a slot whose surface agrees with slot `other`,
//! * `{{` and `}}` are literal braces.
//!
//! A [`TemplateSet`] binds one slot to an attribute set and at most one slot
//! to a concept set. [`expand`] fills every (template, concept, attribute)
//! combination, inflecting agreeing concept slots for the attribute term's
//! gender and number.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Read};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{
    select_form, AttributeSet, AttributeTerm, Category, ConceptSet, FeatureBundle, Lexicon,
    NoMatchingForm,
};

/// Concept label used when a template has no concept slot.
pub const NO_CONCEPT: &str = "∅";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    /// Literal text with braces unescaped.
    Literal(String),
    Slot {
        name: String,
        agree_with: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    raw: String,
    segments: Vec<Segment>,
}

impl Template {
    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn slot_names(&self) -> BTreeSet<&str> {
        self.slots().map(|(name, _)| name).collect()
    }

    fn slots(&self) -> impl Iterator<Item = (&str, Option<&str>)> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Slot { name, agree_with } => Some((name.as_str(), agree_with.as_deref())),
            Segment::Literal(_) => None,
        })
    }

    /// Re-renders the template source from its segments.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(self.raw.len());
        for segment in &self.segments {
            match segment {
                Segment::Literal(text) => {
                    for ch in text.chars() {
                        match ch {
                            '{' => out.push_str("{{"),
                            '}' => out.push_str("}}"),
                            _ => out.push(ch),
                        }
                    }
                }
                Segment::Slot { name, agree_with } => {
                    out.push('{');
                    out.push_str(name);
                    if let Some(target) = agree_with {
                        out.push('@');
                        out.push_str(target);
                    }
                    out.push('}');
                }
            }
        }
        out
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnbalancedBrace,
    EmptySlotName,
    NestedBrace,
    BadAgreementSyntax,
    InvalidSlotName,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseErrorKind::UnbalancedBrace => "unbalanced brace",
            ParseErrorKind::EmptySlotName => "empty slot name",
            ParseErrorKind::NestedBrace => "nested brace",
            ParseErrorKind::BadAgreementSyntax => "bad agreement syntax",
            ParseErrorKind::InvalidSlotName => "invalid slot name",
        })
    }
}

/// Template syntax error. `offset` is a byte offset into the source.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte {offset}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

/// Parses template source. Slot-body errors are reported at the first byte
/// after the opening brace; stray braces at their own offset.
pub fn parse_template(text: &str) -> Result<Template, ParseError> {
    let err = |kind, offset| ParseError { kind, offset };
    let bytes = text.as_bytes();
    let mut segments = Vec::new();
    let mut literal = String::new();
    let mut i = 0;

    while i < text.len() {
        let ch = text[i..].chars().next().expect("in bounds");
        match ch {
            '{' if bytes.get(i + 1) == Some(&b'{') => {
                literal.push('{');
                i += 2;
            }
            '}' if bytes.get(i + 1) == Some(&b'}') => {
                literal.push('}');
                i += 2;
            }
            '}' => return Err(err(ParseErrorKind::UnbalancedBrace, i)),
            '{' => {
                let body_start = i + 1;
                let rest = &text[body_start..];
                let close = match rest.find(['{', '}']) {
                    Some(j) if bytes[body_start + j] == b'{' => {
                        return Err(err(ParseErrorKind::NestedBrace, body_start + j))
                    }
                    Some(j) => j,
                    None => {
                        let kind = match rest.split_once('@') {
                            Some((_, target)) if target.is_empty() => {
                                ParseErrorKind::BadAgreementSyntax
                            }
                            _ => ParseErrorKind::UnbalancedBrace,
                        };
                        let offset = if kind == ParseErrorKind::UnbalancedBrace {
                            i
                        } else {
                            body_start
                        };
                        return Err(err(kind, offset));
                    }
                };
                let body = &rest[..close];
                let (name, agree_with) = match body.split_once('@') {
                    None => (body, None),
                    Some((name, target)) => {
                        if target.is_empty()
                            || target.contains('@')
                            || !target.chars().all(is_name_char)
                        {
                            return Err(err(ParseErrorKind::BadAgreementSyntax, body_start));
                        }
                        (name, Some(target.to_owned()))
                    }
                };
                if name.is_empty() {
                    return Err(err(ParseErrorKind::EmptySlotName, body_start));
                }
                if !name.chars().all(is_name_char) {
                    return Err(err(ParseErrorKind::InvalidSlotName, body_start));
                }
                if !literal.is_empty() {
                    segments.push(Segment::Literal(std::mem::take(&mut literal)));
                }
                segments.push(Segment::Slot {
                    name: name.to_owned(),
                    agree_with,
                });
                i = body_start + close + 1;
            }
            _ => {
                literal.push(ch);
                i += ch.len_utf8();
            }
        }
    }
    if !literal.is_empty() {
        segments.push(Segment::Literal(literal));
    }
    Ok(Template {
        raw: text.to_owned(),
        segments,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    AttributeSet(String),
    ConceptSet(String),
}

/// Similarly-worded template variants sharing one set of slot bindings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub id: String,
    pub category: Category,
    templates: Vec<Template>,
    bindings: BTreeMap<String, Binding>,
    attribute_slot: String,
    attribute_set: String,
    concept: Option<(String, String)>,
}

impl TemplateSet {
    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn bindings(&self) -> &BTreeMap<String, Binding> {
        &self.bindings
    }

    pub fn attribute_slot(&self) -> &str {
        &self.attribute_slot
    }

    pub fn attribute_set_name(&self) -> &str {
        &self.attribute_set
    }

    /// Concept slot name, if the templates use one.
    pub fn concept_slot(&self) -> Option<&str> {
        self.concept.as_ref().map(|(slot, _)| slot.as_str())
    }

    pub fn concept_set_name(&self) -> Option<&str> {
        self.concept.as_ref().map(|(_, set)| set.as_str())
    }

    pub fn attribute_set<'l>(&self, lexicon: &'l Lexicon) -> Result<&'l AttributeSet, BindError> {
        lexicon
            .attribute_set(&self.attribute_set)
            .ok_or_else(|| BindError::UnknownSet {
                slot: self.attribute_slot.clone(),
                set: self.attribute_set.clone(),
            })
    }

    pub fn concept_set<'l>(
        &self,
        lexicon: &'l Lexicon,
    ) -> Result<Option<&'l ConceptSet>, BindError> {
        match &self.concept {
            None => Ok(None),
            Some((slot, set)) => lexicon
                .concept_set(set)
                .map(Some)
                .ok_or_else(|| BindError::UnknownSet {
                    slot: slot.clone(),
                    set: set.clone(),
                }),
        }
    }

    pub fn to_file(&self) -> TemplateSetFile {
        TemplateSetFile {
            id: self.id.clone(),
            category: self.category,
            bindings: self.bindings.clone(),
            templates: self.templates.iter().map(|t| t.raw.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BindError {
    #[error("template set has no templates")]
    NoTemplates,
    #[error("template {template}: slot `{slot}` has no binding")]
    UnknownSlot { template: usize, slot: String },
    #[error("slot `{slot}` is bound to unknown set `{set}`")]
    UnknownSet { slot: String, set: String },
    #[error("{0}")]
    ZeroOrMultipleAttributeSlots(String),
    #[error("more than one slot is bound to a concept set: {0:?}")]
    MultipleConceptSlots(Vec<String>),
    #[error("template {template} uses slots {found:?}, but template 0 uses {expected:?}")]
    InconsistentSlotNamesAcrossVariants {
        template: usize,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("template {template}: slot `{slot}` agrees with `{target}`, which is not the attribute slot")]
    BadAgreementTarget {
        template: usize,
        slot: String,
        target: String,
    },
}

/// Checks slot bindings against the templates and the lexicon.
pub fn bind_template_set(
    id: impl Into<String>,
    category: Category,
    templates: Vec<Template>,
    bindings: BTreeMap<String, Binding>,
    lexicon: &Lexicon,
) -> Result<TemplateSet, BindError> {
    if templates.is_empty() {
        return Err(BindError::NoTemplates);
    }

    let attribute_bindings: Vec<_> = bindings
        .iter()
        .filter_map(|(slot, b)| match b {
            Binding::AttributeSet(set) => Some((slot, set)),
            Binding::ConceptSet(_) => None,
        })
        .collect();
    let [(attribute_slot, attribute_set)] = attribute_bindings[..] else {
        return Err(BindError::ZeroOrMultipleAttributeSlots(format!(
            "exactly one slot must bind an attribute set, found {}",
            attribute_bindings.len()
        )));
    };

    for (slot, binding) in &bindings {
        let exists = match binding {
            Binding::AttributeSet(set) => lexicon.attribute_set(set).is_some(),
            Binding::ConceptSet(set) => lexicon.concept_set(set).is_some(),
        };
        if !exists {
            let (Binding::AttributeSet(set) | Binding::ConceptSet(set)) = binding;
            return Err(BindError::UnknownSet {
                slot: slot.clone(),
                set: set.clone(),
            });
        }
    }

    let expected: BTreeSet<&str> = templates[0].slot_names();
    for (index, template) in templates.iter().enumerate() {
        for (name, agree_with) in template.slots() {
            if !bindings.contains_key(name) {
                return Err(BindError::UnknownSlot {
                    template: index,
                    slot: name.to_owned(),
                });
            }
            if let Some(target) = agree_with {
                if target != attribute_slot || name == attribute_slot {
                    return Err(BindError::BadAgreementTarget {
                        template: index,
                        slot: name.to_owned(),
                        target: target.to_owned(),
                    });
                }
            }
        }
        let found = template.slot_names();
        if found != expected {
            return Err(BindError::InconsistentSlotNamesAcrossVariants {
                template: index,
                expected: expected.iter().map(|s| s.to_string()).collect(),
                found: found.iter().map(|s| s.to_string()).collect(),
            });
        }
        let occurrences = template
            .slots()
            .filter(|(name, _)| *name == attribute_slot)
            .count();
        if occurrences != 1 {
            return Err(BindError::ZeroOrMultipleAttributeSlots(format!(
                "template {index}: attribute slot `{attribute_slot}` occurs {occurrences} times, expected exactly once"
            )));
        }
    }

    let concept_slots: Vec<(&String, &String)> = bindings
        .iter()
        .filter_map(|(slot, b)| match b {
            Binding::ConceptSet(set) if expected.contains(slot.as_str()) => Some((slot, set)),
            _ => None,
        })
        .collect();
    let concept = match concept_slots[..] {
        [] => None,
        [(slot, set)] => Some((slot.clone(), set.clone())),
        _ => {
            return Err(BindError::MultipleConceptSlots(
                concept_slots.iter().map(|(s, _)| s.to_string()).collect(),
            ))
        }
    };

    Ok(TemplateSet {
        id: id.into(),
        category,
        attribute_slot: attribute_slot.clone(),
        attribute_set: attribute_set.clone(),
        concept,
        templates,
        bindings,
    })
}

/// On-disk form of a template set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSetFile {
    pub id: String,
    pub category: Category,
    pub bindings: BTreeMap<String, Binding>,
    pub templates: Vec<String>,
}

#[derive(Debug, Error)]
pub enum TemplateSetError {
    #[error("invalid template set document at `{path}`: {message}")]
    Document { path: String, message: String },
    #[error("template {index}: {source}")]
    Parse {
        index: usize,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Bind(#[from] BindError),
    #[error("failed to read template set: {0}")]
    Io(#[from] std::io::Error),
}

impl TemplateSetFile {
    pub fn from_reader<R: Read>(source: R) -> Result<Self, TemplateSetError> {
        let mut de = serde_json::Deserializer::from_reader(source);
        let file: Self = serde_path_to_error::deserialize(&mut de).map_err(|err| {
            TemplateSetError::Document {
                path: err.path().to_string(),
                message: err.into_inner().to_string(),
            }
        })?;
        de.end().map_err(|err| TemplateSetError::Document {
            path: ".".into(),
            message: err.to_string(),
        })?;
        Ok(file)
    }

    pub fn bind(self, lexicon: &Lexicon) -> Result<TemplateSet, TemplateSetError> {
        let templates = self
            .templates
            .iter()
            .enumerate()
            .map(|(index, raw)| {
                parse_template(raw).map_err(|source| TemplateSetError::Parse { index, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(bind_template_set(
            self.id,
            self.category,
            templates,
            self.bindings,
            lexicon,
        )?)
    }
}

/// Reads a template set document and binds it against `lexicon`.
pub fn load_template_set<R: Read>(
    source: R,
    lexicon: &Lexicon,
) -> Result<TemplateSet, TemplateSetError> {
    TemplateSetFile::from_reader(source)?.bind(lexicon)
}

/// Character span of a filled slot within [`FilledSentence::text`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpan {
    pub slot: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilledSentence {
    pub text: String,
    pub template_index: usize,
    pub attribute_id: String,
    pub concept_id: Option<String>,
    /// Ascending, non-overlapping, in characters.
    pub slot_spans: Vec<SlotSpan>,
}

impl FilledSentence {
    pub fn spans_of<'a>(&'a self, slot: &'a str) -> impl Iterator<Item = &'a SlotSpan> + 'a {
        self.slot_spans.iter().filter(move |s| s.slot == slot)
    }

    /// Text covered by `span`.
    pub fn span_text(&self, span: &SlotSpan) -> String {
        self.text
            .chars()
            .skip(span.start)
            .take(span.end - span.start)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExpandError {
    #[error(transparent)]
    Bind(#[from] BindError),
    #[error("template {template_index}, attribute `{attribute_id}`, concept `{}`: {source}", .concept_id.as_deref().unwrap_or(NO_CONCEPT))]
    NoMatchingForm {
        template_index: usize,
        attribute_id: String,
        concept_id: Option<String>,
        #[source]
        source: NoMatchingForm,
    },
}

/// Fills one template with a single attribute term and, if the template has
/// a concept slot, one concept word.
pub(crate) fn fill(
    template: &Template,
    template_index: usize,
    attribute_slot: &str,
    term: &AttributeTerm,
    concept: Option<(&str, &crate::lexicon::ConceptWord)>,
) -> Result<FilledSentence, ExpandError> {
    let no_form = |source| ExpandError::NoMatchingForm {
        template_index,
        attribute_id: term.id.clone(),
        concept_id: concept.map(|(_, w)| w.id.clone()),
        source,
    };
    let mut text = String::new();
    let mut chars = 0usize;
    let mut slot_spans = Vec::new();
    for segment in template.segments() {
        let (name, piece) = match segment {
            Segment::Literal(lit) => {
                text.push_str(lit);
                chars += lit.chars().count();
                continue;
            }
            Segment::Slot { name, .. } if name == attribute_slot => {
                (name, term.surface().map_err(no_form)?)
            }
            Segment::Slot { name, agree_with } => {
                let (_, word) = concept
                    .filter(|(slot, _)| slot == name)
                    .expect("bound slots are attribute or concept slots");
                let features = if agree_with.is_some() {
                    term.features
                } else {
                    FeatureBundle::NONE
                };
                (name, select_form(&word.forms, features).map_err(no_form)?)
            }
        };
        let len = piece.chars().count();
        slot_spans.push(SlotSpan {
            slot: name.clone(),
            start: chars,
            end: chars + len,
        });
        text.push_str(piece);
        chars += len;
    }
    Ok(FilledSentence {
        text,
        template_index,
        attribute_id: term.id.clone(),
        concept_id: concept.map(|(_, w)| w.id.clone()),
        slot_spans,
    })
}

/// Expands every (template, concept word, attribute term) combination, in
/// that nesting order.
pub fn expand(set: &TemplateSet, lexicon: &Lexicon) -> Result<Vec<FilledSentence>, ExpandError> {
    let attributes = set.attribute_set(lexicon)?;
    let concepts = set.concept_set(lexicon)?;
    let concept_slot = set.concept_slot();
    let concept_count = concepts.map_or(1, |c| c.words.len());

    let mut out = Vec::with_capacity(set.templates.len() * concept_count * attributes.terms.len());
    for (t, template) in set.templates.iter().enumerate() {
        for a in 0..concept_count {
            let concept = concepts.zip(concept_slot).map(|(c, slot)| (slot, &c.words[a]));
            for term in &attributes.terms {
                out.push(fill(template, t, &set.attribute_slot, term, concept)?);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ImportOptions {
    /// Placeholder an annotator put in place of the attribute term.
    pub slot_marker: String,
    /// Slot name the marker becomes.
    pub attribute_slot: String,
    /// Fail on lines without a marker instead of skipping them.
    pub strict: bool,
}

impl Default for ImportOptions {
    fn default() -> Self {
        Self {
            slot_marker: "[SLOT]".into(),
            attribute_slot: "a".into(),
            strict: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportWarning {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct CorpusImport {
    pub templates: Vec<Template>,
    pub skipped: Vec<ImportWarning>,
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("line {line}: no `{marker}` marker")]
    LineWithoutMarker { line: usize, marker: String },
    #[error("line {line}: {count} markers, a template takes exactly one attribute slot")]
    TooManyAttributeSlots { line: usize, count: usize },
    #[error("slot marker must not be empty")]
    EmptyMarker,
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: ParseError,
    },
    #[error("failed to read corpus: {0}")]
    Io(#[from] std::io::Error),
}

fn escape_literal(text: &str) -> String {
    text.replace('{', "{{").replace('}', "}}")
}

/// Turns annotated corpus lines into single-slot templates. Blank lines are
/// ignored.
pub fn import_corpus_templates<R: BufRead>(
    lines: R,
    options: &ImportOptions,
) -> Result<CorpusImport, ImportError> {
    let marker = options.slot_marker.as_str();
    if marker.is_empty() {
        return Err(ImportError::EmptyMarker);
    }
    let mut out = CorpusImport::default();
    for (index, line) in lines.lines().enumerate() {
        let line_no = index + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let count = line.matches(marker).count();
        match count {
            0 if options.strict => {
                return Err(ImportError::LineWithoutMarker {
                    line: line_no,
                    marker: marker.to_owned(),
                })
            }
            0 => out.skipped.push(ImportWarning {
                line: line_no,
                message: format!("no `{marker}` marker, line skipped"),
            }),
            1 => {
                let (before, after) = line.split_once(marker).expect("one marker");
                let raw = format!(
                    "{}{{{}}}{}",
                    escape_literal(before),
                    options.attribute_slot,
                    escape_literal(after)
                );
                let template = parse_template(&raw).map_err(|source| ImportError::Parse {
                    line: line_no,
                    source,
                })?;
                out.templates.push(template);
            }
            _ => {
                return Err(ImportError::TooManyAttributeSlots {
                    line: line_no,
                    count,
                })
            }
        }
    }
    Ok(out)
}
