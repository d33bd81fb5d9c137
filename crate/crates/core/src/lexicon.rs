//! Bias attribute terms, concept words, and the inflection tables used to
//! keep filled templates grammatical.
//!
//! A lexicon is authored by hand as JSON. Every inflected surface is listed
//! explicitly under a form key (`<gender>.<number>` or `default`), and
//! [`select_form`] picks the surface agreeing with an attribute term's
//! [`FeatureBundle`].

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::marker::PhantomData;
use std::str::FromStr;

use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Masc,
    Fem,
    Neut,
    None,
}

impl Gender {
    pub const ALL: [Gender; 4] = [Gender::Masc, Gender::Fem, Gender::Neut, Gender::None];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Masc => "masc",
            Gender::Fem => "fem",
            Gender::Neut => "neut",
            Gender::None => "none",
        }
    }
}

impl FromStr for Gender {
    type Err = FormKeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Gender::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| FormKeyError(format!("unknown gender `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Number {
    Sg,
    Pl,
    None,
}

impl Number {
    pub const ALL: [Number; 3] = [Number::Sg, Number::Pl, Number::None];

    pub fn as_str(self) -> &'static str {
        match self {
            Number::Sg => "sg",
            Number::Pl => "pl",
            Number::None => "none",
        }
    }
}

impl FromStr for Number {
    type Err = FormKeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Number::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| FormKeyError(format!("unknown number `{s}`")))
    }
}

/// Grammatical features of an attribute term. Languages without a feature
/// use `none` for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureBundle {
    pub gender: Gender,
    pub number: Number,
}

impl FeatureBundle {
    pub const NONE: FeatureBundle = FeatureBundle {
        gender: Gender::None,
        number: Number::None,
    };

    pub fn new(gender: Gender, number: Number) -> Self {
        Self { gender, number }
    }
}

impl Default for FeatureBundle {
    fn default() -> Self {
        Self::NONE
    }
}

impl fmt::Display for FeatureBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.gender.as_str(), self.number.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct FormKeyError(String);

/// Key of an inflection table entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FormKey {
    Default,
    Features(Gender, Number),
}

impl FromStr for FormKey {
    type Err = FormKeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "default" {
            return Ok(FormKey::Default);
        }
        let (gender, number) = s.split_once('.').ok_or_else(|| {
            FormKeyError(format!(
                "bad form key `{s}`: expected `<gender>.<number>` or `default`"
            ))
        })?;
        Ok(FormKey::Features(gender.parse()?, number.parse()?))
    }
}

impl TryFrom<String> for FormKey {
    type Error = FormKeyError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<FormKey> for String {
    fn from(key: FormKey) -> Self {
        key.to_string()
    }
}

impl fmt::Display for FormKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormKey::Default => f.write_str("default"),
            FormKey::Features(g, n) => write!(f, "{}.{}", g.as_str(), n.as_str()),
        }
    }
}

impl From<FeatureBundle> for FormKey {
    fn from(features: FeatureBundle) -> Self {
        FormKey::Features(features.gender, features.number)
    }
}

/// Inflection table: form key to surface string.
pub type Forms = BTreeMap<FormKey, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Gender,
    Religion,
    Ethnicity,
    Other,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Gender => "gender",
            Category::Religion => "religion",
            Category::Ethnicity => "ethnicity",
            Category::Other => "other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeTerm {
    pub id: String,
    pub display: String,
    pub features: FeatureBundle,
    pub forms: Forms,
}

impl AttributeTerm {
    /// Surface used when this term fills an attribute slot.
    pub fn surface(&self) -> Result<&str, NoMatchingForm> {
        select_form(&self.forms, self.features)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSet {
    pub category: Category,
    pub terms: Vec<AttributeTerm>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptWord {
    pub id: String,
    pub forms: Forms,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptSet {
    pub words: Vec<ConceptWord>,
}

/// Language-tagged collection of attribute sets and concept sets, keyed by
/// set name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lexicon {
    pub language: String,
    #[serde(deserialize_with = "unique_keys")]
    pub attribute_sets: BTreeMap<String, AttributeSet>,
    #[serde(deserialize_with = "unique_keys")]
    pub concept_sets: BTreeMap<String, ConceptSet>,
}

impl Lexicon {
    pub fn attribute_set(&self, name: &str) -> Option<&AttributeSet> {
        self.attribute_sets.get(name)
    }

    pub fn concept_set(&self, name: &str) -> Option<&ConceptSet> {
        self.concept_sets.get(name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lexicon serialization is infallible")
    }
}

// serde_json keeps the last value for a repeated object key; set names must
// be unique, so reject repeats instead.
fn unique_keys<'de, D, V>(deserializer: D) -> Result<BTreeMap<String, V>, D::Error>
where
    D: Deserializer<'de>,
    V: Deserialize<'de>,
{
    struct UniqueKeys<V>(PhantomData<V>);

    impl<'de, V: Deserialize<'de>> Visitor<'de> for UniqueKeys<V> {
        type Value = BTreeMap<String, V>;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a map with unique set names")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
            let mut out = BTreeMap::new();
            while let Some(key) = map.next_key::<String>()? {
                if out.contains_key(&key) {
                    return Err(de::Error::custom(format!("duplicate set name `{key}`")));
                }
                let value = map.next_value()?;
                out.insert(key, value);
            }
            Ok(out)
        }
    }

    deserializer.deserialize_map(UniqueKeys(PhantomData))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no form matches {features} (tried {features}, {}.none, none.{}, default)", .features.gender.as_str(), .features.number.as_str())]
pub struct NoMatchingForm {
    pub features: FeatureBundle,
}

/// Picks the surface agreeing with `features`.
///
/// Keys are tried in the order `gender.number`, `gender.none`,
/// `none.number`, `default`; the first hit wins.
pub fn select_form(forms: &Forms, features: FeatureBundle) -> Result<&str, NoMatchingForm> {
    let FeatureBundle { gender, number } = features;
    [
        FormKey::Features(gender, number),
        FormKey::Features(gender, Number::None),
        FormKey::Features(Gender::None, number),
        FormKey::Default,
    ]
    .iter()
    .find_map(|key| forms.get(key))
    .map(String::as_str)
    .ok_or(NoMatchingForm { features })
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("malformed lexicon document at line {line}, column {column}: {message}")]
    MalformedDocument {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation at `{path}`: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("duplicate id `{id}` at `{path}`")]
    DuplicateId { path: String, id: String },
    #[error("empty set at `{path}`: {message}")]
    EmptySet { path: String, message: String },
    #[error("failed to read lexicon: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    Schema,
    DuplicateId,
    EmptySet,
    UniformFeatures,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub kind: DiagnosticKind,
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    fn error(kind: DiagnosticKind, path: String, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            kind,
            path,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    fn into_error(self) -> LexiconError {
        match self.kind {
            DiagnosticKind::DuplicateId => LexiconError::DuplicateId {
                path: self.path,
                id: self.message,
            },
            DiagnosticKind::EmptySet => LexiconError::EmptySet {
                path: self.path,
                message: self.message,
            },
            DiagnosticKind::Schema | DiagnosticKind::UniformFeatures => {
                LexiconError::SchemaViolation {
                    path: self.path,
                    message: self.message,
                }
            }
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{level}: {}: {}", self.path, self.message)
    }
}

/// Reads and validates a lexicon JSON document.
pub fn load_lexicon<R: Read>(source: R) -> Result<Lexicon, LexiconError> {
    let mut de = serde_json::Deserializer::from_reader(source);
    let lexicon: Lexicon = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        json_error(inner, Some(path))
    })?;
    de.end().map_err(|err| json_error(err, None))?;

    if let Some(first) = validate_lexicon(&lexicon).into_iter().find(Diagnostic::is_error) {
        return Err(first.into_error());
    }
    Ok(lexicon)
}

fn json_error(err: serde_json::Error, path: Option<String>) -> LexiconError {
    use serde_json::error::Category as C;
    match err.classify() {
        C::Io => LexiconError::Io(err.into()),
        C::Syntax | C::Eof => LexiconError::MalformedDocument {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        },
        C::Data => LexiconError::SchemaViolation {
            path: path.unwrap_or_else(|| ".".to_owned()),
            message: err.to_string(),
        },
    }
}

/// Checks every lexicon invariant. The result is empty iff the lexicon is
/// valid and raises no advisory warnings.
pub fn validate_lexicon(lexicon: &Lexicon) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    if lexicon.language.trim().is_empty() {
        out.push(Diagnostic::error(
            DiagnosticKind::Schema,
            "language".into(),
            "language must not be empty",
        ));
    }

    for (name, set) in &lexicon.attribute_sets {
        let base = format!("attribute_sets.{name}");
        check_set_name(name, &base, &mut out);
        if set.terms.len() < 2 {
            out.push(Diagnostic::error(
                DiagnosticKind::EmptySet,
                format!("{base}.terms"),
                "attribute set needs ≥ 2 terms",
            ));
        }
        let ids = set.terms.iter().map(|t| t.id.as_str());
        check_ids(ids, &format!("{base}.terms"), &mut out);
        for (i, term) in set.terms.iter().enumerate() {
            let path = format!("{base}.terms[{i}]");
            if term.display.trim().is_empty() {
                out.push(Diagnostic::error(
                    DiagnosticKind::Schema,
                    format!("{path}.display"),
                    "display must not be empty",
                ));
            }
            check_forms(&term.forms, &format!("{path}.forms"), &mut out);
        }
    }

    for (name, set) in &lexicon.concept_sets {
        let base = format!("concept_sets.{name}");
        check_set_name(name, &base, &mut out);
        if set.words.is_empty() {
            out.push(Diagnostic::error(
                DiagnosticKind::EmptySet,
                format!("{base}.words"),
                "concept set needs ≥ 1 word",
            ));
        }
        let ids = set.words.iter().map(|w| w.id.as_str());
        check_ids(ids, &format!("{base}.words"), &mut out);
        for (i, word) in set.words.iter().enumerate() {
            check_forms(&word.forms, &format!("{base}.words[{i}].forms"), &mut out);
        }
    }

    // Agreement only matters once some concept word is actually inflected.
    let agreement_language = lexicon
        .concept_sets
        .values()
        .flat_map(|s| &s.words)
        .any(|w| w.forms.keys().any(|k| *k != FormKey::Default));
    if agreement_language {
        for (name, set) in &lexicon.attribute_sets {
            if let Some((first, rest)) = set.terms.split_first() {
                if !rest.is_empty() && rest.iter().all(|t| t.features == first.features) {
                    out.push(Diagnostic {
                        severity: Severity::Warning,
                        kind: DiagnosticKind::UniformFeatures,
                        path: format!("attribute_sets.{name}.terms"),
                        message: format!(
                            "all terms share features {}; agreement will not vary across this set",
                            first.features
                        ),
                    });
                }
            }
        }
    }

    out
}

fn check_set_name(name: &str, path: &str, out: &mut Vec<Diagnostic>) {
    if name.trim().is_empty() {
        out.push(Diagnostic::error(
            DiagnosticKind::Schema,
            path.to_owned(),
            "set name must not be empty",
        ));
    }
}

fn check_ids<'a>(ids: impl Iterator<Item = &'a str>, path: &str, out: &mut Vec<Diagnostic>) {
    let mut seen = std::collections::BTreeSet::new();
    for (i, id) in ids.enumerate() {
        if id.trim().is_empty() {
            out.push(Diagnostic::error(
                DiagnosticKind::Schema,
                format!("{path}[{i}].id"),
                "id must not be empty",
            ));
        } else if !seen.insert(id) {
            out.push(Diagnostic::error(
                DiagnosticKind::DuplicateId,
                format!("{path}[{i}].id"),
                id,
            ));
        }
    }
}

fn check_forms(forms: &Forms, path: &str, out: &mut Vec<Diagnostic>) {
    if forms.is_empty() {
        out.push(Diagnostic::error(
            DiagnosticKind::Schema,
            path.to_owned(),
            "forms must not be empty",
        ));
    }
    for (key, surface) in forms {
        if surface.trim().is_empty() {
            out.push(Diagnostic::error(
                DiagnosticKind::Schema,
                format!("{path}.{key}"),
                "surface form must not be empty",
            ));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GREEK: &str = r#"{"language":"el","attribute_sets":{"gender":{"category":"gender","terms":[
        {"id":"men","display":"men","features":{"gender":"masc","number":"pl"},"forms":{"default":"άνδρες"}},
        {"id":"women","display":"women","features":{"gender":"fem","number":"pl"},"forms":{"default":"γυναίκες"}}]}},
        "concept_sets":{"neg_adj":{"words":[{"id":"hysterical","forms":{"masc.pl":"υστερικοί","fem.pl":"υστερικές"}}]}}}"#;

    fn forms(pairs: &[(&str, &str)]) -> Forms {
        pairs
            .iter()
            .map(|(k, v)| (k.parse().unwrap(), (*v).to_owned()))
            .collect()
    }

    #[test]
    fn loads_minimal_document() {
        let lex = load_lexicon(GREEK.as_bytes()).unwrap();
        assert_eq!(lex.language, "el");
        assert_eq!(lex.attribute_sets["gender"].terms.len(), 2);
        assert_eq!(lex.concept_sets["neg_adj"].words.len(), 1);
    }

    #[test]
    fn duplicate_term_id() {
        let doc = GREEK.replace(r#""id":"women""#, r#""id":"men""#);
        match load_lexicon(doc.as_bytes()) {
            Err(LexiconError::DuplicateId { id, path }) => {
                assert_eq!(id, "men");
                assert_eq!(path, "attribute_sets.gender.terms[1].id");
            }
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn single_term_attribute_set() {
        let mut lex = load_lexicon(GREEK.as_bytes()).unwrap();
        lex.attribute_sets.get_mut("gender").unwrap().terms.pop();
        match load_lexicon(lex.to_json().as_bytes()) {
            Err(LexiconError::EmptySet { message, .. }) => {
                assert_eq!(message, "attribute set needs ≥ 2 terms")
            }
            other => panic!("expected EmptySet, got {other:?}"),
        }
    }

    #[test]
    fn syntax_and_schema_errors_are_distinguished() {
        assert!(matches!(
            load_lexicon(&b"{\"language\": "[..]),
            Err(LexiconError::MalformedDocument { .. })
        ));
        let doc = GREEK.replace("masc.pl\":\"υστερικοί", "masc.plural\":\"υστερικοί");
        match load_lexicon(doc.as_bytes()) {
            Err(LexiconError::SchemaViolation { path, .. }) => {
                assert!(path.starts_with("concept_sets.neg_adj.words[0].forms"), "{path}")
            }
            other => panic!("expected SchemaViolation, got {other:?}"),
        }
        let doc = GREEK.replace(r#""display":"men","#, "");
        match load_lexicon(doc.as_bytes()) {
            Err(LexiconError::SchemaViolation { path, message }) => {
                assert_eq!(path, "attribute_sets.gender.terms[0]");
                assert!(message.contains("display"));
            }
            other => panic!("expected SchemaViolation, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_set_name_rejected() {
        let doc = r#"{"language":"en","attribute_sets":{},"concept_sets":{
            "a":{"words":[{"id":"x","forms":{"default":"x"}}]},
            "a":{"words":[{"id":"y","forms":{"default":"y"}}]}}}"#;
        assert!(matches!(
            load_lexicon(doc.as_bytes()),
            Err(LexiconError::SchemaViolation { .. })
        ));
    }

    #[test]
    fn select_form_cascade() {
        let fem_pl = FeatureBundle::new(Gender::Fem, Number::Pl);
        assert_eq!(
            select_form(&forms(&[("default", "hysterical")]), fem_pl).unwrap(),
            "hysterical"
        );
        assert_eq!(
            select_form(&forms(&[("masc.pl", "A"), ("fem.pl", "B")]), fem_pl).unwrap(),
            "B"
        );
        assert_eq!(
            select_form(&forms(&[("masc.sg", "A")]), fem_pl),
            Err(NoMatchingForm { features: fem_pl })
        );
        // gender-only beats number-only beats default
        let table = forms(&[("fem.none", "G"), ("none.pl", "N"), ("default", "D")]);
        assert_eq!(select_form(&table, fem_pl).unwrap(), "G");
        let table = forms(&[("none.pl", "N"), ("default", "D")]);
        assert_eq!(select_form(&table, fem_pl).unwrap(), "N");
    }

    #[test]
    fn validate_reports_empty_surface() {
        let mut lex = load_lexicon(GREEK.as_bytes()).unwrap();
        assert!(validate_lexicon(&lex).is_empty());
        lex.concept_sets.get_mut("neg_adj").unwrap().words[0]
            .forms
            .insert(FormKey::Default, "  ".into());
        let diags = validate_lexicon(&lex);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, Severity::Error);
        assert_eq!(diags[0].path, "concept_sets.neg_adj.words[0].forms.default");
    }

    #[test]
    fn validate_warns_on_uniform_features_in_agreement_language() {
        let mut lex = load_lexicon(GREEK.as_bytes()).unwrap();
        lex.attribute_sets.get_mut("gender").unwrap().terms[1].features =
            FeatureBundle::new(Gender::Masc, Number::Pl);
        let diags = validate_lexicon(&lex);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, Severity::Warning);
        assert_eq!(diags[0].kind, DiagnosticKind::UniformFeatures);
        // still loads: warnings never block
        assert!(load_lexicon(lex.to_json().as_bytes()).is_ok());
    }

    fn gender() -> impl Strategy<Value = Gender> {
        prop::sample::select(Gender::ALL.to_vec())
    }

    fn number() -> impl Strategy<Value = Number> {
        prop::sample::select(Number::ALL.to_vec())
    }

    fn form_key() -> impl Strategy<Value = FormKey> {
        prop_oneof![
            Just(FormKey::Default),
            (gender(), number()).prop_map(|(g, n)| FormKey::Features(g, n)),
        ]
    }

    fn forms_strategy() -> impl Strategy<Value = Forms> {
        prop::collection::btree_map(form_key(), "[a-zα-ω]{1,8}", 1..4)
    }

    fn lexicon_strategy() -> impl Strategy<Value = Lexicon> {
        let term = (gender(), number(), forms_strategy(), "[A-Za-z ]{0,6}");
        let attr_set = (
            prop::sample::select(vec![
                Category::Gender,
                Category::Religion,
                Category::Ethnicity,
                Category::Other,
            ]),
            prop::collection::vec(term, 2..5),
        )
            .prop_map(|(category, terms)| AttributeSet {
                category,
                terms: terms
                    .into_iter()
                    .enumerate()
                    .map(|(i, (g, n, forms, label))| AttributeTerm {
                        id: format!("t{i}"),
                        display: format!("term {i}{label}"),
                        features: FeatureBundle::new(g, n),
                        forms,
                    })
                    .collect(),
            });
        let concept_set = prop::collection::vec(forms_strategy(), 1..4).prop_map(|fs| ConceptSet {
            words: fs
                .into_iter()
                .enumerate()
                .map(|(i, forms)| ConceptWord {
                    id: format!("w{i}"),
                    forms,
                })
                .collect(),
        });
        (
            "[a-z]{2}",
            prop::collection::btree_map("[a-z_]{1,6}", attr_set, 0..3),
            prop::collection::btree_map("[a-z_]{1,6}", concept_set, 0..3),
        )
            .prop_map(|(language, attribute_sets, concept_sets)| Lexicon {
                language,
                attribute_sets,
                concept_sets,
            })
    }

    proptest! {
        #[test]
        fn json_round_trip_is_identity(lex in lexicon_strategy()) {
            prop_assert!(validate_lexicon(&lex).iter().all(|d| !d.is_error()));
            let back = load_lexicon(lex.to_json().as_bytes()).unwrap();
            prop_assert_eq!(back, lex);
        }

        #[test]
        fn select_form_is_total(forms in forms_strategy(), g in gender(), n in number()) {
            let features = FeatureBundle::new(g, n);
            let first = select_form(&forms, features);
            prop_assert_eq!(first.clone(), select_form(&forms, features));
            if forms.contains_key(&FormKey::Default) {
                prop_assert!(first.is_ok());
            }
            if let Ok(surface) = first {
                prop_assert!(forms.values().any(|v| v == surface));
            }
        }
    }
}
