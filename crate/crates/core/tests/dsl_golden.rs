use std::collections::BTreeMap;

use biasprobe_core::lexicon::{load_lexicon, select_form, Category, Lexicon};
use biasprobe_core::template::{
    bind_template_set, expand, parse_template, Binding, ParseErrorKind, Segment, Template,
};
use serde_json::{json, Value};

const GOLDEN: &str = include_str!("golden/templates.json");

const GREEK: &str = r#"{"language":"el","attribute_sets":{
    "gender":{"category":"gender","terms":[
        {"id":"men","display":"άνδρες","features":{"gender":"masc","number":"pl"},"forms":{"default":"άνδρες"}},
        {"id":"women","display":"γυναίκες","features":{"gender":"fem","number":"pl"},"forms":{"default":"γυναίκες"}},
        {"id":"man","display":"άνδρας","features":{"gender":"masc","number":"sg"},"forms":{"default":"ο άνδρας"}},
        {"id":"woman","display":"γυναίκα","features":{"gender":"fem","number":"sg"},"forms":{"default":"η γυναίκα"}}]}},
    "concept_sets":{"adj":{"words":[
        {"id":"hysterical","forms":{"masc.pl":"υστερικοί","fem.pl":"υστερικές","masc.sg":"υστερικός","fem.sg":"υστερική"}},
        {"id":"strong","forms":{"masc.pl":"δυνατοί","fem.pl":"δυνατές","masc.sg":"δυνατός","fem.sg":"δυνατή"}},
        {"id":"kind","forms":{"masc.none":"καλός","fem.none":"καλή","default":"καλοί"}}]}}}"#;

fn dump(t: &Template) -> Value {
    Value::Array(
        t.segments()
            .iter()
            .map(|s| match s {
                Segment::Literal(text) => json!(["lit", text]),
                Segment::Slot {
                    name,
                    agree_with: None,
                } => json!(["slot", name]),
                Segment::Slot {
                    name,
                    agree_with: Some(target),
                } => json!(["slot", name, target]),
            })
            .collect(),
    )
}

fn kind_name(kind: ParseErrorKind) -> &'static str {
    match kind {
        ParseErrorKind::UnbalancedBrace => "UnbalancedBrace",
        ParseErrorKind::EmptySlotName => "EmptySlotName",
        ParseErrorKind::NestedBrace => "NestedBrace",
        ParseErrorKind::BadAgreementSyntax => "BadAgreementSyntax",
        ParseErrorKind::InvalidSlotName => "InvalidSlotName",
    }
}

fn golden() -> Value {
    serde_json::from_str(GOLDEN).unwrap()
}

fn greek() -> Lexicon {
    load_lexicon(GREEK.as_bytes()).unwrap()
}

fn bindings() -> BTreeMap<String, Binding> {
    [
        ("a".to_owned(), Binding::AttributeSet("gender".into())),
        ("c".to_owned(), Binding::ConceptSet("adj".into())),
    ]
    .into_iter()
    .collect()
}

#[test]
fn golden_templates_parse_losslessly() {
    let cases = golden()["templates"].as_array().unwrap().clone();
    assert!(cases.len() >= 20);
    let mut with_escapes = 0;
    for case in cases {
        let text = case["text"].as_str().unwrap();
        let parsed = parse_template(text).unwrap_or_else(|e| panic!("{text}: {e}"));
        assert_eq!(dump(&parsed), case["segments"], "{text}");
        assert_eq!(parsed.raw(), text);
        assert_eq!(parsed.render(), text, "render is not lossless for {text}");
        assert_eq!(parse_template(&parsed.render()).unwrap(), parsed);
        if text.contains("{{") || text.contains("}}") {
            with_escapes += 1;
        }
    }
    assert!(with_escapes >= 5);
}

#[test]
fn golden_errors_report_offsets() {
    for case in golden()["errors"].as_array().unwrap() {
        let text = case["text"].as_str().unwrap();
        let err = parse_template(text).unwrap_err();
        assert_eq!(kind_name(err.kind), case["kind"], "{text}");
        assert_eq!(err.offset as u64, case["offset"].as_u64().unwrap(), "{text}");
    }
}

#[test]
fn expansion_count_is_product() {
    let lex = greek();
    let texts = ["οι {a} είναι {c@a}.", "{a} είναι {c@a}.", "όλοι: {a} είναι {c@a}!"];
    for t in 1..=texts.len() {
        let templates = texts[..t].iter().map(|s| parse_template(s).unwrap()).collect();
        let set = bind_template_set("s", Category::Gender, templates, bindings(), &lex).unwrap();
        let filled = expand(&set, &lex).unwrap();
        assert_eq!(filled.len(), t * 4 * 3);
        // (template, concept, attribute) order
        let order: Vec<(usize, String, String)> = filled
            .iter()
            .map(|f| (f.template_index, f.concept_id.clone().unwrap(), f.attribute_id.clone()))
            .collect();
        assert_eq!(order[0], (0, "hysterical".into(), "men".into()));
        assert_eq!(order[1], (0, "hysterical".into(), "women".into()));
        assert_eq!(order[4], (0, "strong".into(), "men".into()));
    }

    let only_attr = bind_template_set(
        "s",
        Category::Gender,
        vec![parse_template("{a} spoke.").unwrap()],
        [("a".to_owned(), Binding::AttributeSet("gender".into()))]
            .into_iter()
            .collect(),
        &lex,
    )
    .unwrap();
    assert_eq!(expand(&only_attr, &lex).unwrap().len(), 4);
}

#[test]
fn greek_surfaces_agree_at_recorded_spans() {
    let lex = greek();
    let set = bind_template_set(
        "s",
        Category::Gender,
        vec![
            parse_template("{a} είναι {c@a}.").unwrap(),
            parse_template("Νομίζω ότι {a} είναι πολύ {c@a}, {{ναι}}.").unwrap(),
        ],
        bindings(),
        &lex,
    )
    .unwrap();
    let attributes = &lex.attribute_sets["gender"].terms;
    let concepts = &lex.concept_sets["adj"].words;
    for f in expand(&set, &lex).unwrap() {
        let term = attributes.iter().find(|t| t.id == f.attribute_id).unwrap();
        let word = concepts
            .iter()
            .find(|w| Some(&w.id) == f.concept_id.as_ref())
            .unwrap();
        let expected = select_form(&word.forms, term.features).unwrap();
        let spans: Vec<_> = f.spans_of("c").collect();
        assert_eq!(spans.len(), 1);
        assert_eq!(f.span_text(spans[0]), expected, "{}", f.text);
        let a = f.spans_of("a").next().unwrap();
        assert_eq!(f.span_text(a), term.surface().unwrap());
        assert!(f.text.contains(expected));
    }

    let women_hyst = expand(&set, &lex)
        .unwrap()
        .into_iter()
        .find(|f| f.attribute_id == "women" && f.concept_id.as_deref() == Some("hysterical"))
        .unwrap();
    assert_eq!(women_hyst.text, "γυναίκες είναι υστερικές.");
    let woman_kind = expand(&set, &lex)
        .unwrap()
        .into_iter()
        .find(|f| {
            f.template_index == 1
                && f.attribute_id == "woman"
                && f.concept_id.as_deref() == Some("kind")
        })
        .unwrap();
    // gender.none fallback, then the literal braces survive expansion
    assert_eq!(woman_kind.text, "Νομίζω ότι η γυναίκα είναι πολύ καλή, {ναι}.");
}
