//! Cross-model reports and their JSON, CSV and SVG renderings.
//!
//! CSV output is long format, one scalar per row under the header
//! `category,set_id,metric,model,label,value`. Metrics and labels:
//!
//! | metric           | set_id | label                       |
//! |------------------|--------|-----------------------------|
//! | `templates`      | set    | empty                       |
//! | `cb`             | set    | empty                       |
//! | `cb_aggregate`   | `*`    | empty                       |
//! | `share`          | set    | `concept/attribute`         |
//! | `kl_max`         | set    | `t{i}`                      |
//! | `kl`             | set    | `t{i}:p>q`                  |
//! | `p_norm`         | set    | `t{i}:concept/attribute`    |
//! | `normprob_share` | set    | `t{i}:concept/attribute`    |
//!
//! An undefined `p_norm` is written with an empty value.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendInfo;
use crate::lexicon::Category;
use crate::metrics::{aggregate_cb, cb_score, CbResult, KlMatrix, MetricsError, NormProbResult};
use crate::scoring::{normalized_shares, ScoreTensor, ScoringError};

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 6] = ["category", "set_id", "metric", "model", "label", "value"];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no models to report")]
    NoModels,
    #[error("model `{0}` appears more than once")]
    DuplicateModel(String),
    #[error("model `{model}` lists set `{set_id}` more than once")]
    DuplicateSet { model: String, set_id: String },
    #[error("model `{model}` has sets {found:?}, expected {expected:?}")]
    SetIdMismatchAcrossModels {
        model: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("set `{set_id}` is {found} for model `{model}` but {expected} elsewhere")]
    CategoryMismatch {
        model: String,
        set_id: String,
        expected: Category,
        found: Category,
    },
    #[error("model `{model}`, set `{set_id}`: {displays} display names for {attributes} attributes")]
    DisplayMismatch {
        model: String,
        set_id: String,
        displays: usize,
        attributes: usize,
    },
    #[error("no share bars for set `{set_id}`, concept `{concept_id}`")]
    UnknownSetOrConcept { set_id: String, concept_id: String },
    #[error("unsupported report schema {0}")]
    UnsupportedSchema(u32),
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("model `{model}`, set `{set_id}`: {source}")]
    Metrics {
        model: String,
        set_id: String,
        source: MetricsError,
    },
    #[error("model `{model}`, set `{set_id}`: {source}")]
    Scoring {
        model: String,
        set_id: String,
        source: ScoringError,
    },
}

/// Everything scored for one model.
#[derive(Debug, Clone)]
pub struct ModelInput {
    pub model: String,
    /// Language of the lexicon the model was probed with.
    pub language: String,
    pub backend: BackendInfo,
    pub sets: Vec<SetInput>,
}

#[derive(Debug, Clone)]
pub struct SetInput {
    pub category: Category,
    pub tensor: ScoreTensor,
    /// Display names parallel to `tensor.attributes()`.
    pub attribute_display: Vec<String>,
    pub distdiff: Vec<KlMatrix>,
    pub normprob: Vec<NormProbResult>,
}

#[derive(Debug, Clone, Default)]
pub struct ReportOptions {
    pub timestamp: Option<String>,
    pub cb: bool,
    pub shares: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub metadata: Metadata,
    pub models: Vec<String>,
    pub sets: Vec<SetBlock>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aggregates: Vec<CbAggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub timestamp: Option<String>,
    pub tool_version: String,
    pub languages: Vec<String>,
    pub backends: Vec<BackendEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendEntry {
    pub model: String,
    pub language: String,
    pub info: BackendInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetBlock {
    pub category: Category,
    pub set_id: String,
    pub models: Vec<ModelBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBlock {
    pub model: String,
    pub templates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cb: Option<CbResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shares: Vec<ConceptShares>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub distdiff: Vec<KlMatrix>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub normprob: Vec<NormProbResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptShares {
    pub concept_id: String,
    pub shares: Vec<AttributeShare>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeShare {
    pub attribute_id: String,
    pub display: String,
    pub share: f64,
}

/// Cell-weighted CB over all sets of one category for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbAggregate {
    pub category: Category,
    pub model: String,
    pub cb: f64,
    pub sets: usize,
}

fn set_ids(input: &ModelInput) -> Vec<String> {
    input
        .sets
        .iter()
        .map(|s| s.tensor.template_set().to_owned())
        .collect()
}

fn model_block(
    input: &ModelInput,
    set: &SetInput,
    options: &ReportOptions,
) -> Result<ModelBlock, ReportError> {
    let tensor = &set.tensor;
    let set_id = tensor.template_set();
    if set.attribute_display.len() != tensor.attributes().len() {
        return Err(ReportError::DisplayMismatch {
            model: input.model.clone(),
            set_id: set_id.to_owned(),
            displays: set.attribute_display.len(),
            attributes: tensor.attributes().len(),
        });
    }
    let cb = options
        .cb
        .then(|| cb_score(tensor))
        .transpose()
        .map_err(|source| ReportError::Metrics {
            model: input.model.clone(),
            set_id: set_id.to_owned(),
            source,
        })?;
    let mut shares = Vec::new();
    if options.shares {
        for (c, concept_id) in tensor.concepts().iter().enumerate() {
            let values = normalized_shares(tensor, c).map_err(|source| ReportError::Scoring {
                model: input.model.clone(),
                set_id: set_id.to_owned(),
                source,
            })?;
            shares.push(ConceptShares {
                concept_id: concept_id.clone(),
                shares: tensor
                    .attributes()
                    .iter()
                    .zip(&set.attribute_display)
                    .zip(values)
                    .map(|((id, display), share)| AttributeShare {
                        attribute_id: id.clone(),
                        display: display.clone(),
                        share,
                    })
                    .collect(),
            });
        }
    }
    Ok(ModelBlock {
        model: input.model.clone(),
        templates: tensor.templates().len(),
        cb,
        shares,
        distdiff: set.distdiff.clone(),
        normprob: set.normprob.clone(),
    })
}

/// Combines per-model results into one report. Models keep their input
/// order; sets follow the order of the first model.
pub fn build_report(inputs: &[ModelInput], options: &ReportOptions) -> Result<Report, ReportError> {
    let first = inputs.first().ok_or(ReportError::NoModels)?;
    let expected = set_ids(first);
    let mut sorted_expected = expected.clone();
    sorted_expected.sort();

    let mut models: Vec<String> = Vec::new();
    for input in inputs {
        if models.contains(&input.model) {
            return Err(ReportError::DuplicateModel(input.model.clone()));
        }
        models.push(input.model.clone());
        let found = set_ids(input);
        let mut sorted = found.clone();
        sorted.sort();
        if let Some(pair) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(ReportError::DuplicateSet {
                model: input.model.clone(),
                set_id: pair[0].clone(),
            });
        }
        if sorted != sorted_expected {
            return Err(ReportError::SetIdMismatchAcrossModels {
                model: input.model.clone(),
                expected: expected.clone(),
                found,
            });
        }
    }

    let mut sets = Vec::with_capacity(expected.len());
    for (i, set_id) in expected.iter().enumerate() {
        let category = first.sets[i].category;
        let mut blocks = Vec::with_capacity(inputs.len());
        for input in inputs {
            let set = input
                .sets
                .iter()
                .find(|s| s.tensor.template_set() == set_id)
                .expect("set ids checked above");
            if set.category != category {
                return Err(ReportError::CategoryMismatch {
                    model: input.model.clone(),
                    set_id: set_id.clone(),
                    expected: category,
                    found: set.category,
                });
            }
            blocks.push(model_block(input, set, options)?);
        }
        sets.push(SetBlock {
            category,
            set_id: set_id.clone(),
            models: blocks,
        });
    }

    let mut aggregates = Vec::new();
    if options.cb {
        let mut categories: Vec<Category> = Vec::new();
        for set in &sets {
            if !categories.contains(&set.category) {
                categories.push(set.category);
            }
        }
        for category in categories {
            for (m, model) in models.iter().enumerate() {
                let results: Vec<&CbResult> = sets
                    .iter()
                    .filter(|s| s.category == category)
                    .filter_map(|s| s.models[m].cb.as_ref())
                    .collect();
                let cb = aggregate_cb(results.iter().copied()).map_err(|source| {
                    ReportError::Metrics {
                        model: model.clone(),
                        set_id: "*".into(),
                        source,
                    }
                })?;
                aggregates.push(CbAggregate {
                    category,
                    model: model.clone(),
                    cb,
                    sets: results.len(),
                });
            }
        }
    }

    let mut languages: Vec<String> = Vec::new();
    for input in inputs {
        if !languages.contains(&input.language) {
            languages.push(input.language.clone());
        }
    }
    Ok(Report {
        schema: SCHEMA_VERSION,
        metadata: Metadata {
            timestamp: options.timestamp.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            languages,
            backends: inputs
                .iter()
                .map(|i| BackendEntry {
                    model: i.model.clone(),
                    language: i.language.clone(),
                    info: i.backend.clone(),
                })
                .collect(),
        },
        models,
        sets,
        aggregates,
    })
}

pub fn emit_json(report: &Report) -> String {
    let mut out = serde_json::to_string_pretty(report).expect("report serializes");
    out.push('\n');
    out
}

pub fn parse(text: &str) -> Result<Report, ReportError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let report: Report =
        serde_path_to_error::deserialize(&mut de).map_err(|e| ReportError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    if report.schema != SCHEMA_VERSION {
        return Err(ReportError::UnsupportedSchema(report.schema));
    }
    Ok(report)
}

/// Every scalar in the report as a CSV row, sorted by all columns.
pub fn csv_rows(report: &Report) -> Vec<[String; 6]> {
    let mut rows = Vec::new();
    for set in &report.sets {
        let category = set.category.as_str();
        for block in &set.models {
            let mut push = |metric: &str, label: String, value: String| {
                rows.push([
                    category.to_owned(),
                    set.set_id.clone(),
                    metric.to_owned(),
                    block.model.clone(),
                    label,
                    value,
                ]);
            };
            push("templates", String::new(), block.templates.to_string());
            if let Some(cb) = &block.cb {
                push("cb", String::new(), cb.cb.to_string());
            }
            for concept in &block.shares {
                for s in &concept.shares {
                    let label = format!("{}/{}", concept.concept_id, s.attribute_id);
                    push("share", label, s.share.to_string());
                }
            }
            for m in &block.distdiff {
                let t = m.template_index;
                push("kl_max", format!("t{t}"), m.max_value.to_string());
                for (i, p) in m.attributes.iter().enumerate() {
                    for (j, q) in m.attributes.iter().enumerate() {
                        if i != j {
                            push("kl", format!("t{t}:{p}>{q}"), m.kl[i][j].to_string());
                        }
                    }
                }
            }
            for r in &block.normprob {
                for e in &r.entries {
                    let label = format!("t{}:{}/{}", r.template_index, r.concept_id, e.attribute_id);
                    let p_norm = e.p_norm.map(|v| v.to_string()).unwrap_or_default();
                    push("p_norm", label.clone(), p_norm);
                    push("normprob_share", label, e.share.to_string());
                }
            }
        }
    }
    for agg in &report.aggregates {
        rows.push([
            agg.category.as_str().to_owned(),
            "*".to_owned(),
            "cb_aggregate".to_owned(),
            agg.model.clone(),
            String::new(),
            agg.cb.to_string(),
        ]);
    }
    rows.sort();
    rows
}

pub fn emit_csv(report: &Report) -> Vec<u8> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(CSV_HEADER).expect("in-memory write");
    for row in csv_rows(report) {
        writer.write_record(&row).expect("in-memory write");
    }
    writer.into_inner().expect("in-memory flush")
}

#[derive(Debug, Clone)]
pub struct SvgOptions {
    pub bar_width: f64,
    pub bar_height: f64,
    pub label_width: f64,
}

impl Default for SvgOptions {
    fn default() -> Self {
        Self {
            bar_width: 600.0,
            bar_height: 32.0,
            label_width: 120.0,
        }
    }
}

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#9c755f",
];

const MARGIN: f64 = 10.0;
const TITLE_HEIGHT: f64 = 24.0;
const GAP: f64 = 12.0;

fn escape_xml(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Segment `(x, width)` pairs. Edges are rounded cumulative positions, so
/// widths add up to the bar width up to the rounding of the last edge.
pub fn segment_geometry(shares: &[f64], x0: f64, bar_width: f64) -> Vec<(f64, f64)> {
    let mut cumulative = 0.0;
    let mut left = round2(x0);
    shares
        .iter()
        .map(|s| {
            cumulative += s;
            let right = round2(x0 + bar_width * cumulative);
            let seg = (left, right - left);
            left = right;
            seg
        })
        .collect()
}

/// Horizontal stacked share bars, one per model that has shares for the
/// concept.
pub fn emit_svg_shares(
    report: &Report,
    set_id: &str,
    concept_id: &str,
    options: &SvgOptions,
) -> Result<String, ReportError> {
    let unknown = || ReportError::UnknownSetOrConcept {
        set_id: set_id.to_owned(),
        concept_id: concept_id.to_owned(),
    };
    let set = report
        .sets
        .iter()
        .find(|s| s.set_id == set_id)
        .ok_or_else(unknown)?;
    let bars: Vec<(&str, &ConceptShares)> = set
        .models
        .iter()
        .filter_map(|m| {
            m.shares
                .iter()
                .find(|c| c.concept_id == concept_id)
                .map(|c| (m.model.as_str(), c))
        })
        .collect();
    if bars.is_empty() {
        return Err(unknown());
    }

    let width = 2.0 * MARGIN + options.label_width + options.bar_width;
    let height =
        2.0 * MARGIN + TITLE_HEIGHT + bars.len() as f64 * (options.bar_height + GAP) - GAP;
    let x0 = MARGIN + options.label_width;
    let title = format!("{} / {}: {}", set.category, set_id, concept_id);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, "  <title>{}</title>", escape_xml(&title));
    let _ = writeln!(
        svg,
        r#"  <text x="{MARGIN}" y="{}" font-size="14" font-weight="bold">{}</text>"#,
        MARGIN + 14.0,
        escape_xml(&title)
    );
    for (row, (model, concept)) in bars.iter().enumerate() {
        let y = MARGIN + TITLE_HEIGHT + row as f64 * (options.bar_height + GAP);
        let mid = y + options.bar_height / 2.0;
        let _ = writeln!(svg, r#"  <g class="bar">"#);
        let _ = writeln!(
            svg,
            r#"    <text x="{MARGIN}" y="{mid}" font-size="12" dominant-baseline="middle">{}</text>"#,
            escape_xml(model)
        );
        let shares: Vec<f64> = concept.shares.iter().map(|s| s.share).collect();
        let geometry = segment_geometry(&shares, x0, options.bar_width);
        for (k, (s, (x, w))) in concept.shares.iter().zip(geometry).enumerate() {
            let label = format!("{} {:.3}", s.display, s.share);
            let _ = writeln!(
                svg,
                r#"    <rect class="segment" x="{x:.2}" y="{y}" width="{w:.2}" height="{}" fill="{}"><title>{}</title></rect>"#,
                options.bar_height,
                PALETTE[k % PALETTE.len()],
                escape_xml(&label)
            );
            let _ = writeln!(
                svg,
                r#"    <text x="{:.2}" y="{mid}" font-size="11" text-anchor="middle" dominant-baseline="middle">{}</text>"#,
                x + w / 2.0,
                escape_xml(&label)
            );
        }
        let _ = writeln!(svg, "  </g>");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn info() -> BackendInfo {
        BackendInfo {
            model_name: "fixture".into(),
            language: "en".into(),
            vocab_size: 10,
            max_sequence_length: 16,
        }
    }

    fn set_input(id: &str, category: Category, values: Vec<f64>) -> SetInput {
        let tensor = ScoreTensor::new(
            id.into(),
            vec!["{a} is {c}".into()],
            vec!["nurse".into()],
            vec!["he".into(), "she".into()],
            values,
        )
        .unwrap();
        SetInput {
            category,
            tensor,
            attribute_display: vec!["he".into(), "she".into()],
            distdiff: vec![],
            normprob: vec![],
        }
    }

    fn model(name: &str, sets: Vec<SetInput>) -> ModelInput {
        ModelInput {
            model: name.into(),
            language: "en".into(),
            backend: info(),
            sets,
        }
    }

    fn all_on() -> ReportOptions {
        ReportOptions {
            timestamp: None,
            cb: true,
            shares: true,
        }
    }

    fn svg_widths(svg: &str) -> Vec<f64> {
        svg.lines()
            .filter(|l| l.contains(r#"class="segment""#))
            .map(|l| {
                let rest = &l[l.find(" width=\"").unwrap() + 8..];
                rest[..rest.find('"').unwrap()].parse().unwrap()
            })
            .collect()
    }

    #[test]
    fn single_block_report() {
        let r = build_report(
            &[model("m", vec![set_input("s", Category::Gender, vec![0.0, 2.0])])],
            &all_on(),
        )
        .unwrap();
        assert_eq!(r.schema, 1);
        assert_eq!(r.sets.len(), 1);
        let block = &r.sets[0].models[0];
        assert_eq!(block.cb.as_ref().unwrap().cb, 1.0);
        let sum: f64 = block.shares[0].shares.iter().map(|s| s.share).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert_eq!(r.aggregates.len(), 1);
        assert_eq!(r.aggregates[0].cb, 1.0);
        assert_eq!(parse(&emit_json(&r)).unwrap(), r);
    }

    #[test]
    fn build_errors() {
        let opts = all_on();
        let a = model("a", vec![set_input("s", Category::Gender, vec![0.0, 1.0])]);
        let b = model("b", vec![set_input("t", Category::Gender, vec![0.0, 1.0])]);
        assert!(matches!(
            build_report(&[a.clone(), b], &opts),
            Err(ReportError::SetIdMismatchAcrossModels { .. })
        ));
        assert!(matches!(
            build_report(&[a.clone(), a.clone()], &opts),
            Err(ReportError::DuplicateModel(m)) if m == "a"
        ));
        let c = model("c", vec![set_input("s", Category::Religion, vec![0.0, 1.0])]);
        assert!(matches!(
            build_report(&[a, c], &opts),
            Err(ReportError::CategoryMismatch { .. })
        ));
        assert!(matches!(build_report(&[], &opts), Err(ReportError::NoModels)));
    }

    #[test]
    fn csv_rows_and_toggles() {
        let inputs = [
            model("en", vec![set_input("s", Category::Gender, vec![0.0, 2.0])]),
            model("el", vec![set_input("s", Category::Gender, vec![-1.0, -1.0])]),
        ];
        let r = build_report(&inputs, &all_on()).unwrap();
        let csv = String::from_utf8(emit_csv(&r)).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "category,set_id,metric,model,label,value");
        assert!(lines.contains(&"gender,s,cb,el,,0"));
        assert!(lines.contains(&"gender,s,cb,en,,1"));
        assert!(lines.contains(&"gender,*,cb_aggregate,en,,1"));
        assert!(lines.contains(&"gender,s,share,el,nurse/he,0.5"));
        assert_eq!(lines.iter().filter(|l| l.contains(",share,en,")).count(), 2);
        let mut sorted = lines[1..].to_vec();
        sorted.sort();
        assert_eq!(sorted, lines[1..]);

        let cb_only = ReportOptions {
            shares: false,
            ..all_on()
        };
        let r = build_report(&inputs, &cb_only).unwrap();
        let json = emit_json(&r);
        assert!(!json.contains("\"shares\"") && !json.contains("\"distdiff\""));
    }

    #[test]
    fn svg_examples() {
        // log(0.25) and log(0.75) give shares in a 1:3 ratio
        let r = build_report(
            &[model(
                "m",
                vec![set_input("s", Category::Gender, vec![0.25f64.ln(), 0.75f64.ln()])],
            )],
            &all_on(),
        )
        .unwrap();
        let svg = emit_svg_shares(&r, "s", "nurse", &SvgOptions::default()).unwrap();
        let w = svg_widths(&svg);
        assert_eq!(w, [150.0, 450.0]);
        assert!(svg.contains(">he 0.250<") && svg.contains(">she 0.750<"));
        assert!(svg.starts_with("<?xml") && svg.contains(r#"version="1.1""#));
        assert!(matches!(
            emit_svg_shares(&r, "s", "chef", &SvgOptions::default()),
            Err(ReportError::UnknownSetOrConcept { .. })
        ));
        assert_eq!(segment_geometry(&[1.0], 130.0, 600.0), [(130.0, 600.0)]);
        assert_eq!(escape_xml("<a & 'b'>"), "&lt;a &amp; &apos;b&apos;&gt;");
    }

    proptest! {
        #[test]
        fn segment_widths_fill_bar(raw in proptest::collection::vec(0.001f64..1.0, 1..12), bar in 50.0f64..1200.0) {
            let total: f64 = raw.iter().sum();
            let shares: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let widths: f64 = segment_geometry(&shares, 130.0, bar).iter().map(|g| g.1).sum();
            prop_assert!((widths - bar).abs() <= 0.5);
        }

        #[test]
        fn json_round_trip(a in -60.0f64..0.0, b in -60.0f64..0.0, c in -60.0f64..0.0, d in -60.0f64..0.0) {
            let inputs = [
                model("x", vec![set_input("s", Category::Gender, vec![a, b]), set_input("t", Category::Religion, vec![c, d])]),
                model("y", vec![set_input("t", Category::Religion, vec![d, c]), set_input("s", Category::Gender, vec![b, a])]),
            ];
            let r = build_report(&inputs, &all_on()).unwrap();
            prop_assert_eq!(parse(&emit_json(&r)).unwrap(), r);
        }

        #[test]
        fn csv_distinguishes_reports(a in -60.0f64..0.0, b in -60.0f64..0.0, d in 1e-6f64..5.0) {
            let one = build_report(&[model("m", vec![set_input("s", Category::Gender, vec![a, b])])], &all_on()).unwrap();
            let two = build_report(&[model("m", vec![set_input("s", Category::Gender, vec![a, b + d])])], &all_on()).unwrap();
            prop_assert_ne!(emit_csv(&one), emit_csv(&two));
        }
    }
}
