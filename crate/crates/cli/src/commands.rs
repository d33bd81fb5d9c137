use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use biasprobe_core::backend::BackendInfo;
use biasprobe_core::metrics::{
    distribution_difference, normalized_word_probability, DistDiffOptions, KlMatrix,
    NormProbResult,
};
use biasprobe_core::report::{
    build_report, emit_csv, emit_json, emit_svg_shares, ModelInput, ReportOptions, SetInput,
    SvgOptions,
};
use biasprobe_core::scoring::{score_template_set, ScoreTensor};
use biasprobe_core::template::{expand, NO_CONCEPT};

use crate::config::{load_models, make_backend, read_lexicon, read_template_set, RunConfig};
use crate::error::CliError;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const SVG_DIR: &str = "svg";
pub const BACKEND_FILE: &str = "backend.json";

pub fn tensor_path(out: &Path, model: &str, set_id: &str) -> PathBuf {
    out.join(model).join(format!("{set_id}.tensor.json"))
}

pub fn distdiff_path(out: &Path, model: &str, set_id: &str) -> PathBuf {
    out.join(model).join(format!("{set_id}.distdiff.json"))
}

pub fn normprob_path(out: &Path, model: &str, set_id: &str) -> PathBuf {
    out.join(model).join(format!("{set_id}.normprob.json"))
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn svg_path(out: &Path, set_id: &str, concept_id: &str) -> PathBuf {
    out.join(SVG_DIR)
        .join(format!("{}__{}.svg", file_safe(set_id), file_safe(concept_id)))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Unexpected(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Loads every lexicon and template set. Returns the number of warnings.
pub fn validate(
    config: Option<&RunConfig>,
    lexicons: &[PathBuf],
    template_sets: &[PathBuf],
) -> Result<usize, CliError> {
    let mut warnings = 0;
    let mut sets = 0;
    let mut lexicon_count = 0;
    if let Some(config) = config {
        for model in load_models(config)? {
            lexicon_count += 1;
            warnings += model.warnings;
            sets += model.sets.len();
            if model.config.backend.is_some() {
                make_backend(&model.config, config.max_concurrency)?;
            }
        }
    }
    if !template_sets.is_empty() && lexicons.len() != 1 {
        return Err(CliError::Validation(
            "--template-set needs exactly one --lexicon to bind against".into(),
        ));
    }
    for path in lexicons {
        let (lexicon, diagnostics) = read_lexicon(path)?;
        for d in &diagnostics {
            eprintln!("{}: {d}", path.display());
        }
        warnings += diagnostics.len();
        lexicon_count += 1;
        for set in template_sets {
            read_template_set(set, &lexicon)?;
            sets += 1;
        }
    }
    println!("ok: {lexicon_count} lexicon(s), {sets} template set(s), {warnings} warning(s)");
    Ok(warnings)
}

pub fn expand_to(
    lexicon: &Path,
    template_set: &Path,
    out: &mut impl Write,
) -> Result<usize, CliError> {
    let (lexicon, _) = read_lexicon(lexicon)?;
    let set = read_template_set(template_set, &lexicon)?;
    let sentences = expand(&set, &lexicon).map_err(|e| CliError::expand(&set.id, e))?;
    let write_err = |e: io::Error| CliError::Io(format!("stdout: {e}"));
    for s in &sentences {
        writeln!(
            out,
            "{}\t{}\t{}",
            s.text,
            s.attribute_id,
            s.concept_id.as_deref().unwrap_or(NO_CONCEPT)
        )
        .map_err(write_err)?;
    }
    out.flush().map_err(write_err)?;
    Ok(sentences.len())
}

pub fn score(config: &RunConfig) -> Result<(), CliError> {
    let models = load_models(config)?;
    let out = &config.output_dir;
    for model in &models {
        let name = &model.config.name;
        let backend = make_backend(&model.config, config.max_concurrency)?;
        for set in &model.sets {
            let tensor = score_template_set(backend.as_ref(), set, &model.lexicon)
                .map_err(|e| CliError::scoring(name, &set.id, e))?;
            write_file(
                &tensor_path(out, name, &set.id),
                tensor.to_json().as_bytes(),
            )?;
            if set.concept_slot().is_none() {
                continue;
            }
            let templates = set.templates().len();
            if config.metrics.distdiff {
                let options = DistDiffOptions {
                    max_mask_positions: config.distdiff_max_mask_positions,
                };
                let matrices = (0..templates)
                    .map(|t| {
                        distribution_difference(backend.as_ref(), set, t, &model.lexicon, &options)
                            .map_err(|e| CliError::metrics(name, &set.id, t, e))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                write_json(&distdiff_path(out, name, &set.id), &matrices)?;
            }
            if config.metrics.normprob {
                let concepts = set
                    .concept_set(&model.lexicon)
                    .map_err(|e| CliError::Validation(e.to_string()))?
                    .map(|c| c.words.clone())
                    .unwrap_or_default();
                let mut results = Vec::new();
                for t in 0..templates {
                    for word in &concepts {
                        results.push(
                            normalized_word_probability(
                                backend.as_ref(),
                                set,
                                t,
                                &word.id,
                                &model.lexicon,
                            )
                            .map_err(|e| CliError::metrics(name, &set.id, t, e))?,
                        );
                    }
                }
                write_json(&normprob_path(out, name, &set.id), &results)?;
            }
        }
        let info = backend.info().map_err(|e| CliError::backend(name, e))?;
        write_json(&out.join(name).join(BACKEND_FILE), &info)?;
        eprintln!("scored {} set(s) for model `{name}`", model.sets.len());
    }
    Ok(())
}

pub fn report(config: &RunConfig) -> Result<(), CliError> {
    let models = load_models(config)?;
    let out = &config.output_dir;
    let mut inputs = Vec::with_capacity(models.len());
    for model in &models {
        let name = &model.config.name;
        let backend: BackendInfo = read_json(&out.join(name).join(BACKEND_FILE))?;
        let mut sets = Vec::with_capacity(model.sets.len());
        for set in &model.sets {
            let path = tensor_path(out, name, &set.id);
            let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let tensor = ScoreTensor::from_json(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            let attributes = set
                .attribute_set(&model.lexicon)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let attribute_display = tensor
                .attributes()
                .iter()
                .map(|id| {
                    attributes
                        .terms
                        .iter()
                        .find(|t| &t.id == id)
                        .map(|t| t.display.clone())
                        .ok_or_else(|| {
                            CliError::Validation(format!(
                                "{}: attribute `{id}` is not in set `{}`",
                                path.display(),
                                set.attribute_set_name()
                            ))
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let has_concepts = set.concept_slot().is_some();
            let distdiff: Vec<KlMatrix> = if config.metrics.distdiff && has_concepts {
                read_json(&distdiff_path(out, name, &set.id))?
            } else {
                Vec::new()
            };
            let normprob: Vec<NormProbResult> = if config.metrics.normprob && has_concepts {
                read_json(&normprob_path(out, name, &set.id))?
            } else {
                Vec::new()
            };
            sets.push(SetInput {
                category: set.category,
                tensor,
                attribute_display,
                distdiff,
                normprob,
            });
        }
        inputs.push(ModelInput {
            model: name.clone(),
            language: model.lexicon.language.clone(),
            backend,
            sets,
        });
    }

    let options = ReportOptions {
        timestamp: config.timestamp.clone(),
        cb: config.metrics.cb,
        shares: config.metrics.shares,
    };
    let report = build_report(&inputs, &options).map_err(CliError::report)?;
    write_file(&out.join(REPORT_JSON), emit_json(&report).as_bytes())?;
    write_file(&out.join(REPORT_CSV), &emit_csv(&report))?;
    if config.metrics.shares {
        let svg_options = SvgOptions::default();
        for set in &report.sets {
            for concept in &set.models[0].shares {
                let svg = emit_svg_shares(&report, &set.set_id, &concept.concept_id, &svg_options)
                    .map_err(CliError::report)?;
                write_file(&svg_path(out, &set.set_id, &concept.concept_id), svg.as_bytes())?;
            }
        }
    }
    eprintln!("wrote report for {} model(s) to {}", inputs.len(), out.display());
    Ok(())
}
