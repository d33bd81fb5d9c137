//! Run configuration and the inputs it points at.
//!
//! Relative paths inside a config file resolve against the file's
//! directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use biasprobe_core::backend::{FixtureBackend, HttpBackend, HttpOptions, MlmBackend};
use biasprobe_core::lexicon::{load_lexicon, validate_lexicon, Category, Diagnostic, Lexicon, Severity};
use biasprobe_core::template::{
    bind_template_set, import_corpus_templates, load_template_set, Binding, ImportOptions,
    TemplateSet,
};

use crate::error::CliError;

pub const BACKEND_URL_ENV: &str = "BIASPROBE_BACKEND_URL";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub template_sets: Vec<SetSource>,
    #[serde(default)]
    pub metrics: MetricToggles,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_true")]
    pub strict_import: bool,
    #[serde(default = "default_mask_positions")]
    pub distdiff_max_mask_positions: usize,
    #[serde(default)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub lexicon: PathBuf,
    #[serde(default)]
    pub backend: Option<BackendSpec>,
    /// Replaces the top-level list for this model.
    #[serde(default)]
    pub template_sets: Option<Vec<SetSource>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendSpec {
    Fixture { path: PathBuf },
    Http { url: String },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SetSource {
    File(PathBuf),
    Corpus(CorpusSource),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSource {
    pub corpus: PathBuf,
    pub id: String,
    pub category: Category,
    pub bindings: BTreeMap<String, Binding>,
    #[serde(default)]
    pub slot_marker: Option<String>,
    #[serde(default)]
    pub attribute_slot: Option<String>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricToggles {
    #[serde(default = "default_true")]
    pub cb: bool,
    #[serde(default = "default_true")]
    pub shares: bool,
    #[serde(default)]
    pub distdiff: bool,
    #[serde(default)]
    pub normprob: bool,
}

impl Default for MetricToggles {
    fn default() -> Self {
        Self {
            cb: true,
            shares: true,
            distdiff: false,
            normprob: false,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_concurrency() -> usize {
    4
}

fn default_true() -> bool {
    true
}

fn default_mask_positions() -> usize {
    1
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub backend_url: Option<String>,
    pub max_concurrency: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub timestamp: Option<String>,
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

fn resolve_sources(base: &Path, sources: &mut [SetSource]) {
    for source in sources {
        match source {
            SetSource::File(p) => resolve(base, p),
            SetSource::Corpus(c) => resolve(base, &mut c.corpus),
        }
    }
}

/// Ids end up in file names, so they are restricted to a portable set.
pub fn check_file_id(what: &str, id: &str) -> Result<(), CliError> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{what} `{id}` must be non-empty and use only letters, digits, `_`, `-` or `.`"
        )))
    }
}

impl RunConfig {
    /// `need_backend` is false for commands that never contact a model.
    pub fn load(path: &Path, overrides: &Overrides, need_backend: bool) -> Result<Self, CliError> {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut de = serde_json::Deserializer::from_reader(BufReader::new(file));
        let mut config: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            if e.inner().is_io() {
                CliError::io(path, e.inner())
            } else {
                CliError::Validation(format!("{}: `{}`: {}", path.display(), e.path(), e.inner()))
            }
        })?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        config.apply(&base, overrides, std::env::var(BACKEND_URL_ENV).ok(), need_backend)?;
        Ok(config)
    }

    fn apply(
        &mut self,
        base: &Path,
        overrides: &Overrides,
        env_url: Option<String>,
        need_backend: bool,
    ) -> Result<(), CliError> {
        resolve(base, &mut self.output_dir);
        resolve_sources(base, &mut self.template_sets);
        for model in &mut self.models {
            resolve(base, &mut model.lexicon);
            if let Some(BackendSpec::Fixture { path }) = &mut model.backend {
                resolve(base, path);
            }
            if let Some(sources) = &mut model.template_sets {
                resolve_sources(base, sources);
            }
        }
        if let Some(dir) = &overrides.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(n) = overrides.max_concurrency {
            self.max_concurrency = n;
        }
        if overrides.timestamp.is_some() {
            self.timestamp = overrides.timestamp.clone();
        }

        if self.models.is_empty() {
            return Err(CliError::Validation("config lists no models".into()));
        }
        if self.max_concurrency < 1 {
            return Err(CliError::Validation("max_concurrency must be at least 1".into()));
        }
        if self.distdiff_max_mask_positions < 1 {
            return Err(CliError::Validation(
                "distdiff_max_mask_positions must be at least 1".into(),
            ));
        }
        if let Some(url) = &overrides.backend_url {
            if self.models.len() != 1 {
                return Err(CliError::Validation(
                    "--backend-url needs a config with exactly one model".into(),
                ));
            }
            self.models[0].backend = Some(BackendSpec::Http { url: url.clone() });
        }
        for (i, model) in self.models.iter().enumerate() {
            check_file_id("model name", &model.name)?;
            if self.models[..i].iter().any(|m| m.name == model.name) {
                return Err(CliError::Validation(format!(
                    "model `{}` is configured twice",
                    model.name
                )));
            }
        }
        let single = self.models.len() == 1;
        for model in &mut self.models {
            if model.backend.is_none() && need_backend {
                match (&env_url, single) {
                    (Some(url), true) => model.backend = Some(BackendSpec::Http { url: url.clone() }),
                    _ => {
                        return Err(CliError::Validation(format!(
                            "model `{}` has no backend (set one in the config, or {BACKEND_URL_ENV} for a single-model run)",
                            model.name
                        )))
                    }
                }
            }
            let sources = model.template_sets.as_ref().unwrap_or(&self.template_sets);
            if sources.is_empty() {
                return Err(CliError::Validation(format!(
                    "model `{}` has no template sets",
                    model.name
                )));
            }
        }
        Ok(())
    }

    pub fn sources_for<'a>(&'a self, model: &'a ModelConfig) -> &'a [SetSource] {
        model.template_sets.as_deref().unwrap_or(&self.template_sets)
    }
}

/// Loads a lexicon, returning its warnings alongside.
pub fn read_lexicon(path: &Path) -> Result<(Lexicon, Vec<Diagnostic>), CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let lexicon = load_lexicon(BufReader::new(file)).map_err(|e| CliError::lexicon(path, e))?;
    let warnings = validate_lexicon(&lexicon)
        .into_iter()
        .filter(|d| d.severity == Severity::Warning)
        .collect();
    Ok((lexicon, warnings))
}

pub fn read_template_set(path: &Path, lexicon: &Lexicon) -> Result<TemplateSet, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    load_template_set(BufReader::new(file), lexicon).map_err(|e| CliError::template_set(path, e))
}

/// Builds a template set from a source, printing skipped corpus lines to
/// stderr.
pub fn read_set_source(
    source: &SetSource,
    lexicon: &Lexicon,
    strict_import: bool,
) -> Result<TemplateSet, CliError> {
    match source {
        SetSource::File(path) => read_template_set(path, lexicon),
        SetSource::Corpus(c) => {
            let file = File::open(&c.corpus).map_err(|e| CliError::io(&c.corpus, e))?;
            let defaults = ImportOptions::default();
            let options = ImportOptions {
                slot_marker: c.slot_marker.clone().unwrap_or(defaults.slot_marker),
                attribute_slot: c.attribute_slot.clone().unwrap_or(defaults.attribute_slot),
                strict: strict_import,
            };
            let imported = import_corpus_templates(BufReader::new(file), &options)
                .map_err(|e| CliError::import(&c.corpus, e))?;
            for w in &imported.skipped {
                eprintln!("warning: {}:{}: {}", c.corpus.display(), w.line, w.message);
            }
            bind_template_set(
                c.id.clone(),
                c.category,
                imported.templates,
                c.bindings.clone(),
                lexicon,
            )
            .map_err(|e| CliError::Validation(format!("{}: {e}", c.corpus.display())))
        }
    }
}

pub struct LoadedModel {
    pub config: ModelConfig,
    pub warnings: usize,
    pub lexicon: Lexicon,
    pub sets: Vec<TemplateSet>,
}

pub fn load_models(config: &RunConfig) -> Result<Vec<LoadedModel>, CliError> {
    let mut out = Vec::with_capacity(config.models.len());
    for model in &config.models {
        let (lexicon, diagnostics) = read_lexicon(&model.lexicon)?;
        let mut warnings = 0;
        for w in diagnostics {
            eprintln!("{}: {w}", model.lexicon.display());
            warnings += 1;
        }
        let mut sets: Vec<TemplateSet> = Vec::new();
        for source in config.sources_for(model) {
            let set = read_set_source(source, &lexicon, config.strict_import)?;
            check_file_id("template set id", &set.id)?;
            if sets.iter().any(|s| s.id == set.id) {
                return Err(CliError::Validation(format!(
                    "model `{}` lists template set `{}` twice",
                    model.name, set.id
                )));
            }
            sets.push(set);
        }
        out.push(LoadedModel {
            config: model.clone(),
            warnings,
            lexicon,
            sets,
        });
    }
    Ok(out)
}

pub fn make_backend(
    model: &ModelConfig,
    max_concurrency: usize,
) -> Result<Arc<dyn MlmBackend>, CliError> {
    match model.backend.as_ref().expect("backend resolved at load") {
        BackendSpec::Fixture { path } => {
            let file = File::open(path).map_err(|e| CliError::io(path, e))?;
            let backend = FixtureBackend::from_reader(BufReader::new(file))
                .map_err(|e| CliError::fixture(path, e))?;
            Ok(Arc::new(backend.with_concurrency(max_concurrency)))
        }
        BackendSpec::Http { url } => {
            let options = HttpOptions {
                max_concurrency,
                ..HttpOptions::default()
            };
            let backend = HttpBackend::new(url, options).map_err(|e| CliError::backend(&model.name, e))?;
            Ok(Arc::new(backend))
        }
    }
}
