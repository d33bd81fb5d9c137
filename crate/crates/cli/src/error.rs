use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use biasprobe_core::backend::{BackendError, FixtureError};
use biasprobe_core::lexicon::LexiconError;
use biasprobe_core::metrics::MetricsError;
use biasprobe_core::report::ReportError;
use biasprobe_core::scoring::ScoringError;
use biasprobe_core::template::{ExpandError, ImportError, TemplateSetError};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
    Backend(String),
    Unexpected(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Unexpected(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Io(_) => 3,
            CliError::Backend(_) => 4,
        })
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    pub fn lexicon(path: &Path, err: LexiconError) -> Self {
        match err {
            LexiconError::Io(e) => Self::io(path, e),
            other => CliError::Validation(format!("{}: {other}", path.display())),
        }
    }

    pub fn template_set(path: &Path, err: TemplateSetError) -> Self {
        match err {
            TemplateSetError::Io(e) => Self::io(path, e),
            other => CliError::Validation(format!("{}: {other}", path.display())),
        }
    }

    pub fn import(path: &Path, err: ImportError) -> Self {
        match err {
            ImportError::Io(e) => Self::io(path, e),
            other => CliError::Validation(format!("{}: {other}", path.display())),
        }
    }

    pub fn fixture(path: &Path, err: FixtureError) -> Self {
        CliError::Validation(format!("{}: {err}", path.display()))
    }

    pub fn expand(set_id: &str, err: ExpandError) -> Self {
        CliError::Validation(format!("set `{set_id}`: {err}"))
    }

    pub fn scoring(model: &str, set_id: &str, err: ScoringError) -> Self {
        let place = match err.coordinates() {
            Some((t, a, n)) => format!("set `{set_id}` at (t={t}, a={a}, n={n})"),
            None => format!("set `{set_id}`"),
        };
        let message = format!("model `{model}`, {place}: {err}");
        match err {
            ScoringError::Expand(_) => CliError::Validation(message),
            _ => CliError::Backend(message),
        }
    }

    pub fn metrics(model: &str, set_id: &str, template: usize, err: MetricsError) -> Self {
        let message = format!("model `{model}`, set `{set_id}`, template {template}: {err}");
        match err {
            MetricsError::Backend(_) => CliError::Backend(message),
            _ => CliError::Validation(message),
        }
    }

    pub fn backend(model: &str, err: BackendError) -> Self {
        CliError::Backend(format!("model `{model}`: {err}"))
    }

    pub fn report(err: ReportError) -> Self {
        CliError::Validation(err.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Backend(m) => write!(f, "backend failure: {m}"),
            CliError::Unexpected(m) => write!(f, "{m}"),
        }
    }
}
