//! Library side of the `genrelay` command: configuration resolution and
//! scenario execution, shared by the binary and its tests.

// Negated float comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod scenario;

use std::path::{Path, PathBuf};

use serde_json::json;
use toml::Table;

pub use config::{apply_override, resolve, validate, Diagnostic, Resolved, Scenario};
pub use scenario::{execute, load, LoadError, RunSummary, ScenarioError};

/// Failure of a command, mapped onto an exit code and a JSON error record.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration invalid ({} problem(s))", .0.len())]
    ConfigInvalid(Vec<Diagnostic>),
    #[error("{0}")]
    FileUnreadable(String),
    #[error("scenario failed: {0}")]
    ScenarioFailed(#[from] ScenarioError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid(_) | CliError::FileUnreadable(_) => 2,
            CliError::ScenarioFailed(_) => 3,
        }
    }

    pub fn record(&self) -> serde_json::Value {
        match self {
            CliError::ConfigInvalid(d) => json!({"error": "config-invalid", "diagnostics": d}),
            CliError::FileUnreadable(m) => json!({"error": "file-unreadable", "message": m}),
            CliError::ScenarioFailed(e) => {
                json!({"error": "scenario-failed", "kind": e.kind(), "message": e.to_string()})
            }
        }
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Unreadable(m) => CliError::FileUnreadable(m),
            LoadError::Parse(m) => CliError::ConfigInvalid(vec![Diagnostic {
                path: String::new(),
                message: m,
            }]),
        }
    }
}

/// Command-line settings layered over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    /// `key=value` pairs with dotted keys.
    pub set: Vec<String>,
}

/// Loads `config` (or starts empty) and applies `overrides`.
pub fn document(config: Option<&Path>, overrides: &Overrides) -> Result<(Table, PathBuf), CliError> {
    let (mut doc, base) = match config {
        Some(p) => load(p)?,
        None => (Table::new(), PathBuf::from(".")),
    };
    let mut diags = Vec::new();
    for kv in &overrides.set {
        match kv.split_once('=') {
            Some((k, v)) => {
                if let Err(d) = apply_override(&mut doc, k.trim(), v.trim()) {
                    diags.push(d);
                }
            }
            None => diags.push(Diagnostic {
                path: kv.clone(),
                message: "override must look like key=value".into(),
            }),
        }
    }
    if let Some(s) = &overrides.scenario {
        doc.insert("scenario".into(), toml::Value::String(s.clone()));
    }
    if let Some(seed) = overrides.seed {
        match i64::try_from(seed) {
            Ok(v) => {
                doc.insert("seed".into(), toml::Value::Integer(v));
            }
            Err(_) => diags.push(Diagnostic {
                path: "seed".into(),
                message: "seed must fit in a signed 64-bit integer".into(),
            }),
        }
    }
    if let Some(o) = &overrides.out {
        doc.insert("out".into(), toml::Value::String(o.display().to_string()));
    }
    if let Some(w) = overrides.workers {
        doc.insert("workers".into(), toml::Value::Integer(w as i64));
    }
    if diags.is_empty() {
        Ok((doc, base))
    } else {
        Err(CliError::ConfigInvalid(diags))
    }
}

/// Resolves and executes a document.
pub fn run_document(doc: &Table, base: &Path) -> Result<RunSummary, CliError> {
    let resolved = resolve(doc, base).map_err(CliError::ConfigInvalid)?;
    Ok(execute(&resolved)?)
}
