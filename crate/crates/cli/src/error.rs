use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {message}")]
    Config { message: String, field: Option<String>, line: Option<usize>, column: Option<usize> },
    #[error("check failure: {0}")]
    Check(String),
    #[error("solver error: {0}")]
    Solver(#[from] layerscat::Error),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Machine-readable error record written to stderr and to error.json.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub status: &'static str,
    pub exit_code: i32,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

impl CliError {
    pub fn io(path: impl std::fmt::Display, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_string(), source }
    }

    pub fn from_toml(e: &toml::de::Error, text: &str) -> Self {
        let (line, column) = match e.span() {
            Some(span) => {
                let before = &text[..span.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                (Some(line), Some(column))
            }
            None => (None, None),
        };
        let field = line.and_then(|l| key_path(text, l));
        CliError::Config { message: e.message().trim().to_string(), field, line, column }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Check(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Io { .. } => 5,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        let status = match self {
            CliError::Config { .. } => "config error",
            CliError::Check(_) => "check failure",
            CliError::Solver(_) => "solver error",
            CliError::Io { .. } => "io error",
        };
        let (field, line, column) = match self {
            CliError::Config { field, line, column, .. } => (field.clone(), *line, *column),
            _ => (None, None, None),
        };
        ErrorRecord { status, exit_code: self.exit_code(), message: self.to_string(), field, line, column }
    }
}

/// Dotted key on `line` (1-based) qualified by the table header above it.
fn key_path(text: &str, line: usize) -> Option<String> {
    let lines: Vec<&str> = text.lines().collect();
    let target = lines.get(line - 1)?.trim();
    let table = lines[..line - 1]
        .iter()
        .rev()
        .map(|l| l.trim())
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    if target.starts_with('[') {
        return Some(target.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    }
    let key = target.split('=').next()?.trim();
    if key.is_empty() {
        return table;
    }
    Some(match table {
        Some(t) => format!("{t}.{key}"),
        None => key.to_string(),
    })
}
