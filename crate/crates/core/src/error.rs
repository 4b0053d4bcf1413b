use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: {message}")]
    Semantic { field: String, message: String },
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("qber {0} outside [0, 0.5]")]
pub struct QberDomainError(pub f64);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KmsError {
    #[error("insufficient key: {available} bytes buffered, {requested} requested")]
    InsufficientKey { available: u64, requested: u64 },
    #[error("unknown or already consumed key id {0}")]
    UnknownKey(String),
    #[error("key request size must be > 0")]
    ZeroSize,
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv {what}: {source}")]
    Csv {
        what: String,
        #[source]
        source: csv::Error,
    },
    #[error("json {what}: {source}")]
    Json {
        what: String,
        #[source]
        source: serde_json::Error,
    },
}
