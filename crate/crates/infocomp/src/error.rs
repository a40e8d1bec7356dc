//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: invalid shape {shape:?}: {msg}")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        msg: String,
    },

    #[error("label index {index} out of range for {n_classes} classes")]
    LabelOutOfRange { index: usize, n_classes: usize },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("token id {id} out of range for vocab size {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },

    #[error("task {0} already exists")]
    DuplicateTask(usize),

    #[error("unknown task {0}")]
    UnknownTask(usize),

    #[error("missing P-Prompt for task {0}")]
    MissingPrompt(usize),

    #[error("task {task}: {split} split is empty")]
    EmptySplit { task: usize, split: &'static str },

    #[error("task {task}: loss diverged (non-finite) at epoch {epoch}, step {step}")]
    Diverged {
        task: usize,
        epoch: usize,
        step: usize,
    },

    #[error("class {label:?} has only {have} training examples, need more than {need}")]
    ClassTooSmall {
        label: String,
        have: usize,
        need: usize,
    },

    #[error("{path}:{line}: malformed record: {msg}")]
    MalformedLine {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("label {label:?} appears in {split} but not in the training split")]
    UnknownLabel { label: String, split: &'static str },

    #[error("unknown mode {0:?} (expected finetune, shared_prompt, per_task_prompt, progprompt, or infocomp)")]
    UnknownMode(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("report schema version {found} does not match expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("report is missing entries: {0}")]
    IncompleteReport(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
