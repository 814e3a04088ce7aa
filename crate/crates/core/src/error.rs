use thiserror::Error;

use crate::io::ParseError;
use crate::policy::{EntityKind, Modality, ValidationReport};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown {kind} `{name}`")]
    UnknownEntity { kind: EntityKind, name: String },

    #[error("action `{0}` is not a leaf and cannot be requested")]
    NotExecutable(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(ValidationReport),

    #[error("policies do not share the same entity declarations")]
    UniverseMismatch,

    #[error("mutation score needs at least one mutant")]
    EmptyMutantSet,

    #[error("no rule with id `{0}`")]
    NoSuchRule(String),

    #[error("rule `{id}` is a {found}, not a {expected}")]
    ModalityMismatch {
        id: String,
        expected: Modality,
        found: Modality,
    },

    #[error("rule `{0}` duplicates an existing rule")]
    DuplicateRule(String),

    #[error("micro-evolution at index {index} failed: {source}")]
    Evolution {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("suite was generated for policy hash {expected}, got {found}")]
    StaleSuite { expected: String, found: String },

    #[error("suite file has no cases, its source policy is unknown")]
    EmptySuite,

    #[error("{}", render_parse_errors(.0))]
    Parse(Vec<ParseError>),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn render_parse_errors(errors: &[ParseError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}
