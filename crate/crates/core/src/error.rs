use std::path::PathBuf;

use thiserror::Error;

use crate::sampler::DeficitReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate record id {id:?} (line {line})")]
    DuplicateId { id: String, line: usize },

    #[error("line {line}: unknown source {source_name:?}, expected one of {expected:?}")]
    UnknownSource {
        line: usize,
        source_name: String,
        expected: [String; 2],
    },

    #[error("record {0:?} has neither text nor features")]
    EmptyRecord(String),

    #[error("empty vocabulary (min_df = {min_df})")]
    EmptyVocabulary { min_df: usize },

    #[error("record {0:?} has no text")]
    MissingText(String),

    #[error("embedding table: {0}")]
    Embedding(String),

    #[error("embedding table is missing {} id(s): {}", .0.len(), .0.join(", "))]
    MissingEmbeddings(Vec<String>),

    #[error("P_train(y=1|z=0) is zero, alpha_train is undefined")]
    UndefinedRatio,

    #[error("degenerate setting: C_y = {cy} is outside (0, 1)")]
    DegenerateSetting { cy: f64 },

    #[error("infeasible rates: P(y=1|z=0) = {p_z0}, P(y=1|z=1) = {p_z1}")]
    InfeasibleRates { p_z0: f64, p_z1: f64 },

    #[error("insufficient records: {0}")]
    Insufficient(DeficitReport),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("labels contain a single class")]
    SingleClass,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("model has no provenance weights")]
    NotAdjusted,

    #[error("no positive labels")]
    NoPositives,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("fewer than two distinct alpha values")]
    DegenerateSlope,

    #[error("synthetic config: {0}")]
    SynthConfig(String),

    #[error("token {token:?} in record {id:?} is impossible under the generating config")]
    ImpossibleToken { id: String, token: String },

    #[error("config: {0}")]
    Config(String),

    #[error("no feasible settings in the grid ({skipped} skipped)")]
    NoFeasibleSettings { skipped: usize },

    #[error("setting {setting_id}, repeat {repeat}: {source}")]
    Cell {
        setting_id: usize,
        repeat: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
