use std::path::PathBuf;

use thiserror::Error;

use crate::boundary::FitDiagnostics;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest parse error at line {line}: {message}")]
    ManifestParse { line: u64, message: String },

    #[error("duplicate sample_id `{0}` in manifest")]
    DuplicateSampleId(String),

    #[error("invalid record `{sample_id}`: {message}")]
    InvalidRecord { sample_id: String, message: String },

    #[error("cannot decode image {path}: {message}")]
    ImageDecode { path: PathBuf, message: String },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("sample `{0}` has no coarse mask path")]
    MissingMask(String),

    #[error("segmentation failed for `{0}`: empty coarse mask")]
    SegmentationFailure(String),

    #[error("no edge points to fit")]
    NoEdges,

    #[error("circle fit failed: {reason}")]
    FitFailure {
        reason: String,
        diagnostics: Box<FitDiagnostics>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("filter-bank fingerprint mismatch: {0:016x} vs {1:016x}")]
    FingerprintMismatch(u64, u64),

    #[error("code geometry mismatch: {0}")]
    CodeGeometry(String),

    #[error("malformed iris code file: {0}")]
    CodeFormat(String),

    #[error("score undefined: no commonly unmasked bits")]
    UndefinedScore,

    #[error("cannot estimate N from an empty impostor set")]
    EmptyImpostorSet,

    #[error("need at least two samples to form pairs, got {0}")]
    TooFewSamples(usize),

    #[error("score set needs both genuine and impostor records ({genuine} genuine, {impostor} impostor)")]
    OneClass { genuine: usize, impostor: usize },

    #[error("unknown sample id `{0}`")]
    UnknownSample(String),

    #[error("score file parse error at line {line}: {message}")]
    ScoreParse { line: u64, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::ManifestParse { .. } => "manifest_parse",
            Error::DuplicateSampleId(_) => "duplicate_sample_id",
            Error::InvalidRecord { .. } => "invalid_record",
            Error::ImageDecode { .. } => "image_decode",
            Error::InvalidImage(_) => "invalid_image",
            Error::MissingMask(_) => "missing_mask",
            Error::SegmentationFailure(_) => "segmentation_failure",
            Error::NoEdges => "no_edges",
            Error::FitFailure { .. } => "fit_failure",
            Error::Config(_) => "config",
            Error::FingerprintMismatch(..) => "fingerprint_mismatch",
            Error::CodeGeometry(_) => "code_geometry",
            Error::CodeFormat(_) => "code_format",
            Error::UndefinedScore => "undefined_score",
            Error::EmptyImpostorSet => "empty_impostor_set",
            Error::TooFewSamples(_) => "too_few_samples",
            Error::OneClass { .. } => "one_class",
            Error::UnknownSample(_) => "unknown_sample",
            Error::ScoreParse { .. } => "score_parse",
            Error::InvalidArgument(_) => "invalid_argument",
        }
    }
}
