use thiserror::Error;

pub type Result<T, E = PdsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PdsError {
    #[error("duplicate {kind} label `{label}`")]
    DuplicateLabel { kind: &'static str, label: String },

    #[error("shared labels too few: {perturbations} perturbation(s) and {genes} gene(s); need at least 2 and 1")]
    EmptyIntersection { perturbations: usize, genes: usize },

    #[error("predicted and truth {kind} labels differ")]
    LabelMismatch { kind: &'static str },

    #[error("shape mismatch: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("matrix must have at least one row and one column")]
    EmptyMatrix,

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("unknown perturbation `{0}`")]
    UnknownPerturbation(String),

    #[error("unknown gene `{0}`")]
    UnknownGene(String),

    #[error("masking the target of `{0}` leaves no coordinates")]
    EmptyView(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("cosine undefined for a zero vector")]
    ZeroVector,

    #[error("sign cosine undefined for an all-zero sign vector")]
    ZeroSignVector,

    #[error("index {index} out of range for length {len}")]
    BadIndex { index: usize, len: usize },

    #[error("non-finite distance at position {0}")]
    NonFiniteDistance(usize),

    #[error("at least 2 perturbations are required, got {0}")]
    TooFewPerturbations(usize),

    #[error("scale factor must be positive and finite, got {0}")]
    NonpositiveScale(f64),

    #[error("prediction for `{0}` has zero norm and cannot be norm-matched")]
    ZeroPredictionNorm(String),

    #[error("anchor {anchor}: candidates {first} and {second} tie in the limit but differ in norm; no finite threshold")]
    DegeneratePair {
        anchor: usize,
        first: usize,
        second: usize,
    },

    #[error("norms must be positive and finite")]
    NonpositiveNorm,

    #[error("bad parameter: {0}")]
    BadParameter(String),

    #[error("cell `{0}` has zero library size")]
    ZeroLibrarySize(String),

    #[error("no control cells")]
    MissingControl,

    #[error("invalid synthetic spec: {0}")]
    BadSpec(String),

    #[error("no anchor could be scored")]
    NoScorableAnchors,

    #[error("line {line}, column {column}: {reason}")]
    Parse {
        line: u64,
        column: usize,
        reason: String,
    },

    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
