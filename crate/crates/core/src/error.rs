use thiserror::Error;

/// Errors raised by the numerical and training layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DsidError {
    #[error("kernel dimension mismatch: {left} vs {right}")]
    KernelDimensionMismatch { left: usize, right: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("centering requires N ≥ 2 (got {0})")]
    CenteringUndersized(usize),
    #[error("permutation test needs N ≥ 5 and n_perm ≥ 100 (got N = {n}, n_perm = {n_perm})")]
    PermutationUndersized { n: usize, n_perm: usize },
    #[error("set sizes differ: {0} vs {1}")]
    SetSizeMismatch(usize, usize),
    #[error("batch statistics undefined for a single-sample training batch")]
    BatchStatisticsUndefined,
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("empty training set")]
    EmptyTrainSet,
    #[error("empty evaluation set")]
    EmptyEvalSet,
    #[error("training set too small to form a batch of two samples")]
    TrainSetTooSmall,
    #[error("dataset has {0} distinct subject(s); leave-one-subject-out needs at least 2")]
    TooFewSubjects(usize),
    #[error("unknown subject {0}")]
    UnknownSubject(u16),
    #[error("train and evaluation sets share subject {0}")]
    SubjectLeak(u16),
    #[error(transparent)]
    Data(#[from] crate::dataio::DataError),
}

pub type Result<T, E = DsidError> = std::result::Result<T, E>;

pub(crate) fn shape_err(
    context: &'static str,
    expected: impl ToString,
    actual: impl ToString,
) -> DsidError {
    DsidError::ShapeMismatch {
        context,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
