use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("row {row} has zero norm and cannot be normalized")]
    ZeroRow { row: usize },
    #[error("row {row} is not unit length (norm {norm})")]
    NonUnitRows { row: usize, norm: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("malformed patch file name `{0}`")]
    MalformedName(String),
    #[error("dataset contains no valid patches")]
    EmptyDataset,
    #[error("duplicate coordinate ({x}, {y}) for patient `{patient_id}`")]
    DuplicateCoordinate { patient_id: String, x: u32, y: u32 },
    #[error("split asks for {expected} patients but the dataset has {found}")]
    PatientCountMismatch { expected: usize, found: usize },
    #[error("no anchor in the batch has a positive ({0})")]
    NoPositives(String),
    #[error("non-finite loss in {stage} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { stage: &'static str, epoch: usize, batch: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("patches overlap at pixel ({x}, {y})")]
    Overlap { x: u32, y: u32 },
    #[error("records belong to more than one patient (`{0}` and `{1}`)")]
    MixedPatients(String, String),
    #[error("unknown augmentation policy `{0}`")]
    UnknownPolicy(String),
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
}
