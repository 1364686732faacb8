use thiserror::Error;

/// Errors raised by cohort ingestion and the analysis kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing required column `{0}`")]
    MissingColumn(String),

    /// `row` is the 1-based data row (the header is not counted).
    #[error("bad value {value:?} in row {row}, column `{column}`")]
    BadValue {
        row: usize,
        column: String,
        value: String,
    },

    #[error("duplicate id in row {0}")]
    DuplicateId(usize),

    #[error("empty id in row {0}")]
    EmptyId(usize),

    #[error("score {value} is outside the {scale} range")]
    OutOfRange { value: f64, scale: &'static str },

    #[error("record has no radiologist grade")]
    MissingGrade,

    #[error("cohort is empty")]
    EmptyCohort,

    #[error("both positive and negative subjects are required")]
    DegenerateLabels,

    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),

    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),

    #[error("confidence level {0} is not in (0, 1)")]
    BadLevel(f64),

    #[error("proportion needs at least one trial")]
    ZeroTrials,

    #[error("invalid counts: {0}")]
    InvalidCounts(String),

    #[error("unknown product `{0}`")]
    UnknownProduct(String),

    #[error("no stratum has at least 2 positives and 2 negatives")]
    NoAnalyzableStrata,

    #[error("bad synthetic spec: {0}")]
    BadSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingColumn(_) => "MissingColumn",
            Error::BadValue { .. } => "BadValue",
            Error::DuplicateId(_) => "DuplicateId",
            Error::EmptyId(_) => "EmptyId",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::MissingGrade => "MissingGrade",
            Error::EmptyCohort => "EmptyCohort",
            Error::DegenerateLabels => "DegenerateLabels",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::NonFiniteScore(_) => "NonFiniteScore",
            Error::BadLevel(_) => "BadLevel",
            Error::ZeroTrials => "ZeroTrials",
            Error::InvalidCounts(_) => "InvalidCounts",
            Error::UnknownProduct(_) => "UnknownProduct",
            Error::NoAnalyzableStrata => "NoAnalyzableStrata",
            Error::BadSpec(_) => "BadSpec",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Csv(_) => "Csv",
            Error::Io(_) => "Io",
        }
    }
}
