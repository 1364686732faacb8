use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// `row` is the 1-based data row of the rules CSV.
    #[error("bad DICOM tag {text:?} in rules row {row}")]
    BadTagSyntax { row: usize, text: String },

    #[error("rules CSV is missing column `{0}`")]
    MissingColumn(String),

    #[error("not a DICOM Part-10 file: {0}")]
    Unreadable(String),

    #[error("unsupported transfer syntax {0}")]
    UnsupportedTransferSyntax(String),

    #[error("{0} is not a directory")]
    NotADirectory(std::path::PathBuf),

    #[error("output file {0} already exists")]
    OutputCollision(std::path::PathBuf),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short type name written to the audit CSVs.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::BadTagSyntax { .. } => "BadTagSyntax",
            Error::MissingColumn(_) => "MissingColumn",
            Error::Unreadable(_) => "UnreadableFile",
            Error::UnsupportedTransferSyntax(_) => "UnsupportedTransferSyntax",
            Error::NotADirectory(_) => "NotADirectory",
            Error::OutputCollision(_) => "OutputNameCollision",
            Error::Csv(_) => "CsvError",
            Error::Io(_) => "IoError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
