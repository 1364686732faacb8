//! Rule-driven batch anonymization of chest x-ray DICOM files.
//!
//! Rules name a tag and an action (hash, blank or keep). Hashing replaces a
//! text value with the lowercase hex SHA-256 of its UTF-8 bytes. A batch
//! walks an input tree, screens files, writes anonymized copies under their
//! base names and emits `AccessionNotAvailableData.csv`, `Errors.csv` and
//! `Hashes.csv`.

pub mod anonymize;
pub mod batch;
pub mod codec;
pub mod error;
pub mod rules;
pub mod tags;

pub use anonymize::{anonymize_file, sha256_hex, validate_cxr, AnonRecord, HashEntry, ValidationMode, Verdict};
pub use batch::{run_batch, BatchOptions, BatchReport, Rejection};
pub use codec::DicomFile;
pub use error::{Error, Result};
pub use rules::{load_rules, Action, TagRule};
pub use tags::Tag;
