//! Chest-x-ray screening and per-file tag anonymization.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::codec::{has_magic, DicomFile};
use crate::error::Result;
use crate::rules::{Action, TagRule};
use crate::tags::{is_text_vr, Tag};

/// Study-description fragments that mark a file as not a chest x-ray.
pub const EXCLUDED_WORDS: [&str; 4] = ["mammo", "spine", "upper extremities", "lower extremities"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMode {
    /// Header check and study-description word filter.
    #[default]
    Strict,
    /// Header check only.
    Faithful,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Invalid {
    NoHeader,
    ExcludedStudyDescription(String),
}

impl Invalid {
    pub fn kind(&self) -> &'static str {
        match self {
            Invalid::NoHeader => "NoHeader",
            Invalid::ExcludedStudyDescription(_) => "ExcludedStudyDescription",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    Invalid(Invalid),
}

pub fn validate_cxr(bytes: &[u8], study_description: Option<&str>, mode: ValidationMode) -> Verdict {
    if !has_magic(bytes) {
        return Verdict::Invalid(Invalid::NoHeader);
    }
    if mode == ValidationMode::Strict {
        if let Some(desc) = study_description {
            let lower = desc.to_lowercase();
            if let Some(w) = EXCLUDED_WORDS.iter().find(|w| lower.contains(*w)) {
                return Verdict::Invalid(Invalid::ExcludedStudyDescription(w.to_string()));
            }
        }
    }
    Verdict::Valid
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HashEntry {
    /// Dictionary name of the tag, as used for the Hashes.csv columns.
    pub name: String,
    pub original: String,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct AnonRecord {
    /// Source path as found during the walk.
    pub source: String,
    /// Base name of the written file.
    pub output: String,
    pub patient_id: Option<String>,
    pub accession_number: Option<String>,
    pub study_instance_uid: Option<String>,
    pub series_instance_uid: Option<String>,
    pub sop_instance_uid: Option<String>,
    pub hashes: Vec<HashEntry>,
    /// Error type names of per-tag failures; the failing tags were blanked.
    pub errors: Vec<String>,
    /// Accession number absent or empty after anonymization.
    pub accession_missing: bool,
}

fn hash_in_place(file: &mut DicomFile, tag: Tag) -> Result<HashEntry, &'static str> {
    let e = file.get(tag).expect("checked present");
    if !is_text_vr(e.vr) {
        return Err("NonTextValue");
    }
    let value = e.value().ok_or("UndefinedLength")?;
    let original = std::str::from_utf8(value)
        .map_err(|_| "InvalidText")?
        .trim_end_matches([' ', '\0'])
        .to_string();
    let hash = sha256_hex(&original);
    file.set_value(tag, hash.as_bytes()).map_err(|_| "ValueTooLong")?;
    Ok(HashEntry { name: tag.name(), original, hash })
}

/// Applies `rules` in order. Absent tags are skipped; a rule that fails
/// leaves its tag blank and records the error type.
pub fn anonymize_file(mut file: DicomFile, rules: &[TagRule]) -> (DicomFile, AnonRecord) {
    let text = |f: &DicomFile, t: Tag| f.text(t).map(str::to_string);
    let mut record = AnonRecord {
        patient_id: text(&file, Tag::PATIENT_ID),
        accession_number: text(&file, Tag::ACCESSION_NUMBER),
        study_instance_uid: text(&file, Tag::STUDY_INSTANCE_UID),
        series_instance_uid: text(&file, Tag::SERIES_INSTANCE_UID),
        sop_instance_uid: text(&file, Tag::SOP_INSTANCE_UID),
        ..AnonRecord::default()
    };
    for rule in rules {
        if file.get(rule.tag).is_none() {
            continue;
        }
        let outcome = match rule.action {
            Action::Keep => Ok(()),
            Action::Blank => file.set_value(rule.tag, b"").map_err(|_| "BlankFailed"),
            Action::Hash => hash_in_place(&mut file, rule.tag).map(|h| record.hashes.push(h)),
        };
        if let Err(kind) = outcome {
            file.set_value(rule.tag, b"").expect("empty value always encodes");
            record.errors.push(kind.to_string());
        }
    }
    record.accession_missing = match file.get(Tag::ACCESSION_NUMBER) {
        None => true,
        Some(e) => e.value().is_some_and(|v| v.iter().all(|&b| b == b' ' || b == 0)),
    };
    (file, record)
}
