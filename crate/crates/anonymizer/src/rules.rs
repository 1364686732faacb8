//! Tag rules loaded from the anonymization CSV.

use std::io::Read;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tags::Tag;

pub const COL_TAG: &str = "DicomTags";
pub const COL_HASH: &str = "Hashing";
pub const COL_BLANK: &str = "Anonymisation Required";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Hash,
    Blank,
    Keep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TagRule {
    pub tag: Tag,
    pub action: Action,
}

impl TagRule {
    pub fn new(tag: Tag, action: Action) -> Self {
        TagRule { tag, action }
    }
}

/// Reads rules from a CSV with `DicomTags`, `Hashing` and
/// `Anonymisation Required` columns. `Hashing = Yes` wins over
/// `Anonymisation Required = Yes`.
pub fn load_rules<R: Read>(reader: R) -> Result<Vec<TagRule>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::Headers).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (ct, ch, cb) = (col(COL_TAG)?, col(COL_HASH)?, col(COL_BLANK)?);
    let mut rules = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let field = |c: usize| row.get(c).unwrap_or("").trim();
        let text = field(ct);
        let tag: Tag = text.parse().map_err(|_| Error::BadTagSyntax { row: i + 1, text: text.to_string() })?;
        let action = if field(ch) == "Yes" {
            Action::Hash
        } else if field(cb) == "Yes" {
            Action::Blank
        } else {
            Action::Keep
        };
        rules.push(TagRule { tag, action });
    }
    Ok(rules)
}
