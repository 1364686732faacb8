//! Cohort data model and CSV ingestion.
//!
//! A cohort CSV has one row per subject. Required columns are `id`,
//! `bac_label` and at least one `score:<product>` column; products are
//! discovered from the header. Optional covariate columns are `age`,
//! `gender`, `prior_tb`, `source`, `grade` and `mtb_burden`. Scores are
//! normalized to the unit interval at ingestion, so every downstream
//! threshold lives on `[0, 1]`.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCORE_PREFIX: &str = "score:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatientSource {
    Community,
    Contacts,
    PrivateReferral,
    DotsRetesting,
    PublicReferral,
    WalkIn,
    Unknown,
}

impl PatientSource {
    pub const KNOWN: [PatientSource; 6] = [
        PatientSource::Community,
        PatientSource::Contacts,
        PatientSource::PrivateReferral,
        PatientSource::DotsRetesting,
        PatientSource::PublicReferral,
        PatientSource::WalkIn,
    ];

    pub fn code(self) -> &'static str {
        match self {
            PatientSource::Community => "community",
            PatientSource::Contacts => "contacts",
            PatientSource::PrivateReferral => "private",
            PatientSource::DotsRetesting => "dots",
            PatientSource::PublicReferral => "public",
            PatientSource::WalkIn => "walkin",
            PatientSource::Unknown => "",
        }
    }
}

/// Radiologist reading, from most to least TB-suggestive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiologistGrade {
    HighlySuggestive,
    PossiblyTb,
    AbnormalNotTb,
    Normal,
}

impl RadiologistGrade {
    pub const ALL: [RadiologistGrade; 4] = [
        RadiologistGrade::HighlySuggestive,
        RadiologistGrade::PossiblyTb,
        RadiologistGrade::AbnormalNotTb,
        RadiologistGrade::Normal,
    ];

    /// 3 for highly suggestive down to 0 for normal.
    pub fn severity(self) -> u8 {
        match self {
            RadiologistGrade::HighlySuggestive => 3,
            RadiologistGrade::PossiblyTb => 2,
            RadiologistGrade::AbnormalNotTb => 1,
            RadiologistGrade::Normal => 0,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            RadiologistGrade::HighlySuggestive => "HS",
            RadiologistGrade::PossiblyTb => "PT",
            RadiologistGrade::AbnormalNotTb => "AN",
            RadiologistGrade::Normal => "N",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MtbBurden {
    VeryLow,
    Low,
    Medium,
    High,
}

impl MtbBurden {
    pub fn code(self) -> &'static str {
        match self {
            MtbBurden::VeryLow => "VL",
            MtbBurden::Low => "L",
            MtbBurden::Medium => "M",
            MtbBurden::High => "H",
        }
    }
}

/// Dichotomization of the four radiologist grades.
///
/// * `A`: highly suggestive is positive.
/// * `B`: highly suggestive or possibly TB is positive.
/// * `C`: any abnormal reading is positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinaryClassification {
    A,
    B,
    C,
}

impl BinaryClassification {
    pub const ALL: [BinaryClassification; 3] =
        [BinaryClassification::A, BinaryClassification::B, BinaryClassification::C];

    /// Lowest grade severity that is read as positive.
    fn min_positive_severity(self) -> u8 {
        match self {
            BinaryClassification::A => 3,
            BinaryClassification::B => 2,
            BinaryClassification::C => 1,
        }
    }

    pub fn is_positive(self, grade: RadiologistGrade) -> bool {
        grade.severity() >= self.min_positive_severity()
    }
}

/// `true` when `grade` is read as positive under `classification`.
pub fn radiologist_binary(
    grade: Option<RadiologistGrade>,
    classification: BinaryClassification,
) -> Result<bool> {
    grade
        .map(|g| classification.is_positive(g))
        .ok_or(Error::MissingGrade)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreScale {
    /// Scores already on `[0, 1]`.
    #[default]
    Unit,
    /// Scores on `[0, 100]`.
    Percent,
}

impl ScoreScale {
    fn name(self) -> &'static str {
        match self {
            ScoreScale::Unit => "unit [0,1]",
            ScoreScale::Percent => "percent [0,100]",
        }
    }
}

/// Maps a raw vendor score onto `[0, 1]`. Out-of-range input is an error,
/// never clamped.
pub fn normalize_score(raw: f64, scale: ScoreScale) -> Result<f64> {
    let upper = match scale {
        ScoreScale::Unit => 1.0,
        ScoreScale::Percent => 100.0,
    };
    if !raw.is_finite() || !(0.0..=upper).contains(&raw) {
        return Err(Error::OutOfRange { value: raw, scale: scale.name() });
    }
    Ok(match scale {
        ScoreScale::Unit => raw,
        ScoreScale::Percent => raw / 100.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRecord {
    pub id: String,
    /// Xpert-positive reference standard.
    pub bac_label: bool,
    pub age_years: Option<u32>,
    pub gender: Gender,
    pub prior_tb: Option<bool>,
    pub patient_source: PatientSource,
    pub radiologist_grade: Option<RadiologistGrade>,
    /// One normalized score per product, in the cohort's product order.
    pub scores: Vec<f64>,
    pub mtb_burden: Option<MtbBurden>,
}

impl CohortRecord {
    /// A record with only the required fields set.
    pub fn new(id: impl Into<String>, bac_label: bool, scores: Vec<f64>) -> Self {
        CohortRecord {
            id: id.into(),
            bac_label,
            age_years: None,
            gender: Gender::Unknown,
            prior_tb: None,
            patient_source: PatientSource::Unknown,
            radiologist_grade: None,
            scores,
            mtb_burden: None,
        }
    }
}

/// An immutable, validated set of subjects.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cohort {
    records: Vec<CohortRecord>,
    product_names: Vec<String>,
}

impl Cohort {
    pub fn new(records: Vec<CohortRecord>, product_names: Vec<String>) -> Result<Self> {
        let mut names = HashSet::new();
        for p in &product_names {
            if p.is_empty() || !names.insert(p.as_str()) {
                return Err(Error::InvalidArgument(format!("bad product name {p:?}")));
            }
        }
        let mut ids = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let row = i + 1;
            if r.id.is_empty() {
                return Err(Error::EmptyId(row));
            }
            if !ids.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(row));
            }
            if r.scores.len() != product_names.len() {
                return Err(Error::InvalidArgument(format!(
                    "record {} has {} scores for {} products",
                    r.id,
                    r.scores.len(),
                    product_names.len()
                )));
            }
            if let Some(&s) = r.scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
                return Err(Error::OutOfRange { value: s, scale: ScoreScale::Unit.name() });
            }
        }
        Ok(Cohort { records, product_names })
    }

    pub fn records(&self) -> &[CohortRecord] {
        &self.records
    }

    pub fn product_names(&self) -> &[String] {
        &self.product_names
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn product_index(&self, product: &str) -> Result<usize> {
        self.product_names
            .iter()
            .position(|p| p == product)
            .ok_or_else(|| Error::UnknownProduct(product.to_string()))
    }

    pub fn labels(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.bac_label).collect()
    }

    pub fn scores(&self, product: &str) -> Result<Vec<f64>> {
        let idx = self.product_index(product)?;
        Ok(self.records.iter().map(|r| r.scores[idx]).collect())
    }

    pub fn n_positive(&self) -> usize {
        self.records.iter().filter(|r| r.bac_label).count()
    }

    /// Sub-cohort of the records selected by `keep`, order preserved.
    pub fn filter(&self, mut keep: impl FnMut(&CohortRecord) -> bool) -> Cohort {
        Cohort {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            product_names: self.product_names.clone(),
        }
    }
}

/// Ingestion settings.
#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Scale of every score column without an override.
    pub scale: ScoreScale,
    /// Per-product scale overrides, keyed by product name.
    pub product_scales: BTreeMap<String, ScoreScale>,
}

struct Columns {
    id: usize,
    label: usize,
    age: Option<usize>,
    gender: Option<usize>,
    prior_tb: Option<usize>,
    source: Option<usize>,
    grade: Option<usize>,
    mtb: Option<usize>,
    scores: Vec<(usize, String, ScoreScale)>,
}

impl Columns {
    fn locate(header: &csv::StringRecord, options: &IngestOptions) -> Result<Self> {
        let find = |name: &str| header.iter().position(|h| h.trim() == name);
        let required = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.into()));
        let scores: Vec<_> = header
            .iter()
            .enumerate()
            .filter_map(|(i, h)| {
                h.trim().strip_prefix(SCORE_PREFIX).map(|p| {
                    let scale = options.product_scales.get(p).copied().unwrap_or(options.scale);
                    (i, p.to_string(), scale)
                })
            })
            .collect();
        if scores.is_empty() {
            return Err(Error::MissingColumn(format!("{SCORE_PREFIX}<product>")));
        }
        Ok(Columns {
            id: required("id")?,
            label: required("bac_label")?,
            age: find("age"),
            gender: find("gender"),
            prior_tb: find("prior_tb"),
            source: find("source"),
            grade: find("grade"),
            mtb: find("mtb_burden"),
            scores,
        })
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

fn parse_gender(s: &str) -> Option<Gender> {
    match s.to_ascii_uppercase().as_str() {
        "F" => Some(Gender::Female),
        "M" => Some(Gender::Male),
        "" => Some(Gender::Unknown),
        _ => None,
    }
}

fn parse_source(s: &str) -> Option<PatientSource> {
    match s.to_ascii_lowercase().as_str() {
        "community" => Some(PatientSource::Community),
        "contacts" => Some(PatientSource::Contacts),
        "private" => Some(PatientSource::PrivateReferral),
        "dots" => Some(PatientSource::DotsRetesting),
        "public" => Some(PatientSource::PublicReferral),
        "walkin" => Some(PatientSource::WalkIn),
        "" => Some(PatientSource::Unknown),
        _ => None,
    }
}

fn parse_grade(s: &str) -> Option<Option<RadiologistGrade>> {
    match s.to_ascii_uppercase().as_str() {
        "HS" => Some(Some(RadiologistGrade::HighlySuggestive)),
        "PT" => Some(Some(RadiologistGrade::PossiblyTb)),
        "AN" => Some(Some(RadiologistGrade::AbnormalNotTb)),
        "N" => Some(Some(RadiologistGrade::Normal)),
        "" => Some(None),
        _ => None,
    }
}

fn parse_mtb(s: &str) -> Option<Option<MtbBurden>> {
    match s.to_ascii_uppercase().as_str() {
        "VL" => Some(Some(MtbBurden::VeryLow)),
        "L" => Some(Some(MtbBurden::Low)),
        "M" => Some(Some(MtbBurden::Medium)),
        "H" => Some(Some(MtbBurden::High)),
        "" => Some(None),
        _ => None,
    }
}

/// Reads a cohort CSV. Record order follows the data rows.
pub fn parse_cohort<R: Read>(reader: R, options: &IngestOptions) -> Result<Cohort> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let cols = Columns::locate(&header, options)?;
    let product_names: Vec<String> = cols.scores.iter().map(|(_, p, _)| p.clone()).collect();

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let cell = |idx: usize| row.get(idx).unwrap_or("").trim();
        let bad = |idx: usize| Error::BadValue {
            row: row_no,
            column: header.get(idx).unwrap_or("").to_string(),
            value: cell(idx).to_string(),
        };
        let opt_cell = |idx: Option<usize>| idx.map(cell).unwrap_or("");

        let id = cell(cols.id).to_string();
        if id.is_empty() {
            return Err(Error::EmptyId(row_no));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(row_no));
        }
        let bac_label = parse_bool(cell(cols.label)).ok_or_else(|| bad(cols.label))?;

        let age_years = match cols.age {
            Some(c) if !cell(c).is_empty() => Some(cell(c).parse::<u32>().map_err(|_| bad(c))?),
            _ => None,
        };
        let gender = parse_gender(opt_cell(cols.gender)).ok_or_else(|| bad(cols.gender.unwrap()))?;
        let prior_tb = match cols.prior_tb {
            Some(c) if !cell(c).is_empty() => Some(parse_bool(cell(c)).ok_or_else(|| bad(c))?),
            _ => None,
        };
        let patient_source =
            parse_source(opt_cell(cols.source)).ok_or_else(|| bad(cols.source.unwrap()))?;
        let radiologist_grade =
            parse_grade(opt_cell(cols.grade)).ok_or_else(|| bad(cols.grade.unwrap()))?;
        let mtb_burden = parse_mtb(opt_cell(cols.mtb)).ok_or_else(|| bad(cols.mtb.unwrap()))?;

        let mut scores = Vec::with_capacity(cols.scores.len());
        for &(c, _, scale) in &cols.scores {
            let raw: f64 = cell(c).parse().map_err(|_| bad(c))?;
            scores.push(normalize_score(raw, scale).map_err(|_| bad(c))?);
        }

        records.push(CohortRecord {
            id,
            bac_label,
            age_years,
            gender,
            prior_tb,
            patient_source,
            radiologist_grade,
            scores,
            mtb_burden,
        });
    }
    Cohort::new(records, product_names)
}

/// Writes a cohort in the ingestion format, scores on the unit scale.
/// Unknown covariates are written as empty cells.
pub fn write_cohort<W: Write>(cohort: &Cohort, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header: Vec<String> = ["id", "bac_label", "age", "gender", "prior_tb", "source", "grade", "mtb_burden"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(cohort.product_names.iter().map(|p| format!("{SCORE_PREFIX}{p}")));
    w.write_record(&header)?;

    for r in &cohort.records {
        let mut row = vec![
            r.id.clone(),
            if r.bac_label { "1" } else { "0" }.to_string(),
            r.age_years.map(|a| a.to_string()).unwrap_or_default(),
            match r.gender {
                Gender::Female => "F",
                Gender::Male => "M",
                Gender::Unknown => "",
            }
            .to_string(),
            r.prior_tb.map(|p| if p { "1" } else { "0" }).unwrap_or("").to_string(),
            r.patient_source.code().to_string(),
            r.radiologist_grade.map(|g| g.code()).unwrap_or("").to_string(),
            r.mtb_burden.map(|m| m.code()).unwrap_or("").to_string(),
        ];
        row.extend(r.scores.iter().map(|s| s.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
