//! Directory-level anonymization with the three audit CSVs.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use walkdir::WalkDir;

use crate::anonymize::{anonymize_file, validate_cxr, AnonRecord, ValidationMode, Verdict};
use crate::codec::{has_magic, DicomFile};
use crate::error::{Error, Result};
use crate::rules::TagRule;
use crate::tags::Tag;

pub const ACCESSION_CSV: &str = "AccessionNotAvailableData.csv";
pub const ERRORS_CSV: &str = "Errors.csv";
pub const HASHES_CSV: &str = "Hashes.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BatchOptions {
    pub mode: ValidationMode,
    /// Worker threads; 0 uses the global rayon pool.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub source: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BatchReport {
    pub processed: usize,
    pub accepted: usize,
    /// Accepted files, sorted by source path.
    pub records: Vec<AnonRecord>,
    /// Rejected files, sorted by source path.
    pub rejected: Vec<Rejection>,
}

fn require_dir(p: &Path) -> Result<()> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(Error::NotADirectory(p.to_path_buf()))
    }
}

/// Writes `bytes` to `dest` through a temporary file in the same directory,
/// refusing to replace an existing file.
fn write_new(dest: &Path, bytes: &[u8]) -> Result<()> {
    let dir = dest.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist_noclobber(dest).map_err(|e| {
        if e.error.kind() == std::io::ErrorKind::AlreadyExists {
            Error::OutputCollision(dest.to_path_buf())
        } else {
            Error::Io(e.error)
        }
    })?;
    Ok(())
}

/// Like `write_new` but replaces an existing file.
fn write_replace(dest: &Path, bytes: &[u8]) -> Result<()> {
    let dir = dest.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(dest).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn process(path: &Path, output: &Path, rules: &[TagRule], mode: ValidationMode) -> Result<AnonRecord, String> {
    let bytes = fs::read(path).map_err(|_| "IoError".to_string())?;
    if !has_magic(&bytes) {
        return Err("NoHeader".into());
    }
    let file = DicomFile::parse(&bytes).map_err(|e| e.kind().to_string())?;
    if let Verdict::Invalid(reason) = validate_cxr(&bytes, file.text(Tag::STUDY_DESCRIPTION), mode) {
        return Err(reason.kind().to_string());
    }
    let (file, mut record) = anonymize_file(file, rules);
    write_new(output, &file.to_bytes()).map_err(|e| e.kind().to_string())?;
    record.output = output.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(record)
}

/// Anonymizes every file under `input` into `output` (flattened to base
/// names) and writes the audit CSVs into `report_dir`.
pub fn run_batch(
    input: &Path,
    output: &Path,
    report_dir: &Path,
    rules: &[TagRule],
    options: &BatchOptions,
) -> Result<BatchReport> {
    for d in [input, output, report_dir] {
        require_dir(d)?;
    }
    let mut rejected = Vec::new();
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in WalkDir::new(input).sort_by_file_name() {
        match entry {
            Ok(e) if e.file_type().is_file() => files.push(e.into_path()),
            Ok(_) => {}
            Err(e) => rejected.push(Rejection {
                source: e.path().map(|p| p.display().to_string()).unwrap_or_default(),
                error: "IoError".into(),
            }),
        }
    }
    files.sort();

    // first file in path order claims each base name
    let mut claimed = HashSet::new();
    let jobs: Vec<(PathBuf, Option<PathBuf>)> = files
        .into_iter()
        .map(|f| {
            let name = f.file_name().map(|n| n.to_os_string()).unwrap_or_default();
            let dest = claimed.insert(name.clone()).then(|| output.join(&name));
            (f, dest)
        })
        .collect();

    let run = || -> Vec<(String, Result<AnonRecord, String>)> {
        jobs.par_iter()
            .map(|(src, dest)| {
                let source = src.display().to_string();
                let outcome = match dest {
                    None => Err("OutputNameCollision".to_string()),
                    Some(d) => process(src, d, rules, options.mode),
                };
                (source, outcome.map(|mut r| {
                    r.source = src.display().to_string();
                    r
                }))
            })
            .collect()
    };
    let outcomes = if options.workers == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(options.workers)
            .build()
            .map_err(|e| Error::Io(std::io::Error::other(e)))?
            .install(run)
    };

    let mut records = Vec::new();
    for (source, outcome) in outcomes {
        match outcome {
            Ok(r) => records.push(r),
            Err(error) => rejected.push(Rejection { source, error }),
        }
    }
    rejected.sort_by(|a, b| a.source.cmp(&b.source));

    let report = BatchReport {
        processed: records.len() + rejected.len(),
        accepted: records.len(),
        records,
        rejected,
    };
    write_audit_csvs(&report, report_dir)?;
    Ok(report)
}

fn crlf_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .flexible(true)
        .terminator(csv::Terminator::CRLF)
        .from_writer(buf)
}

/// Serializes the three audit tables. AccessionNotAvailableData.csv and
/// Errors.csv have no header and CRLF line ends; Hashes.csv has a
/// `Filename` index column and LF line ends.
pub fn audit_csvs(report: &BatchReport) -> Result<[(&'static str, Vec<u8>); 3]> {
    let mut accession = Vec::new();
    {
        let mut w = crlf_writer(&mut accession);
        for r in report.records.iter().filter(|r| r.accession_missing) {
            w.write_record([&r.source])?;
        }
        w.flush()?;
    }

    let mut errors = Vec::new();
    {
        let mut w = crlf_writer(&mut errors);
        for r in &report.rejected {
            w.write_record([r.source.as_str(), "", r.error.as_str()])?;
        }
        w.flush()?;
    }

    let mut columns: Vec<String> = Vec::new();
    for r in &report.records {
        for h in &r.hashes {
            if !columns.contains(&h.name) {
                columns.push(h.name.clone());
            }
        }
    }
    let mut hashes = Vec::new();
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut hashes);
        let mut header = vec!["Filename".to_string()];
        for c in &columns {
            header.push(c.clone());
            header.push(format!("{c} hash"));
        }
        w.write_record(&header)?;
        for r in &report.records {
            let mut row = vec![r.output.clone()];
            for c in &columns {
                match r.hashes.iter().find(|h| &h.name == c) {
                    Some(h) => row.extend([h.original.clone(), h.hash.clone()]),
                    None => row.extend([String::new(), String::new()]),
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    Ok([(ACCESSION_CSV, accession), (ERRORS_CSV, errors), (HASHES_CSV, hashes)])
}

fn write_audit_csvs(report: &BatchReport, dir: &Path) -> Result<()> {
    for (name, bytes) in audit_csvs(report)? {
        write_replace(&dir.join(name), &bytes)?;
    }
    Ok(())
}
