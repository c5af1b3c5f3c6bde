//! Dataset manifest: `frame_id,path,label,patient,sequence`.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::Label;
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 5] = ["frame_id", "path", "label", "patient", "sequence"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: String,
    pub path: PathBuf,
    pub label: Label,
    pub patient: String,
    /// Present exactly for polyp frames.
    pub sequence: Option<String>,
}

/// Reads a manifest file; relative image paths are resolved against the
/// manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<FrameRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_manifest(file, base)
}

pub fn parse_manifest(reader: impl Read, base: &Path) -> Result<Vec<FrameRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must be {}", MANIFEST_HEADER.join(",")),
        });
    }
    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let parse_err = |message: String| Error::Parse { line, message };
        if row.len() != MANIFEST_HEADER.len() {
            return Err(parse_err(format!("expected 5 fields, found {}", row.len())));
        }
        let frame_id = row[0].to_string();
        if frame_id.is_empty() || row[1].is_empty() || row[3].is_empty() {
            return Err(parse_err("frame_id, path and patient must be nonempty".into()));
        }
        let label: Label = row[2]
            .parse()
            .map_err(|_| parse_err(format!("label must be polyp or normal, got {:?}", &row[2])))?;
        let sequence = Some(row[4].to_string()).filter(|s| !s.is_empty());
        match (label, &sequence) {
            (Label::Polyp, None) => {
                return Err(Error::Validation(format!(
                    "line {line}: polyp frame {frame_id} has no sequence id"
                )))
            }
            (Label::Normal, Some(s)) => {
                return Err(Error::Validation(format!(
                    "line {line}: normal frame {frame_id} carries sequence {s}"
                )))
            }
            _ => {}
        }
        if !seen.insert(frame_id.clone()) {
            return Err(Error::Validation(format!("line {line}: duplicate frame_id {frame_id}")));
        }
        let raw = PathBuf::from(&row[1]);
        records.push(FrameRecord {
            frame_id,
            path: if raw.is_absolute() { raw } else { base.join(raw) },
            label,
            patient: row[3].to_string(),
            sequence,
        });
    }
    Ok(records)
}

/// Writes records in manifest format with paths relative to `base` when possible.
pub fn write_manifest(path: impl AsRef<Path>, records: &[FrameRecord], base: &Path) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| Error::Input(format!("{}: {e}", path.display()));
    w.write_record(MANIFEST_HEADER).map_err(csv_err)?;
    for r in records {
        let rel = r.path.strip_prefix(base).unwrap_or(&r.path);
        w.write_record([
            r.frame_id.as_str(),
            &rel.to_string_lossy(),
            &r.label.to_string(),
            r.patient.as_str(),
            r.sequence.as_deref().unwrap_or(""),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
