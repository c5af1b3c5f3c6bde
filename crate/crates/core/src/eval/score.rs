//! Dataset scoring with a JSON-lines decision cache.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{classify, Label};
use crate::error::{Error, Result};
use crate::eval::manifest::FrameRecord;
use crate::exec::Execution;
use crate::params::PipelineParams;
use crate::pipeline::{process_path, FrameDecision};

/// First line of a cache file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheHeader {
    /// Hash of every parameter that influences `R_max`.
    pub params_hash: String,
}

/// Score of one frame together with its ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredFrame {
    pub frame_id: String,
    pub r_max: u32,
    pub truth: Label,
    pub patient: String,
    pub sequence: Option<String>,
}

impl ScoredFrame {
    pub fn new(record: &FrameRecord, r_max: u32) -> Self {
        ScoredFrame {
            frame_id: record.frame_id.clone(),
            r_max,
            truth: record.label,
            patient: record.patient.clone(),
            sequence: record.sequence.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedFrame {
    pub frame_id: String,
    pub error: String,
}

/// Result of scoring a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRun {
    /// In manifest order; failed frames are absent.
    pub scores: Vec<ScoredFrame>,
    pub decisions: Vec<FrameDecision>,
    pub failed: Vec<FailedFrame>,
    pub reused: usize,
    pub computed: usize,
}

/// Reads a whole cache file regardless of its parameter hash.
pub fn load_cache(path: &Path) -> Result<(CacheHeader, Vec<FrameDecision>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty cache file".into(),
    })?;
    let header: CacheHeader = serde_json::from_str(first).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let decisions = lines
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect::<Result<_>>()?;
    Ok((header, decisions))
}

/// Joins cached decisions to manifest records; records without a decision
/// are reported as failed.
pub fn scores_from_decisions(records: &[FrameRecord], decisions: &[FrameDecision]) -> (Vec<ScoredFrame>, Vec<FailedFrame>) {
    let by_id: BTreeMap<&str, u32> = decisions.iter().map(|d| (d.frame_id.as_str(), d.r_max)).collect();
    let mut scores = Vec::new();
    let mut failed = Vec::new();
    for r in records {
        match by_id.get(r.frame_id.as_str()) {
            Some(&r_max) => scores.push(ScoredFrame::new(r, r_max)),
            None => failed.push(FailedFrame {
                frame_id: r.frame_id.clone(),
                error: "no cached decision".into(),
            }),
        }
    }
    (scores, failed)
}

/// Reads a cache; returns nothing when missing, unreadable or stale.
pub fn read_cache(path: &Path, params_hash: &str) -> Result<BTreeMap<String, FrameDecision>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut lines = BufReader::new(file).lines();
    let header: CacheHeader = match lines.next() {
        Some(line) => match serde_json::from_str(&line.map_err(|e| Error::io(path, e))?) {
            Ok(h) => h,
            Err(_) => {
                log::warn!("{}: unrecognised cache header, ignoring cache", path.display());
                return Ok(BTreeMap::new());
            }
        },
        None => return Ok(BTreeMap::new()),
    };
    if header.params_hash != params_hash {
        log::info!("{}: parameters changed, cache invalidated", path.display());
        return Ok(BTreeMap::new());
    }
    let mut out = BTreeMap::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let d: FrameDecision = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 2,
            message: e.to_string(),
        })?;
        out.insert(d.frame_id.clone(), d);
    }
    Ok(out)
}

pub fn write_cache(path: &Path, params_hash: &str, decisions: &[FrameDecision]) -> Result<()> {
    let io_err = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    let header = CacheHeader {
        params_hash: params_hash.to_string(),
    };
    writeln!(w, "{}", serde_json::to_string(&header)?).map_err(io_err)?;
    for d in decisions {
        writeln!(w, "{}", serde_json::to_string(d)?).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Scores every record, reusing cached decisions whose parameter hash
/// matches. Frames are processed concurrently and collected in manifest
/// order; the cache is rewritten once at the end.
pub fn score_dataset(
    records: &[FrameRecord],
    params: &PipelineParams,
    cache: Option<&Path>,
    exec: Execution,
) -> Result<ScoreRun> {
    params.validate()?;
    let hash = params.score_hash();
    let mut cached = match cache {
        Some(p) => read_cache(p, &hash)?,
        None => BTreeMap::new(),
    };
    let todo: Vec<&FrameRecord> = records.iter().filter(|r| !cached.contains_key(&r.frame_id)).collect();
    let fresh = exec.map(&todo, |r| process_path(&r.frame_id, &r.path, params, Execution::Sequential));
    let computed = todo.len();
    let mut fresh_by_id: BTreeMap<&str, Result<FrameDecision>> =
        todo.iter().map(|r| r.frame_id.as_str()).zip(fresh).collect();

    let mut run = ScoreRun {
        scores: Vec::with_capacity(records.len()),
        decisions: Vec::with_capacity(records.len()),
        failed: Vec::new(),
        reused: records.len() - computed,
        computed,
    };
    for r in records {
        let decision = match cached.remove(&r.frame_id) {
            Some(mut d) => {
                d.r_p = params.r_p;
                d.label = classify(d.r_max, params.r_p)?;
                d
            }
            None => match fresh_by_id.remove(r.frame_id.as_str()).expect("every record scored") {
                Ok(d) => d,
                Err(e) => {
                    log::warn!("frame {} failed: {e}", r.frame_id);
                    run.failed.push(FailedFrame {
                        frame_id: r.frame_id.clone(),
                        error: e.to_string(),
                    });
                    continue;
                }
            },
        };
        run.scores.push(ScoredFrame::new(r, decision.r_max));
        run.decisions.push(decision);
    }
    if let Some(p) = cache {
        write_cache(p, &hash, &run.decisions)?;
    }
    Ok(run)
}
