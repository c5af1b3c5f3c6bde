//! Dataset evaluation: manifest, cached scoring, ROC, calibration and the
//! robustness study.

pub mod manifest;
pub mod report;
pub mod roc;
pub mod score;
pub mod sensitivity;

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::classifier::Label;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::params::{PipelineParams, StudyParam};

pub use manifest::{load_manifest, FrameRecord};
pub use report::{write_reports, EvaluationReport, SequenceRow};
pub use roc::{delta_metric, per_patient_false_positives, roc_per_frame, roc_per_polyp, select_threshold, RocCurve};
pub use score::{score_dataset, ScoreRun, ScoredFrame};
pub use sensitivity::{sensitivity_study, OperatingPoint, SensitivityReport};

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOptions {
    pub train_patient: String,
    /// Percent.
    pub target_spec: f64,
    pub cache: Option<PathBuf>,
    /// Run the robustness study over these parameters as well.
    pub study: Vec<StudyParam>,
    pub exec: Execution,
}

impl EvaluateOptions {
    pub fn new(train_patient: impl Into<String>, target_spec: f64) -> Self {
        EvaluateOptions {
            train_patient: train_patient.into(),
            target_spec,
            cache: None,
            study: Vec::new(),
            exec: Execution::default(),
        }
    }
}

/// Per-sequence frame counts, best scores and detection flags.
pub fn sequence_table(scores: &[ScoredFrame], r_p: u32) -> Vec<SequenceRow> {
    let mut rows: BTreeMap<&str, SequenceRow> = BTreeMap::new();
    for s in scores {
        let (Label::Polyp, Some(seq)) = (s.truth, s.sequence.as_deref()) else {
            continue;
        };
        let row = rows.entry(seq).or_insert_with(|| SequenceRow {
            sequence: seq.to_string(),
            patient: s.patient.clone(),
            n_frames: 0,
            max_r_max: 0,
            detected: false,
        });
        row.n_frames += 1;
        row.max_r_max = row.max_r_max.max(s.r_max);
        row.detected = row.max_r_max >= r_p;
    }
    rows.into_values().collect()
}

/// Builds the report from already computed scores.
pub fn report_from_scores(
    scores: &[ScoredFrame],
    failed: Vec<score::FailedFrame>,
    params: &PipelineParams,
    opts: &EvaluateOptions,
) -> Result<EvaluationReport> {
    let training: Vec<ScoredFrame> = scores
        .iter()
        .filter(|s| s.patient == opts.train_patient)
        .cloned()
        .collect();
    if training.is_empty() {
        return Err(Error::Calibration(format!(
            "no frames for training patient {}",
            opts.train_patient
        )));
    }
    let held_out: Vec<ScoredFrame> = scores
        .iter()
        .filter(|s| s.patient != opts.train_patient)
        .cloned()
        .collect();
    let r_p = select_threshold(&training, opts.target_spec)?;
    Ok(EvaluationReport {
        params_hash: params.hash(),
        params: *params,
        train_patient: opts.train_patient.clone(),
        target_spec: opts.target_spec,
        r_p,
        training: OperatingPoint::measure(&training, r_p),
        held_out: OperatingPoint::measure(&held_out, r_p),
        overall: OperatingPoint::measure(scores, r_p),
        n_frames: scores.len(),
        roc_frame: roc_per_frame(scores)?,
        roc_polyp: roc_per_polyp(scores).ok(),
        sequences: sequence_table(scores, r_p),
        per_patient: per_patient_false_positives(scores, r_p),
        failed,
        sensitivity: None,
    })
}

/// Scores a dataset, calibrates `R_P` on the training patient and assembles
/// the report. The optional robustness study runs at the calibrated `R_P`.
pub fn evaluate(records: &[FrameRecord], params: &PipelineParams, opts: &EvaluateOptions) -> Result<(EvaluationReport, ScoreRun)> {
    let run = score_dataset(records, params, opts.cache.as_deref(), opts.exec)?;
    log::info!("scored {} frames ({} reused, {} failed)", run.scores.len(), run.reused, run.failed.len());
    let mut report = report_from_scores(&run.scores, run.failed.clone(), params, opts)?;
    if !opts.study.is_empty() {
        let calibrated = PipelineParams { r_p: report.r_p, ..*params };
        report.sensitivity = Some(sensitivity_study(records, &calibrated, &opts.study, opts.exec)?);
    }
    Ok((report, run))
}
