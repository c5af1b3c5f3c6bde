//! One-at-a-time +10% robustness study of the geometric parameters.

use serde::{Deserialize, Serialize};

use crate::classifier::Label;
use crate::error::Result;
use crate::eval::manifest::FrameRecord;
use crate::eval::roc::{delta_metric, detection_flags, frame_sensitivity, polyp_sensitivity, specificity};
use crate::eval::score::{FailedFrame, ScoredFrame};
use crate::exec::Execution;
use crate::io::read_frame;
use crate::params::{PipelineParams, StudyParam};
use crate::pipeline::{geometric_stage, prepare};

/// Normal frames kept in the reduced study set.
pub const REDUCED_NORMALS: usize = 4000;

/// Frames held in memory at once while rescoring.
const CHUNK: usize = 64;

/// Specificity and sensitivities in percent at a fixed `R_P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub r_p: u32,
    pub spec: Option<f64>,
    pub sens_frame: Option<f64>,
    pub sens_polyp: Option<f64>,
}

impl OperatingPoint {
    pub fn measure(scores: &[ScoredFrame], r_p: u32) -> Self {
        let flags: Vec<bool> = detection_flags(scores, r_p).into_values().collect();
        OperatingPoint {
            r_p,
            spec: specificity(scores, r_p),
            sens_frame: frame_sensitivity(scores, r_p).map(|v| v * 100.0),
            sens_polyp: polyp_sensitivity(&flags).map(|v| v * 100.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub parameter: StudyParam,
    pub base_value: f64,
    pub perturbed_value: f64,
    pub perturbed: OperatingPoint,
    /// `None` when the base metric is zero or undefined.
    pub delta_spec: Option<f64>,
    pub delta_sens_frame: Option<f64>,
    pub delta_sens_polyp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub n_normal: usize,
    pub n_polyp: usize,
    pub base: OperatingPoint,
    pub rows: Vec<SensitivityRow>,
    pub failed: Vec<FailedFrame>,
}

/// First [`REDUCED_NORMALS`] normal frames in manifest order plus every
/// polyp frame, in manifest order.
pub fn reduced_set(records: &[FrameRecord]) -> Vec<FrameRecord> {
    let mut normals = 0;
    records
        .iter()
        .filter(|r| match r.label {
            Label::Polyp => true,
            Label::Normal => {
                normals += 1;
                normals <= REDUCED_NORMALS
            }
        })
        .cloned()
        .collect()
}

fn delta(base: Option<f64>, pert: Option<f64>) -> Option<f64> {
    match (base, pert) {
        (Some(b), Some(p)) => delta_metric(b, p).ok(),
        _ => None,
    }
}

/// Scores of one frame under the base parameters followed by each variant.
/// Pre-processing and pre-selection do not depend on the varied
/// parameters, so they run once per frame.
fn score_variants(record: &FrameRecord, variants: &[PipelineParams]) -> Result<Vec<u32>> {
    let gray = read_frame(&record.path)?;
    let prepared = prepare(&gray, &variants[0], Execution::Sequential)?;
    variants
        .iter()
        .map(|p| {
            if prepared.preselect {
                Ok(geometric_stage(&prepared.f, p, Execution::Sequential)?.r_max)
            } else {
                Ok(0)
            }
        })
        .collect()
}

/// Rescores the reduced set with each parameter raised by 10% on its own
/// and reports relative metric changes at the base `R_P`.
pub fn sensitivity_study(
    records: &[FrameRecord],
    base: &PipelineParams,
    study: &[StudyParam],
    exec: Execution,
) -> Result<SensitivityReport> {
    base.validate()?;
    let mut variants = vec![*base];
    for sp in study {
        let v = sp.perturb(base);
        v.validate()?;
        variants.push(v);
    }
    let set = reduced_set(records);
    let mut per_variant: Vec<Vec<ScoredFrame>> = vec![Vec::with_capacity(set.len()); variants.len()];
    let mut failed = Vec::new();
    for chunk in set.chunks(CHUNK) {
        let results = exec.map(chunk, |r| score_variants(r, &variants));
        for (r, res) in chunk.iter().zip(results) {
            match res {
                Ok(scores) => {
                    for (bucket, s) in per_variant.iter_mut().zip(scores) {
                        bucket.push(ScoredFrame::new(r, s));
                    }
                }
                Err(e) => failed.push(FailedFrame {
                    frame_id: r.frame_id.clone(),
                    error: e.to_string(),
                }),
            }
        }
    }
    let r_p = base.r_p;
    let base_point = OperatingPoint::measure(&per_variant[0], r_p);
    let rows = study
        .iter()
        .zip(&variants[1..])
        .zip(&per_variant[1..])
        .map(|((&sp, params), scores)| {
            let pert = OperatingPoint::measure(scores, r_p);
            SensitivityRow {
                parameter: sp,
                base_value: sp.value(base),
                perturbed_value: sp.value(params),
                perturbed: pert,
                delta_spec: delta(base_point.spec, pert.spec),
                delta_sens_frame: delta(base_point.sens_frame, pert.sens_frame),
                delta_sens_polyp: delta(base_point.sens_polyp, pert.sens_polyp),
            }
        })
        .collect();
    let n_polyp = per_variant[0].iter().filter(|s| s.truth == Label::Polyp).count();
    Ok(SensitivityReport {
        n_normal: per_variant[0].len() - n_polyp,
        n_polyp,
        base: base_point,
        rows,
        failed,
    })
}
