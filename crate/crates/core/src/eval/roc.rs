//! ROC curves over the integer threshold `R_P`, threshold selection and
//! per-patient false positives.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::classifier::Label;
use crate::error::{Error, Result};
use crate::eval::score::ScoredFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RocBasis {
    PerFrame,
    PerPolyp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub r_p: u32,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub basis: RocBasis,
    /// Ascending in `R_P`.
    pub points: Vec<RocPoint>,
    /// Positive count: polyp frames, or sequences on the per-polyp basis.
    pub n_pos: usize,
    pub n_neg: usize,
    /// Trapezoidal area of the curve closed with `(0,0)` and `(1,1)`.
    pub auc: f64,
    /// Area over the realised points and `(0,0)` only.
    pub auc_truncated: f64,
}

impl RocCurve {
    pub fn at(&self, r_p: u32) -> Option<RocPoint> {
        self.points.iter().copied().find(|p| p.r_p == r_p)
    }
}

fn counts(scores: &[ScoredFrame]) -> (usize, usize) {
    let pos = scores.iter().filter(|s| s.truth == Label::Polyp).count();
    (pos, scores.len() - pos)
}

fn threshold_range(scores: &[ScoredFrame]) -> std::ops::RangeInclusive<u32> {
    1..=scores.iter().map(|s| s.r_max).max().unwrap_or(0) + 1
}

/// Fraction of normal frames scored at or above `r_p`.
pub fn false_positive_rate(scores: &[ScoredFrame], r_p: u32) -> Option<f64> {
    let normals: Vec<_> = scores.iter().filter(|s| s.truth == Label::Normal).collect();
    if normals.is_empty() {
        return None;
    }
    Some(normals.iter().filter(|s| s.r_max >= r_p).count() as f64 / normals.len() as f64)
}

/// Fraction of polyp frames scored at or above `r_p`.
pub fn frame_sensitivity(scores: &[ScoredFrame], r_p: u32) -> Option<f64> {
    let polyps: Vec<_> = scores.iter().filter(|s| s.truth == Label::Polyp).collect();
    if polyps.is_empty() {
        return None;
    }
    Some(polyps.iter().filter(|s| s.r_max >= r_p).count() as f64 / polyps.len() as f64)
}

/// Detection flag `D^(p)` per sequence: any frame scored at or above `r_p`.
pub fn detection_flags(scores: &[ScoredFrame], r_p: u32) -> BTreeMap<String, bool> {
    let mut flags = BTreeMap::new();
    for s in scores {
        if let (Label::Polyp, Some(seq)) = (s.truth, &s.sequence) {
            *flags.entry(seq.clone()).or_insert(false) |= s.r_max >= r_p;
        }
    }
    flags
}

/// Share of set detection flags.
pub fn polyp_sensitivity(flags: &[bool]) -> Option<f64> {
    if flags.is_empty() {
        return None;
    }
    Some(flags.iter().filter(|&&d| d).count() as f64 / flags.len() as f64)
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

fn areas(points: &[RocPoint]) -> (f64, f64) {
    // Descending R_P gives ascending FPR.
    let mut path: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    path.extend(points.iter().rev().map(|p| (p.fpr, p.tpr)));
    let truncated = trapezoid(&path);
    path.push((1.0, 1.0));
    (trapezoid(&path), truncated)
}

fn build(basis: RocBasis, points: Vec<RocPoint>, n_pos: usize, n_neg: usize) -> RocCurve {
    let (auc, auc_truncated) = areas(&points);
    RocCurve {
        basis,
        points,
        n_pos,
        n_neg,
        auc,
        auc_truncated,
    }
}

/// Per-frame ROC for every integer `R_P` from 1 to `max R_max + 1`.
pub fn roc_per_frame(scores: &[ScoredFrame]) -> Result<RocCurve> {
    let (n_pos, n_neg) = counts(scores);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric("ROC needs both polyp and normal frames".into()));
    }
    let points = threshold_range(scores)
        .map(|r_p| RocPoint {
            r_p,
            fpr: false_positive_rate(scores, r_p).unwrap_or(0.0),
            tpr: frame_sensitivity(scores, r_p).unwrap_or(0.0),
        })
        .collect();
    Ok(build(RocBasis::PerFrame, points, n_pos, n_neg))
}

/// Per-polyp TPR against the per-frame FPR.
pub fn roc_per_polyp(scores: &[ScoredFrame]) -> Result<RocCurve> {
    let (_, n_neg) = counts(scores);
    let n_seq = detection_flags(scores, 0).len();
    if n_seq == 0 {
        return Err(Error::Metric("per-polyp ROC needs polyp sequences".into()));
    }
    if n_neg == 0 {
        return Err(Error::Metric("ROC needs normal frames".into()));
    }
    let points = threshold_range(scores)
        .map(|r_p| {
            let flags: Vec<bool> = detection_flags(scores, r_p).into_values().collect();
            RocPoint {
                r_p,
                fpr: false_positive_rate(scores, r_p).unwrap_or(0.0),
                tpr: polyp_sensitivity(&flags).unwrap_or(0.0),
            }
        })
        .collect();
    Ok(build(RocBasis::PerPolyp, points, n_seq, n_neg))
}

/// Specificity in percent at `r_p`.
pub fn specificity(scores: &[ScoredFrame], r_p: u32) -> Option<f64> {
    let normals: Vec<_> = scores.iter().filter(|s| s.truth == Label::Normal).collect();
    if normals.is_empty() {
        return None;
    }
    let tn = normals.iter().filter(|s| s.r_max < r_p).count();
    Some(tn as f64 * 100.0 / normals.len() as f64)
}

/// Smallest `R_P ≥ 1` whose specificity on `training` reaches `target_spec`
/// percent.
pub fn select_threshold(training: &[ScoredFrame], target_spec: f64) -> Result<u32> {
    if !(target_spec > 0.0 && target_spec <= 100.0) {
        return Err(Error::Calibration(format!("target specificity {target_spec} must lie in (0, 100]")));
    }
    let normals: Vec<u32> = training
        .iter()
        .filter(|s| s.truth == Label::Normal)
        .map(|s| s.r_max)
        .collect();
    if normals.is_empty() {
        return Err(Error::Calibration("training subset has no normal frames".into()));
    }
    let n = normals.len() as f64;
    // (N − FP)·100 ≥ target·N, with the left side exact.
    let reaches = |r_p: u32| {
        let tn = normals.iter().filter(|&&s| s < r_p).count() as f64;
        tn * 100.0 >= target_spec * n
    };
    let top = normals.iter().copied().max().unwrap_or(0) + 1;
    (1..=top)
        .find(|&r| reaches(r))
        .ok_or_else(|| Error::Calibration(format!("specificity {target_spec}% unattainable")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRow {
    pub patient: String,
    pub n_normal: usize,
    pub false_positives: usize,
    /// Percent; `None` without normal frames.
    pub fpr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientTable {
    pub rows: Vec<PatientRow>,
    pub total: PatientRow,
}

/// Numeric ids sort numerically, the rest lexicographically after them.
pub fn patient_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

fn row(patient: String, n_normal: usize, fp: usize) -> PatientRow {
    PatientRow {
        patient,
        n_normal,
        false_positives: fp,
        fpr: (n_normal > 0).then(|| fp as f64 / n_normal as f64 * 100.0),
    }
}

pub fn per_patient_false_positives(scores: &[ScoredFrame], r_p: u32) -> PatientTable {
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for s in scores {
        let e = tally.entry(&s.patient).or_default();
        if s.truth == Label::Normal {
            e.0 += 1;
            e.1 += usize::from(s.r_max >= r_p);
        }
    }
    let mut ids: Vec<&str> = tally.keys().copied().collect();
    ids.sort_by(|a, b| patient_order(a, b));
    let rows: Vec<PatientRow> = ids
        .iter()
        .map(|id| {
            let (n, fp) = tally[id];
            row(id.to_string(), n, fp)
        })
        .collect();
    let (n, fp) = tally.values().fold((0, 0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
    PatientTable {
        rows,
        total: row("total".into(), n, fp),
    }
}

/// `|pert − base| / base · 100`.
pub fn delta_metric(base: f64, pert: f64) -> Result<f64> {
    if !(base > 0.0) {
        return Err(Error::Domain(format!("base value {base} must be positive")));
    }
    Ok((pert - base).abs() / base * 100.0)
}

/// Distinct patients in first-seen order.
pub fn patients(scores: &[ScoredFrame]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    scores
        .iter()
        .filter(|s| seen.insert(s.patient.clone()))
        .map(|s| s.patient.clone())
        .collect()
}
