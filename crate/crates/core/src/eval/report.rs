//! Evaluation report and its on-disk forms.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::roc::{PatientTable, RocCurve};
use crate::eval::score::FailedFrame;
use crate::eval::sensitivity::{OperatingPoint, SensitivityReport};
use crate::params::PipelineParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRow {
    pub sequence: String,
    pub patient: String,
    pub n_frames: usize,
    pub max_r_max: u32,
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub params_hash: String,
    pub params: PipelineParams,
    pub train_patient: String,
    pub target_spec: f64,
    /// Threshold calibrated on the training patient.
    pub r_p: u32,
    pub training: OperatingPoint,
    pub held_out: OperatingPoint,
    pub overall: OperatingPoint,
    pub n_frames: usize,
    pub roc_frame: RocCurve,
    pub roc_polyp: Option<RocCurve>,
    pub sequences: Vec<SequenceRow>,
    pub per_patient: PatientTable,
    pub failed: Vec<FailedFrame>,
    pub sensitivity: Option<SensitivityReport>,
}

pub fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("r_p,fpr,tpr\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{},{}", p.r_p, p.fpr, p.tpr);
    }
    out
}

const SVG_SIZE: f64 = 480.0;
const SVG_MARGIN: f64 = 56.0;

fn to_px(fpr: f64, tpr: f64) -> (f64, f64) {
    let span = SVG_SIZE - 2.0 * SVG_MARGIN;
    (SVG_MARGIN + fpr * span, SVG_SIZE - SVG_MARGIN - tpr * span)
}

fn polyline(curve: &RocCurve, color: &str) -> String {
    let mut pts = vec![to_px(0.0, 0.0)];
    pts.extend(curve.points.iter().rev().map(|p| to_px(p.fpr, p.tpr)));
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    format!(
        "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

/// Both ROC curves and the no-discrimination diagonal.
pub fn roc_svg(frame: &RocCurve, polyp: Option<&RocCurve>) -> String {
    let (x0, y0) = to_px(0.0, 0.0);
    let (x1, y1) = to_px(1.0, 1.0);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_SIZE}\" height=\"{SVG_SIZE}\" viewBox=\"0 0 {SVG_SIZE} {SVG_SIZE}\">\n"
    );
    let _ = writeln!(s, "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "  <rect x=\"{x0}\" y=\"{y1}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        x1 - x0,
        y0 - y1
    );
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let (x, _) = to_px(v, 0.0);
        let (_, y) = to_px(0.0, v);
        let _ = writeln!(s, "  <text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">{v:.1}</text>", y0 + 18.0);
        let _ = writeln!(s, "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\">{v:.1}</text>", x0 - 6.0, y + 4.0);
    }
    let _ = writeln!(
        s,
        "  <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y1}\" stroke=\"gray\" stroke-dasharray=\"6 4\"/>"
    );
    s.push_str(&polyline(frame, "#1f77b4"));
    if let Some(p) = polyp {
        s.push_str(&polyline(p, "#d62728"));
    }
    let _ = writeln!(s, "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"14\" text-anchor=\"middle\">FPR</text>", SVG_SIZE / 2.0, SVG_SIZE - 14.0);
    let _ = writeln!(
        s,
        "  <text x=\"16\" y=\"{:.2}\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">TPR</text>",
        SVG_SIZE / 2.0,
        SVG_SIZE / 2.0
    );
    let _ = writeln!(s, "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" fill=\"#1f77b4\">per frame</text>", x0 + 10.0, y1 + 18.0);
    if polyp.is_some() {
        let _ = writeln!(s, "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" fill=\"#d62728\">per polyp</text>", x0 + 10.0, y1 + 34.0);
    }
    s.push_str("</svg>\n");
    s
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `report.json`, `roc_frame.csv`, `roc_polyp.csv` and `roc.svg`.
pub fn write_reports(report: &EvaluationReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    write(&out_dir.join("report.json"), &json)?;
    write_roc_files(&report.roc_frame, report.roc_polyp.as_ref(), out_dir)
}

pub fn write_roc_files(frame: &RocCurve, polyp: Option<&RocCurve>, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write(&out_dir.join("roc_frame.csv"), &roc_csv(frame))?;
    if let Some(p) = polyp {
        write(&out_dir.join("roc_polyp.csv"), &roc_csv(p))?;
    }
    write(&out_dir.join("roc.svg"), &roc_svg(frame, polyp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::roc::{RocBasis, RocPoint};

    fn curve() -> RocCurve {
        RocCurve {
            basis: RocBasis::PerFrame,
            points: vec![
                RocPoint { r_p: 1, fpr: 0.5, tpr: 0.75 },
                RocPoint { r_p: 2, fpr: 0.0, tpr: 0.25 },
            ],
            n_pos: 4,
            n_neg: 2,
            auc: 0.0,
            auc_truncated: 0.0,
        }
    }

    #[test]
    fn csv_layout() {
        assert_eq!(roc_csv(&curve()), "r_p,fpr,tpr\n1,0.5,0.75\n2,0,0.25\n");
    }

    #[test]
    fn svg_has_both_curves_and_diagonal() {
        let c = curve();
        let svg = roc_svg(&c, Some(&RocCurve { basis: RocBasis::PerPolyp, ..c.clone() }));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }
}
