//! End-to-end per-frame classification with early exits.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{classify, decision_radius, fit_ball_radius, weighted_centroid, BallFit, Label};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{geometric_filter, Feature};
use crate::imaging::{CircularMask, Frame};
use crate::io::{decode_frame, read_frame};
use crate::midpass::{midpass_filter_with, segment, MidpassImage, Segmentation};
use crate::params::PipelineParams;
use crate::preprocess::{preprocess, RadialGainCorrector};
use crate::texture::{decompose_with, preselect, texture_transform_with};

/// Stage at which a frame left the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExitStage {
    Preselect,
    Geometry,
    Classifier,
}

/// Per-component record kept in the decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub index: usize,
    pub size: usize,
    pub passes_size: bool,
    /// Moments, present only for components that pass the size test.
    pub feature: Option<Feature>,
    pub kept: bool,
    pub ball: Option<BallFit>,
}

/// Everything computed for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDecision {
    pub frame_id: String,
    pub t_max: f64,
    pub preselect: bool,
    pub theta: Option<f64>,
    pub n_components: usize,
    pub features: Vec<FeatureRecord>,
    pub r_max: u32,
    pub exit_stage: ExitStage,
    pub label: Label,
    pub r_p: u32,
    pub degenerate_gain: bool,
}

impl FrameDecision {
    /// Feature whose ball radius gave `R_max`; the first one on ties.
    pub fn winning_feature(&self) -> Option<&FeatureRecord> {
        if self.r_max == 0 {
            return None;
        }
        self.features
            .iter()
            .find(|f| f.ball.is_some_and(|b| b.r_opt == self.r_max))
    }
}

/// Output of steps 1–2: the pre-processed frame and its texture peak.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFrame {
    pub f: Frame,
    pub t_max: f64,
    pub preselect: bool,
    pub degenerate_gain: bool,
}

/// Output of steps 3–5, from the mid-pass filter onward.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricOutcome {
    pub u: MidpassImage,
    pub segmentation: Segmentation,
    pub features: Vec<FeatureRecord>,
    pub r_max: u32,
}

fn mask_for(params: &PipelineParams, f: &Frame) -> Result<CircularMask> {
    if f.nx() != params.nx || f.ny() != params.ny {
        return Err(Error::Input(format!(
            "frame is {}x{} but parameters expect {}x{}",
            f.nx(),
            f.ny(),
            params.nx,
            params.ny
        )));
    }
    CircularMask::new(params.nx, params.ny, params.r_mask)
}

/// Pre-processing, texture transform and pre-selection.
pub fn prepare(gray: &Frame, params: &PipelineParams, exec: Execution) -> Result<PreparedFrame> {
    let mask = mask_for(params, gray)?;
    let (f, normalized) = preprocess(gray, &mask, &RadialGainCorrector);
    let parts = decompose_with(&f, &params.decomposition(), exec)?;
    let peak = texture_transform_with(&parts.texture, params.sigma, params.p, &mask, exec)?;
    Ok(PreparedFrame {
        preselect: preselect(peak.t_max, params.t_low, params.t_high)?,
        t_max: peak.t_max,
        f,
        degenerate_gain: normalized.degenerate,
    })
}

/// Mid-pass filter, segmentation, geometric criteria and ball fits on a
/// pre-processed frame.
pub fn geometric_stage(f: &Frame, params: &PipelineParams, exec: Execution) -> Result<GeometricOutcome> {
    let mask = mask_for(params, f)?;
    let u = midpass_filter_with(f, params.sigma1, params.sigma2, &mask, exec)?;
    let segmentation = segment(&u, params.m_low, params.m_high)?;
    let verdicts = geometric_filter(&segmentation.components, &params.geometric_criteria())?;
    let mut features = Vec::with_capacity(verdicts.len());
    let mut fits = Vec::new();
    for v in verdicts {
        let ball = if v.kept {
            let pixels = &segmentation.components[v.index - 1];
            let center = weighted_centroid(&u, pixels)?;
            let fit = fit_ball_radius(&u, center, &mask, v.index)?;
            fits.push(fit);
            Some(fit)
        } else {
            None
        };
        features.push(FeatureRecord {
            index: v.index,
            size: v.size,
            passes_size: v.passes_size,
            feature: v.feature,
            kept: v.kept,
            ball,
        });
    }
    Ok(GeometricOutcome {
        r_max: decision_radius(&fits),
        u,
        segmentation,
        features,
    })
}

/// Steps 1–6 on a grayscale frame.
pub fn process_gray(frame_id: &str, gray: &Frame, params: &PipelineParams, exec: Execution) -> Result<FrameDecision> {
    params.validate()?;
    let prepared = prepare(gray, params, exec)?;
    decide(frame_id, &prepared, params, exec)
}

/// Steps 3–6 given the result of [`prepare`].
pub fn decide(frame_id: &str, prepared: &PreparedFrame, params: &PipelineParams, exec: Execution) -> Result<FrameDecision> {
    let mut decision = FrameDecision {
        frame_id: frame_id.to_string(),
        t_max: prepared.t_max,
        preselect: prepared.preselect,
        theta: None,
        n_components: 0,
        features: Vec::new(),
        r_max: 0,
        exit_stage: ExitStage::Preselect,
        label: Label::Normal,
        r_p: params.r_p,
        degenerate_gain: prepared.degenerate_gain,
    };
    if !prepared.preselect {
        return Ok(decision);
    }
    let outcome = geometric_stage(&prepared.f, params, exec)?;
    decision.theta = Some(outcome.segmentation.theta);
    decision.n_components = outcome.segmentation.n_components();
    decision.r_max = outcome.r_max;
    decision.exit_stage = if outcome.features.iter().any(|f| f.kept) {
        ExitStage::Classifier
    } else {
        ExitStage::Geometry
    };
    decision.features = outcome.features;
    decision.label = classify(decision.r_max, params.r_p)?;
    Ok(decision)
}

/// Steps 1–6 on encoded image bytes (PNG or PGM/PPM).
pub fn process_frame(frame_id: &str, bytes: &[u8], params: &PipelineParams) -> Result<FrameDecision> {
    let gray = decode_frame(bytes)?;
    process_gray(frame_id, &gray, params, Execution::Sequential)
}

/// Steps 1–6 on an image file.
pub fn process_path(frame_id: &str, path: impl AsRef<Path>, params: &PipelineParams, exec: Execution) -> Result<FrameDecision> {
    let gray = read_frame(path)?;
    process_gray(frame_id, &gray, params, exec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params() -> PipelineParams {
        PipelineParams::for_dims(64, 64)
    }

    #[test]
    fn flat_frame_exits_at_preselection() {
        let p = small_params();
        let d = process_gray("flat", &Frame::filled(64, 64, 120.0).unwrap(), &p, Execution::Sequential).unwrap();
        assert!(!d.preselect);
        assert_eq!(d.exit_stage, ExitStage::Preselect);
        assert_eq!((d.r_max, d.label), (0, Label::Normal));
        assert!(d.t_max < p.t_low);
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let p = PipelineParams::default();
        let err = process_gray("x", &Frame::filled(64, 64, 1.0).unwrap(), &p, Execution::Sequential).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn geometric_stage_finds_planted_bump() {
        let p = PipelineParams::default();
        let f = Frame::from_fn(256, 256, |i, j| {
            let d2 = (i as f64 - 120.0).powi(2) + (j as f64 - 140.0).powi(2);
            100.0 + 60.0 * (-d2 / (2.0 * 18.0f64.powi(2))).exp()
        })
        .unwrap();
        let g = geometric_stage(&f, &p, Execution::Sequential).unwrap();
        assert!(g.r_max > 0);
        let kept: Vec<_> = g.features.iter().filter(|f| f.kept).collect();
        assert_eq!(kept.len(), 1);
        let c = kept[0].ball.unwrap().center;
        assert!((c.cx - 140.0).abs() < 2.0 && (c.cy - 120.0).abs() < 2.0);
    }

    #[test]
    fn decision_round_trips_through_json() {
        let p = small_params();
        let d = process_gray("flat", &Frame::filled(64, 64, 50.0).unwrap(), &p, Execution::Sequential).unwrap();
        let line = serde_json::to_string(&d).unwrap();
        let back: FrameDecision = serde_json::from_str(&line).unwrap();
        assert_eq!(back, d);
    }
}
