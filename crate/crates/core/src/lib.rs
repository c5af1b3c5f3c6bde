//! Polyp detection in capsule endoscopy frames.
//!
//! A frame is pre-processed (vignetting correction, radial extension beyond
//! the circular field of view), screened by a texture peak, filtered with a
//! ratio-of-Gaussians mid-pass filter and segmented. Components that are the
//! right size and not too stretched get a best-fit paraboloid cap, and the
//! largest cap radius is the frame score.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod error;
pub mod eval;
pub mod exec;
pub mod geometry;
pub mod imaging;
pub mod io;
pub mod midpass;
pub mod params;
pub mod pipeline;
pub mod preprocess;
pub mod synth;
pub mod texture;

pub use classifier::{classify, BallFit, Label};
pub use error::{Error, Result};
pub use exec::Execution;
pub use imaging::{CircularMask, Frame};
pub use params::PipelineParams;
pub use pipeline::{process_frame, FrameDecision};

/// Serialises non-finite floats as `null` and reads `null` back as `+∞`.
pub(crate) mod serde_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
