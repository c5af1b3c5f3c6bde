//! Cartoon + texture split, the texture peak `T_max` and the pre-selection test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::imaging::{apply_mask, convolve_separable, mirror_index, CircularMask, Frame, GaussianKernel1D};

/// Knobs of the nonlinear low-pass/high-pass decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionParams {
    pub sigma_t: f64,
    pub n_iter: usize,
    /// Relative total-variation reduction at which blending towards the
    /// low-pass image starts.
    pub ramp_low: f64,
    /// Reduction at which the pixel is taken entirely from the low-pass image.
    pub ramp_high: f64,
}

impl DecompositionParams {
    pub fn new(sigma_t: f64, n_iter: usize) -> Self {
        DecompositionParams {
            sigma_t,
            n_iter,
            ramp_low: 0.25,
            ramp_high: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iter < 1 {
            return Err(Error::param("n_iter must be >= 1"));
        }
        if !(self.sigma_t >= 1.0) {
            return Err(Error::param(format!("sigma_t {} must be >= 1", self.sigma_t)));
        }
        if !(0.0 <= self.ramp_low && self.ramp_low < self.ramp_high) {
            return Err(Error::param("ramp knots must satisfy 0 <= low < high"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextureDecomposition {
    pub cartoon: Frame,
    pub texture: Frame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TexturePeak {
    pub transformed: Frame,
    pub t_max: f64,
}

/// `f − (I − G)^n f`: Gaussian low-pass sharpened by `n` residual iterations.
fn iterated_low_pass(f: &Frame, kernel: &GaussianKernel1D, n_iter: usize, exec: Execution) -> Frame {
    let mut residual = f.clone();
    for _ in 0..n_iter {
        let smooth = convolve_separable(&residual, kernel, exec);
        residual = residual
            .zip_map(&smooth, |r, s| r - s)
            .expect("same dimensions");
    }
    f.zip_map(&residual, |v, r| v - r).expect("same dimensions")
}

/// Forward-difference gradient magnitude with mirrored borders.
fn gradient_magnitude(f: &Frame) -> Frame {
    let (nx, ny) = (f.nx(), f.ny());
    let d = f.data();
    let mut out = vec![0.0; nx * ny];
    for r in 0..ny {
        let rn = mirror_index(r as isize + 1, ny);
        for c in 0..nx {
            let cn = mirror_index(c as isize + 1, nx);
            let here = d[r * nx + c];
            let gx = d[r * nx + cn] - here;
            let gy = d[rn * nx + c] - here;
            out[r * nx + c] = gx.hypot(gy);
        }
    }
    f.derived(out)
}

/// Local total variation: Gaussian-weighted mean of `|∇f|`.
pub fn local_total_variation(f: &Frame, kernel: &GaussianKernel1D, exec: Execution) -> Frame {
    convolve_separable(&gradient_magnitude(f), kernel, exec)
}

fn blend_weight(lambda: f64, low: f64, high: f64) -> f64 {
    ((lambda - low) / (high - low)).clamp(0.0, 1.0)
}

/// Split `f = cartoon + texture`. Where smoothing removes a large share of the
/// local total variation the pixel is oscillatory and the cartoon takes the
/// low-pass value; elsewhere the cartoon keeps `f`.
pub fn decompose_cartoon_texture(f: &Frame, params: &DecompositionParams) -> Result<TextureDecomposition> {
    decompose_with(f, params, Execution::default())
}

pub fn decompose_with(f: &Frame, params: &DecompositionParams, exec: Execution) -> Result<TextureDecomposition> {
    params.validate()?;
    let kernel = GaussianKernel1D::new(params.sigma_t)?;
    let low = iterated_low_pass(f, &kernel, params.n_iter, exec);
    let ltv_f = local_total_variation(f, &kernel, exec);
    let ltv_low = local_total_variation(&low, &kernel, exec);

    let mut cartoon = Vec::with_capacity(f.data().len());
    for k in 0..f.data().len() {
        let before = ltv_f.data()[k];
        let lambda = if before > 0.0 {
            (before - ltv_low.data()[k]) / before
        } else {
            0.0
        };
        let w = blend_weight(lambda, params.ramp_low, params.ramp_high);
        cartoon.push(w * low.data()[k] + (1.0 - w) * f.data()[k]);
    }
    let cartoon = f.derived(cartoon);
    let texture = f.zip_map(&cartoon, |v, c| v - c)?;
    Ok(TextureDecomposition { cartoon, texture })
}

/// `T = L_σ(|t|^p)`, zeroed outside the mask, and its maximum.
pub fn texture_transform(t: &Frame, sigma: f64, p: f64, mask: &CircularMask) -> Result<TexturePeak> {
    texture_transform_with(t, sigma, p, mask, Execution::default())
}

pub fn texture_transform_with(
    t: &Frame,
    sigma: f64,
    p: f64,
    mask: &CircularMask,
    exec: Execution,
) -> Result<TexturePeak> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param(format!("texture exponent {p} outside (0, 1]")));
    }
    let kernel = GaussianKernel1D::new(sigma)?;
    let powered = t.map(|v| v.abs().powf(p));
    let transformed = apply_mask(&convolve_separable(&powered, &kernel, exec), mask, 0.0);
    let t_max = transformed.max();
    Ok(TexturePeak { transformed, t_max })
}

/// `T_L ≤ T_max ≤ T_U`.
pub fn preselect(t_max: f64, t_low: f64, t_high: f64) -> Result<bool> {
    if !(t_low < t_high) {
        return Err(Error::param(format!(
            "texture bounds require T_L < T_U, got {t_low} and {t_high}"
        )));
    }
    Ok(t_low <= t_max && t_max <= t_high)
}
