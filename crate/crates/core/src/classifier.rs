//! Weighted centroids, best-fit ball radii and the binary classifier.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{CircularMask, Frame};
use crate::midpass::MidpassImage;

/// `u`-weighted centre of a feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedCentroid {
    pub cx: f64,
    pub cy: f64,
    /// Total weight `U`.
    pub mass: f64,
    /// Set when `U = 0` and the plain centroid was used instead.
    pub unweighted: bool,
}

pub fn weighted_centroid(u: &MidpassImage, pixels: &[(usize, usize)]) -> Result<WeightedCentroid> {
    if pixels.is_empty() {
        return Err(Error::Validation("feature pixel set is empty".into()));
    }
    let (mut mass, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for &(i, j) in pixels {
        let w = u.u.at(i, j);
        mass += w;
        sx += w * j as f64;
        sy += w * i as f64;
    }
    if mass > 0.0 {
        return Ok(WeightedCentroid {
            cx: sx / mass,
            cy: sy / mass,
            mass,
            unweighted: false,
        });
    }
    let n = pixels.len() as f64;
    Ok(WeightedCentroid {
        cx: pixels.iter().map(|p| p.1 as f64).sum::<f64>() / n,
        cy: pixels.iter().map(|p| p.0 as f64).sum::<f64>() / n,
        mass,
        unweighted: true,
    })
}

fn cap_value(radius: u32, cx: f64, cy: f64, i: usize, j: usize, norm: f64) -> f64 {
    let r = radius as f64;
    let (dy, dx) = (i as f64 - cy, j as f64 - cx);
    ((r * r - dy * dy - dx * dx) / norm).max(0.0)
}

/// Clipped paraboloid cap `b̃(R)` over the whole frame.
pub fn ball_surface(radius: u32, center: (f64, f64), nx: usize, ny: usize) -> Result<Frame> {
    if radius == 0 {
        return Err(Error::param("ball radius must be at least 1"));
    }
    let norm = (nx * nx) as f64;
    Frame::from_fn(nx, ny, |i, j| cap_value(radius, center.0, center.1, i, j, norm))
}

/// Result of the radius scan for one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallFit {
    pub index: usize,
    pub center: WeightedCentroid,
    pub r_opt: u32,
    /// `‖u − b̃(R_opt)‖_F` over the mask.
    pub objective: f64,
}

/// Largest radius in the scan, `⌊N_x/3⌋`.
pub fn max_search_radius(nx: usize) -> u32 {
    (nx / 3) as u32
}

/// Exhaustive integer scan over `[1, ⌊N_x/3⌋]`; ties go to the smaller
/// radius. Only the cap support changes between radii, so each candidate
/// costs `O(R²)` on top of the masked energy `Σ u²`.
pub fn fit_ball_radius(u: &MidpassImage, center: WeightedCentroid, mask: &CircularMask, index: usize) -> Result<BallFit> {
    let f = &u.u;
    if !mask.fits(f) {
        return Err(Error::Dimension("mask does not match mid-pass image".into()));
    }
    let (nx, ny) = (f.nx(), f.ny());
    let norm = (nx * nx) as f64;
    let inside = mask.flags();
    let energy: f64 = f
        .data()
        .iter()
        .zip(&inside)
        .filter(|(_, &m)| m)
        .map(|(v, _)| v * v)
        .sum();
    let r_top = max_search_radius(nx).max(1);
    let mut best: Option<(u32, f64)> = None;
    for r in 1..=r_top {
        let rf = r as f64;
        let i_lo = ((center.cy - rf).floor().max(1.0)) as usize;
        let i_hi = ((center.cy + rf).ceil().min(ny as f64)) as usize;
        let j_lo = ((center.cx - rf).floor().max(1.0)) as usize;
        let j_hi = ((center.cx + rf).ceil().min(nx as f64)) as usize;
        let mut delta = 0.0;
        for i in i_lo..=i_hi {
            for j in j_lo..=j_hi {
                let idx = (i - 1) * nx + (j - 1);
                if !inside[idx] {
                    continue;
                }
                let b = cap_value(r, center.cx, center.cy, i, j, norm);
                if b > 0.0 {
                    let v = f.data()[idx];
                    delta += b * (b - 2.0 * v);
                }
            }
        }
        let sq = (energy + delta).max(0.0);
        if best.is_none_or(|(_, s)| sq < s) {
            best = Some((r, sq));
        }
    }
    let (r_opt, _) = best.expect("scan range is nonempty");
    let residual: f64 = (1..=ny)
        .flat_map(|i| (1..=nx).map(move |j| (i, j)))
        .zip(&inside)
        .filter(|(_, &m)| m)
        .map(|((i, j), _)| {
            let d = f.at(i, j) - cap_value(r_opt, center.cx, center.cy, i, j, norm);
            d * d
        })
        .sum();
    Ok(BallFit {
        index,
        center,
        r_opt,
        objective: residual.sqrt(),
    })
}

/// `R_max`: largest fitted radius, 0 when nothing was fitted.
pub fn decision_radius(fits: &[BallFit]) -> u32 {
    fits.iter().map(|f| f.r_opt).max().unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Polyp,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Normal => "normal",
            Label::Polyp => "polyp",
        })
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Label::Normal),
            "polyp" => Ok(Label::Polyp),
            other => Err(Error::Input(format!("unknown label {other:?}"))),
        }
    }
}

/// `"polyp"` iff `R_max ≥ R_P`.
pub fn classify(r_max: u32, r_p: u32) -> Result<Label> {
    if r_p == 0 {
        return Err(Error::param("R_P must be positive"));
    }
    Ok(if r_max >= r_p { Label::Polyp } else { Label::Normal })
}
