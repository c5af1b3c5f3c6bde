//! Ratio-of-Gaussians mid-pass filter, clamped thresholding and connected components.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::imaging::{apply_mask, convolve_separable, CircularMask, Frame, GaussianKernel1D};

/// Floor for `L_{σ2} f` in the ratio, on the 0..=255 scale.
pub const DENOMINATOR_FLOOR: f64 = 1e-3;

/// Non-negative mid-pass response, zero outside the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MidpassImage {
    pub u: Frame,
}

/// `u = H(w)·w` with `w = L_{σ1} f / L_{σ2} f − 1`, masked to zero.
pub fn midpass_filter(f: &Frame, sigma1: f64, sigma2: f64, mask: &CircularMask) -> Result<MidpassImage> {
    midpass_filter_with(f, sigma1, sigma2, mask, Execution::default())
}

pub fn midpass_filter_with(
    f: &Frame,
    sigma1: f64,
    sigma2: f64,
    mask: &CircularMask,
    exec: Execution,
) -> Result<MidpassImage> {
    if !(sigma1 < sigma2) {
        return Err(Error::param(format!(
            "mid-pass needs sigma1 < sigma2, got {sigma1} and {sigma2}"
        )));
    }
    let narrow = convolve_separable(f, &GaussianKernel1D::new(sigma1)?, exec);
    let wide = convolve_separable(f, &GaussianKernel1D::new(sigma2)?, exec);
    let u = narrow.zip_map(&wide, |a, b| {
        let w = a / b.max(DENOMINATOR_FLOOR) - 1.0;
        if w >= 0.0 {
            w
        } else {
            0.0
        }
    })?;
    Ok(MidpassImage {
        u: apply_mask(&u, mask, 0.0),
    })
}

/// `Θ = max(min(½ max u, M_U), M_L)`.
pub fn segmentation_threshold(u: &MidpassImage, m_low: f64, m_high: f64) -> Result<f64> {
    if !(0.0 < m_low && m_low < m_high) {
        return Err(Error::param(format!(
            "threshold bounds require 0 < M_L < M_U, got {m_low} and {m_high}"
        )));
    }
    Ok((0.5 * u.u.max()).min(m_high).max(m_low))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    nx: usize,
    ny: usize,
    bits: Vec<bool>,
}

impl BinaryImage {
    pub fn new(nx: usize, ny: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != nx * ny {
            return Err(Error::Dimension(format!(
                "expected {} cells, got {}",
                nx * ny,
                bits.len()
            )));
        }
        Ok(BinaryImage { nx, ny, bits })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// 1-based access.
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[(i - 1) * self.nx + (j - 1)]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Pixels of one connected component as 1-based `(i, j)`, row-major order.
pub type PixelSet = Vec<(usize, usize)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

/// Connectivity used by the pipeline.
pub const CONNECTIVITY: Connectivity = Connectivity::Eight;

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub s: BinaryImage,
    pub theta: f64,
    pub components: Vec<PixelSet>,
}

impl Segmentation {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }
}

/// `s = H(u − Θ)`: a pixel is set when `u ≥ Θ`.
pub fn binary_segment(u: &MidpassImage, theta: f64) -> Result<BinaryImage> {
    if !(theta > 0.0) {
        return Err(Error::param(format!("threshold {theta} must be positive")));
    }
    BinaryImage::new(
        u.u.nx(),
        u.u.ny(),
        u.u.data().iter().map(|&v| v >= theta).collect(),
    )
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
}

/// Two-pass union-find labelling. Components are numbered by their first
/// pixel in a row-major scan.
pub fn connected_components(s: &BinaryImage) -> Vec<PixelSet> {
    connected_components_with(s, CONNECTIVITY)
}

pub fn connected_components_with(s: &BinaryImage, conn: Connectivity) -> Vec<PixelSet> {
    let (nx, ny) = (s.nx, s.ny);
    // Provisional label per pixel; 0 = background.
    let mut labels = vec![0usize; nx * ny];
    let mut parent = vec![0usize];
    let back: &[(isize, isize)] = match conn {
        Connectivity::Four => &[(0, -1), (-1, 0)],
        Connectivity::Eight => &[(0, -1), (-1, -1), (-1, 0), (-1, 1)],
    };
    for r in 0..ny {
        for c in 0..nx {
            if !s.bits[r * nx + c] {
                continue;
            }
            let mut mine = 0;
            for &(dr, dc) in back {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                if rr < 0 || cc < 0 || cc >= nx as isize {
                    continue;
                }
                let l = labels[rr as usize * nx + cc as usize];
                if l == 0 {
                    continue;
                }
                if mine == 0 {
                    mine = l;
                } else {
                    union(&mut parent, mine, l);
                }
            }
            if mine == 0 {
                mine = parent.len();
                parent.push(mine);
            }
            labels[r * nx + c] = mine;
        }
    }

    let mut final_index = vec![usize::MAX; parent.len()];
    let mut components: Vec<PixelSet> = Vec::new();
    for r in 0..ny {
        for c in 0..nx {
            let l = labels[r * nx + c];
            if l == 0 {
                continue;
            }
            let root = find(&mut parent, l);
            if final_index[root] == usize::MAX {
                final_index[root] = components.len();
                components.push(Vec::new());
            }
            components[final_index[root]].push((r + 1, c + 1));
        }
    }
    components
}

/// Threshold, binarise and label in one go.
pub fn segment(u: &MidpassImage, m_low: f64, m_high: f64) -> Result<Segmentation> {
    let theta = segmentation_threshold(u, m_low, m_high)?;
    let s = binary_segment(u, theta)?;
    let components = connected_components(&s);
    Ok(Segmentation { s, theta, components })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn from_rows(rows: &[&str]) -> BinaryImage {
        let ny = rows.len();
        let nx = rows[0].len();
        let bits = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        BinaryImage::new(nx, ny, bits).unwrap()
    }

    fn u_frame(n: usize, f: impl FnMut(usize, usize) -> f64) -> MidpassImage {
        MidpassImage {
            u: Frame::from_fn(n, n, f).unwrap(),
        }
    }

    #[test]
    fn constant_frame_gives_zero_response() {
        let f = Frame::filled(64, 64, 120.0).unwrap();
        let m = CircularMask::new(64, 64, 28.8).unwrap();
        let u = midpass_filter(&f, 3.0, 9.0, &m).unwrap();
        assert!(u.u.data().iter().all(|&v| v.abs() < 1e-12));
        assert!(midpass_filter(&f, 9.0, 9.0, &m).is_err());
        assert!(midpass_filter(&f, 9.0, 3.0, &m).is_err());
    }

    #[test]
    fn scale_invariance() {
        let n = 64;
        let m = CircularMask::new(n, n, 28.8).unwrap();
        let f = Frame::from_fn(n, n, |i, j| 60.0 + ((i * 7 + j * 13) % 17) as f64 * 3.0).unwrap();
        let base = midpass_filter(&f, 3.0, 9.0, &m).unwrap();
        for alpha in [0.5, 2.0, 10.0] {
            let scaled = midpass_filter(&f.scale(alpha), 3.0, 9.0, &m).unwrap();
            for (a, b) in base.u.data().iter().zip(scaled.u.data()) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn bump_peak_is_found() {
        let n = 128;
        let (ci, cj) = (60.0, 70.0);
        let f = Frame::from_fn(n, n, |i, j| {
            let r2 = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2);
            100.0 + 80.0 * (-r2 / (2.0 * 10.0 * 10.0)).exp()
        })
        .unwrap();
        let m = CircularMask::new(n, n, 57.6).unwrap();
        let u = midpass_filter(&f, 7.0, 30.0, &m).unwrap();
        assert!(u.u.data().iter().all(|&v| v >= 0.0));
        assert_eq!(u.u.at(1, 1), 0.0);
        let (i, j) = u.u.argmax();
        assert!(((i as f64 - ci).powi(2) + (j as f64 - cj).powi(2)).sqrt() <= 2.0);
    }

    #[test]
    fn dark_denominator_is_floored() {
        let f = Frame::filled(32, 32, 0.0).unwrap();
        let m = CircularMask::new(32, 32, 14.0).unwrap();
        let u = midpass_filter(&f, 2.0, 5.0, &m).unwrap();
        assert!(u.u.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn threshold_clamp() {
        let with_max = |v: f64| u_frame(8, |i, j| if (i, j) == (4, 4) { v } else { 0.0 });
        assert_eq!(segmentation_threshold(&with_max(0.5), 0.11, 0.16).unwrap(), 0.16);
        assert_eq!(segmentation_threshold(&with_max(0.10), 0.11, 0.16).unwrap(), 0.11);
        assert_eq!(segmentation_threshold(&with_max(0.28), 0.11, 0.16).unwrap(), 0.14);
        assert!(segmentation_threshold(&with_max(0.28), 0.16, 0.11).is_err());
        assert!(segmentation_threshold(&with_max(0.28), 0.0, 0.11).is_err());
    }

    #[test]
    fn segment_examples() {
        let low = u_frame(8, |_, _| 0.05);
        let s = binary_segment(&low, 0.11).unwrap();
        assert_eq!(s.count(), 0);
        assert!(connected_components(&s).is_empty());

        let exact = u_frame(8, |i, j| if (i, j) == (2, 3) { 0.11 } else { 0.0 });
        let s = binary_segment(&exact, 0.11).unwrap();
        assert!(s.get(2, 3));
        assert_eq!(s.count(), 1);

        let disks = [((10.0, 10.0), 4.0), ((22.0, 25.0), 5.0)];
        let inside = |i: usize, j: usize| {
            disks.iter().any(|&((ci, cj), r)| {
                (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2) <= r * r
            })
        };
        let u = u_frame(32, |i, j| if inside(i, j) { 0.3 } else { 0.01 });
        let s = binary_segment(&u, 0.15).unwrap();
        for i in 1..=32 {
            for j in 1..=32 {
                assert_eq!(s.get(i, j), inside(i, j));
            }
        }
        assert_eq!(connected_components(&s).len(), 2);
        assert!(binary_segment(&u, 0.0).is_err());
    }

    #[test]
    fn component_examples() {
        let gap = from_rows(&["##..##", "##..##", "......"]);
        assert_eq!(connected_components(&gap).len(), 2);

        let diagonal = from_rows(&["#.", ".#"]);
        assert_eq!(connected_components(&diagonal).len(), 1);
        assert_eq!(connected_components_with(&diagonal, Connectivity::Four).len(), 2);

        // A U shape merges two provisional labels; numbering follows first pixel.
        let u = from_rows(&["#..#.#", "#..#..", "####..", "......"]);
        let comps = connected_components(&u);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0][0], (1, 1));
        assert_eq!(comps[1], vec![(1, 6)]);
        let total: usize = comps.iter().map(Vec::len).sum();
        assert_eq!(total, u.count());
        let all: BTreeSet<_> = comps.iter().flatten().collect();
        assert_eq!(all.len(), total);
    }
}
