//! Per-component size, centre of mass, tensor of inertia and eccentricity.
//!
//! Raw moments are accumulated in integer arithmetic so the central moments
//! are a single correctly rounded division each.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::midpass::PixelSet;

/// `λ_min` at or below this fraction of `λ_max` counts as zero.
pub const EIGEN_EPS: f64 = 1e-9;

/// Symmetric 2×2 tensor `[[Σŷ², −Σx̂ŷ], [−Σx̂ŷ, Σx̂²]]`.
pub type Tensor2 = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RawMoments {
    n: i128,
    sx: i128,
    sy: i128,
    sxx: i128,
    syy: i128,
    sxy: i128,
}

impl RawMoments {
    fn of(pixels: &[(usize, usize)]) -> Self {
        let mut m = RawMoments {
            n: 0,
            sx: 0,
            sy: 0,
            sxx: 0,
            syy: 0,
            sxy: 0,
        };
        for &(i, j) in pixels {
            let (x, y) = (j as i128, i as i128);
            m.n += 1;
            m.sx += x;
            m.sy += y;
            m.sxx += x * x;
            m.syy += y * y;
            m.sxy += x * y;
        }
        m
    }
}

fn nonempty(pixels: &[(usize, usize)]) -> Result<()> {
    if pixels.is_empty() {
        Err(Error::Validation("feature pixel set is empty".into()))
    } else {
        Ok(())
    }
}

/// `S^(k)`: number of pixels.
pub fn feature_size(pixels: &[(usize, usize)]) -> Result<usize> {
    nonempty(pixels)?;
    Ok(pixels.len())
}

/// Unweighted centre of mass `(c_x, c_y)`, with `x` the column.
pub fn center_of_mass(pixels: &[(usize, usize)]) -> Result<(f64, f64)> {
    nonempty(pixels)?;
    let m = RawMoments::of(pixels);
    Ok((m.sx as f64 / m.n as f64, m.sy as f64 / m.n as f64))
}

/// Tensor of inertia about the centre of mass.
pub fn inertia_tensor(pixels: &[(usize, usize)]) -> Result<Tensor2> {
    nonempty(pixels)?;
    let m = RawMoments::of(pixels);
    let n = m.n as f64;
    // S·Σx̂² = S·Σx² − (Σx)², and likewise for the other entries.
    let cxx = (m.n * m.sxx - m.sx * m.sx) as f64 / n;
    let cyy = (m.n * m.syy - m.sy * m.sy) as f64 / n;
    let cxy = (m.n * m.sxy - m.sx * m.sy) as f64 / n;
    Ok([[cyy, -cxy], [-cxy, cxx]])
}

/// `(λ_max, λ_min)` of a symmetric 2×2 matrix.
pub fn eigenvalues(t: &Tensor2) -> (f64, f64) {
    let (a, b, c) = (t[0][0], t[0][1], t[1][1]);
    let mean = 0.5 * (a + c);
    let radius = (0.5 * (a - c)).hypot(b);
    let hi = mean + radius;
    let det = a * c - b * b;
    // det / λ_max avoids cancellation in mean − radius.
    let lo = if hi > 0.0 { (det / hi).max(0.0) } else { 0.0 };
    (hi, lo.min(hi))
}

/// `E = λ_max / λ_min`; infinite for degenerate (line-like) tensors.
pub fn eccentricity(t: &Tensor2) -> f64 {
    let (hi, lo) = eigenvalues(t);
    if lo <= EIGEN_EPS * hi || hi <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Shape description of one connected component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    /// 1-based component number.
    pub index: usize,
    pub size: usize,
    pub centroid: (f64, f64),
    pub inertia: Tensor2,
    pub lambda_max: f64,
    pub lambda_min: f64,
    #[serde(with = "crate::serde_inf")]
    pub eccentricity: f64,
}

impl Feature {
    pub fn from_pixels(index: usize, pixels: &[(usize, usize)]) -> Result<Self> {
        let size = feature_size(pixels)?;
        let centroid = center_of_mass(pixels)?;
        let inertia = inertia_tensor(pixels)?;
        let (lambda_max, lambda_min) = eigenvalues(&inertia);
        Ok(Feature {
            index,
            size,
            centroid,
            inertia,
            lambda_max,
            lambda_min,
            eccentricity: eccentricity(&inertia),
        })
    }
}

/// Thresholds of the size and eccentricity criteria (all inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricCriteria {
    pub s_low: f64,
    pub s_high: f64,
    pub e_max: f64,
}

impl GeometricCriteria {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.s_low && self.s_low < self.s_high) {
            return Err(Error::param("size bounds require 0 < S_L < S_U"));
        }
        if !(self.e_max >= 1.0) {
            return Err(Error::param("E_max must be >= 1"));
        }
        Ok(())
    }

    pub fn size_ok(&self, size: usize) -> bool {
        let s = size as f64;
        self.s_low <= s && s <= self.s_high
    }

    pub fn eccentricity_ok(&self, e: f64) -> bool {
        e <= self.e_max
    }

    pub fn accepts(&self, size: usize, e: f64) -> bool {
        self.size_ok(size) && self.eccentricity_ok(e)
    }
}

/// Outcome of the geometric criteria for one component.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVerdict {
    pub index: usize,
    pub size: usize,
    pub passes_size: bool,
    /// Moments, computed only for components that pass the size test.
    pub feature: Option<Feature>,
    pub kept: bool,
}

/// Size test first, then eccentricity on the survivors. Returns one verdict
/// per component; `K_G` is the set with `kept == true`.
pub fn geometric_filter(components: &[PixelSet], criteria: &GeometricCriteria) -> Result<Vec<FeatureVerdict>> {
    criteria.validate()?;
    components
        .iter()
        .enumerate()
        .map(|(k, pixels)| {
            let size = feature_size(pixels)?;
            let passes_size = criteria.size_ok(size);
            let feature = if passes_size {
                Some(Feature::from_pixels(k + 1, pixels)?)
            } else {
                None
            };
            let kept = feature
                .as_ref()
                .is_some_and(|f| criteria.eccentricity_ok(f.eccentricity));
            Ok(FeatureVerdict {
                index: k + 1,
                size,
                passes_size,
                feature,
                kept,
            })
        })
        .collect()
}

/// Closed polyline of the inertia ellipse, `n_samples` points for θ in
/// `[0, 2π)`. Semi-axes are `k·λ_max` and `k·λ_min` with
/// `k = √(S / (π λ_max λ_min))`, so the enclosed area equals the feature
/// size; the long axis follows the long direction of the pixel set.
pub fn ellipse_of_inertia(feature: &Feature, n_samples: usize) -> Result<Vec<(f64, f64)>> {
    if !(feature.lambda_min > 0.0) {
        return Err(Error::Degenerate(format!(
            "feature {} has a singular tensor of inertia",
            feature.index
        )));
    }
    let scale = (feature.size as f64 / (std::f64::consts::PI * feature.lambda_max * feature.lambda_min)).sqrt();
    // Adjugate of the inertia tensor: same eigenvalues, axes swapped.
    let t = &feature.inertia;
    let (mxx, mxy, myy) = (t[1][1], -t[0][1], t[0][0]);
    let (cx, cy) = feature.centroid;
    Ok((0..n_samples)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n_samples as f64;
            let (c, s) = (theta.cos(), theta.sin());
            (cx + scale * (mxx * c + mxy * s), cy + scale * (mxy * c + myy * s))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rect(i0: usize, j0: usize, rows: usize, cols: usize) -> PixelSet {
        (i0..i0 + rows).flat_map(|i| (j0..j0 + cols).map(move |j| (i, j))).collect()
    }

    fn shoelace(points: &[(f64, f64)]) -> f64 {
        let n = points.len();
        let twice: f64 = (0..n)
            .map(|k| {
                let (a, b) = (points[k], points[(k + 1) % n]);
                a.0 * b.1 - b.0 * a.1
            })
            .sum();
        twice.abs() / 2.0
    }

    #[test]
    fn size_examples() {
        assert_eq!(feature_size(&[(3, 4)]).unwrap(), 1);
        assert_eq!(feature_size(&rect(2, 2, 3, 5)).unwrap(), 15);
        assert!(feature_size(&[]).is_err());
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(center_of_mass(&[(5, 7)]).unwrap(), (7.0, 5.0));
        assert_eq!(center_of_mass(&rect(8, 8, 5, 5)).unwrap(), (10.0, 10.0));
        let ell: PixelSet = vec![(1, 1), (2, 1), (3, 1), (3, 2), (3, 3)];
        assert_eq!(center_of_mass(&ell).unwrap(), (8.0 / 5.0, 12.0 / 5.0));
        assert!(center_of_mass(&[]).is_err());
    }

    #[test]
    fn tensor_examples() {
        assert_eq!(inertia_tensor(&[(9, 9)]).unwrap(), [[0.0, 0.0], [0.0, 0.0]]);
        assert_eq!(inertia_tensor(&rect(4, 6, 3, 5)).unwrap(), [[10.0, 0.0], [0.0, 30.0]]);
        // Pixel pair on the diagonal, 0-based (0,0),(1,1) shifted to 1-based.
        assert_eq!(
            inertia_tensor(&[(1, 1), (2, 2)]).unwrap(),
            [[0.5, -0.5], [-0.5, 0.5]]
        );
    }

    #[test]
    fn eccentricity_examples() {
        assert_eq!(eccentricity(&[[1.0, 0.0], [0.0, 1.0]]), 1.0);
        assert_eq!(eccentricity(&[[10.0, 0.0], [0.0, 30.0]]), 3.0);
        assert_eq!(eccentricity(&[[0.5, -0.5], [-0.5, 0.5]]), f64::INFINITY);
        assert_eq!(eccentricity(&[[0.0, 0.0], [0.0, 0.0]]), f64::INFINITY);
        let (hi, lo) = eigenvalues(&[[0.5, -0.5], [-0.5, 0.5]]);
        assert_eq!((hi, lo), (1.0, 0.0));
    }

    #[test]
    fn filter_examples_at_default_thresholds() {
        // ⌈(256/15)²⌉ = 292, ⌈(256/4.5)²⌉ = 3237
        let c = GeometricCriteria {
            s_low: 292.0,
            s_high: 3237.0,
            e_max: 6.5,
        };
        assert!(c.accepts(1000, 2.0));
        assert!(!c.accepts(100, 1.0));
        assert!(!c.accepts(1000, 7.0));
        assert!(c.accepts(292, 6.5));
        assert!(c.accepts(3237, 1.0));
        assert!(!c.accepts(3238, 1.0));
        assert!(!c.accepts(1000, f64::INFINITY));
    }

    #[test]
    fn filter_skips_moments_for_small_components() {
        let c = GeometricCriteria {
            s_low: 10.0,
            s_high: 100.0,
            e_max: 6.5,
        };
        let comps = vec![vec![(1, 1)], rect(10, 10, 4, 4), rect(30, 1, 2, 40)];
        let v = geometric_filter(&comps, &c).unwrap();
        assert!(v[0].feature.is_none() && !v[0].kept);
        assert!(v[1].kept);
        assert_eq!(v[1].feature.as_ref().unwrap().index, 2);
        assert!(v[2].passes_size && !v[2].kept);
        assert!(geometric_filter(&comps, &GeometricCriteria { s_low: 5.0, s_high: 4.0, e_max: 2.0 }).is_err());
    }

    #[test]
    fn unit_circle_ellipse() {
        let f = Feature {
            index: 1,
            size: 0,
            centroid: (3.0, 4.0),
            inertia: [[1.0, 0.0], [0.0, 1.0]],
            lambda_max: 1.0,
            lambda_min: 1.0,
            eccentricity: 1.0,
        };
        // S = π is not an integer size; scale the check instead.
        let f = Feature { size: 3, ..f };
        let k = (3.0 / std::f64::consts::PI).sqrt();
        for (x, y) in ellipse_of_inertia(&f, 64).unwrap() {
            assert!((((x - 3.0).powi(2) + (y - 4.0).powi(2)).sqrt() - k).abs() < 1e-12);
        }
    }

    #[test]
    fn ellipse_area_matches_size() {
        let blob: PixelSet = rect(20, 30, 9, 21)
            .into_iter()
            .chain(rect(29, 35, 6, 4))
            .collect();
        let f = Feature::from_pixels(1, &blob).unwrap();
        let poly = ellipse_of_inertia(&f, 360).unwrap();
        let area = shoelace(&poly);
        assert!((area - f.size as f64).abs() / (f.size as f64) < 0.01);
    }

    #[test]
    fn ellipse_follows_long_axis() {
        let f = Feature::from_pixels(1, &rect(10, 10, 3, 15)).unwrap();
        let poly = ellipse_of_inertia(&f, 4).unwrap();
        let (cx, cy) = f.centroid;
        // θ = 0 point sits along +x, θ = π/2 along +y.
        assert!((poly[0].0 - cx) > 3.0 * (poly[1].1 - cy));
    }

    #[test]
    fn ellipse_rotates_with_pixels() {
        let blob: PixelSet = vec![(10, 10), (10, 11), (10, 12), (11, 10), (11, 11), (12, 10), (13, 10), (13, 11)];
        // (x, y) -> (-y, x), shifted back into positive indices.
        let rotated: PixelSet = blob.iter().map(|&(i, j)| (j, 40 - i)).collect();
        let a = Feature::from_pixels(1, &blob).unwrap();
        let b = Feature::from_pixels(1, &rotated).unwrap();
        let pa = ellipse_of_inertia(&a, 360).unwrap();
        let pb = ellipse_of_inertia(&b, 360).unwrap();
        for k in 0..360 {
            let (x, y) = (pa[k].0 - a.centroid.0, pa[k].1 - a.centroid.1);
            let q = pb[(k + 90) % 360];
            assert!((q.0 - b.centroid.0 + y).abs() < 1e-6);
            assert!((q.1 - b.centroid.1 - x).abs() < 1e-6);
        }
    }

    #[test]
    fn degenerate_ellipse_is_an_error() {
        let f = Feature::from_pixels(1, &[(1, 1), (2, 2)]).unwrap();
        assert!(matches!(ellipse_of_inertia(&f, 10), Err(Error::Degenerate(_))));
    }

    fn blob_strategy() -> impl Strategy<Value = PixelSet> {
        proptest::collection::btree_set((1usize..30, 1usize..30), 1..120)
            .prop_map(|s| s.into_iter().collect())
    }

    proptest! {
        #[test]
        fn tensor_is_translation_invariant(blob in blob_strategy(), di in 0usize..50, dj in 0usize..50) {
            let moved: PixelSet = blob.iter().map(|&(i, j)| (i + di, j + dj)).collect();
            prop_assert_eq!(inertia_tensor(&blob).unwrap(), inertia_tensor(&moved).unwrap());
        }

        #[test]
        fn eccentricity_invariant_under_rotation_and_transpose(blob in blob_strategy()) {
            let e = eccentricity(&inertia_tensor(&blob).unwrap());
            let rotated: PixelSet = blob.iter().map(|&(i, j)| (j, 100 - i)).collect();
            let transposed: PixelSet = blob.iter().map(|&(i, j)| (j, i)).collect();
            prop_assert_eq!(e, eccentricity(&inertia_tensor(&rotated).unwrap()));
            prop_assert_eq!(e, eccentricity(&inertia_tensor(&transposed).unwrap()));
            prop_assert!(e >= 1.0);
        }

        #[test]
        fn filter_is_monotone(blobs in proptest::collection::vec(blob_strategy(), 1..6),
                              s_low in 1.0f64..40.0, s_span in 1.0f64..80.0, e_max in 1.0f64..10.0,
                              widen in 0.0f64..20.0, raise in 0.0f64..5.0) {
            let base = GeometricCriteria { s_low, s_high: s_low + s_span, e_max };
            let wider = GeometricCriteria {
                s_low: (s_low - widen).max(0.5),
                s_high: s_low + s_span + widen,
                e_max: e_max + raise,
            };
            let a = geometric_filter(&blobs, &base).unwrap();
            let b = geometric_filter(&blobs, &wider).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(!x.kept || y.kept);
            }
        }
    }
}
