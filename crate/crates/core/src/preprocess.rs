//! Illumination normalisation and extension of the frame beyond the field of view.

use serde::{Deserialize, Serialize};

use crate::imaging::{CircularMask, Frame};

/// Radial gain `g(ρ) = 1 + a1 ρ² + a2 ρ⁴ + a3 ρ⁶`, with `ρ` the distance from
/// the frame centre divided by the mask radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGainModel {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

/// Lowest gain a model may take on `ρ ∈ [0, 1]`.
pub const MIN_GAIN: f64 = 0.05;

/// Share of the darkest in-mask pixels left out of the gain fit.
pub const DARK_FRACTION: f64 = 0.05;

impl RadialGainModel {
    pub const IDENTITY: RadialGainModel = RadialGainModel {
        a1: 0.0,
        a2: 0.0,
        a3: 0.0,
    };

    pub fn gain(&self, rho: f64) -> f64 {
        let r2 = rho * rho;
        1.0 + r2 * (self.a1 + r2 * (self.a2 + r2 * self.a3))
    }

    /// `g > MIN_GAIN` on a fine grid of `[0, 1]`.
    pub fn is_admissible(&self) -> bool {
        (0..=200).all(|k| self.gain(k as f64 / 200.0) > MIN_GAIN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub frame: Frame,
    pub model: Option<RadialGainModel>,
    /// Set when the fit was singular or inadmissible and the input came back unchanged.
    pub degenerate: bool,
}

/// Pluggable intensity normalisation step.
pub trait IntensityNormalizer: Send + Sync {
    fn normalize(&self, f: &Frame, m: &CircularMask) -> Normalized;
}

/// Least-squares even-polynomial radial gain fit.
#[derive(Debug, Clone, Copy, Default)]
pub struct RadialGainCorrector;

impl IntensityNormalizer for RadialGainCorrector {
    fn normalize(&self, f: &Frame, m: &CircularMask) -> Normalized {
        correct_vignetting(f, m)
    }
}

fn rho_squared(m: &CircularMask, i: usize, j: usize) -> f64 {
    let (cx, cy) = m.center();
    let (dx, dy) = (j as f64 - cx, i as f64 - cy);
    (dx * dx + dy * dy) / (m.radius() * m.radius())
}

/// Fit `f ≈ c0 · g(ρ)` over the mask by linear least squares in
/// `(1, ρ², ρ⁴, ρ⁶)`, skipping the darkest pixels.
pub fn fit_radial_gain(f: &Frame, m: &CircularMask) -> Option<RadialGainModel> {
    let flags = m.flags();
    let mut inside: Vec<(f64, f64)> = Vec::new();
    for i in 1..=f.ny() {
        for j in 1..=f.nx() {
            if flags[(i - 1) * f.nx() + (j - 1)] {
                inside.push((rho_squared(m, i, j), f.at(i, j)));
            }
        }
    }
    if inside.len() < 4 {
        return None;
    }
    let mut values: Vec<f64> = inside.iter().map(|&(_, v)| v).collect();
    values.sort_by(f64::total_cmp);
    let cutoff = values[(DARK_FRACTION * values.len() as f64) as usize];

    let mut ata = [[0.0f64; 4]; 4];
    let mut atb = [0.0f64; 4];
    for &(r2, v) in inside.iter().filter(|&&(_, v)| v >= cutoff) {
        let basis = [1.0, r2, r2 * r2, r2 * r2 * r2];
        for a in 0..4 {
            atb[a] += basis[a] * v;
            for b in 0..4 {
                ata[a][b] += basis[a] * basis[b];
            }
        }
    }
    let coef = solve4(ata, atb)?;
    let c0 = coef[0];
    if !(c0 > 0.0) {
        return None;
    }
    let model = RadialGainModel {
        a1: coef[1] / c0,
        a2: coef[2] / c0,
        a3: coef[3] / c0,
    };
    model.is_admissible().then_some(model)
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    let scale = a.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..4 {
        let pivot = (col..4).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() <= 1e-13 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let factor = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (dst, src) in a[row].iter_mut().zip(pivot_row).skip(col) {
                *dst -= factor * src;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let tail: f64 = (row + 1..4).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Divide the in-mask pixels by the fitted radial gain and rescale so the
/// masked mean is unchanged. Pixels outside the mask are left as they are.
pub fn correct_vignetting(f: &Frame, m: &CircularMask) -> Normalized {
    let Some(model) = fit_radial_gain(f, m) else {
        log::warn!("vignetting fit degenerate; frame left unchanged");
        return Normalized {
            frame: f.clone(),
            model: None,
            degenerate: true,
        };
    };
    let flags = m.flags();
    let mut data = f.data().to_vec();
    let (mut sum_in, mut sum_out, mut count) = (0.0, 0.0, 0usize);
    for i in 1..=f.ny() {
        for j in 1..=f.nx() {
            let k = (i - 1) * f.nx() + (j - 1);
            if flags[k] {
                let corrected = data[k] / model.gain(rho_squared(m, i, j).sqrt());
                sum_in += data[k];
                sum_out += corrected;
                data[k] = corrected;
                count += 1;
            }
        }
    }
    if count > 0 && sum_out != 0.0 {
        let ratio = sum_in / sum_out;
        for (v, &inside) in data.iter_mut().zip(&flags) {
            if inside {
                *v *= ratio;
            }
        }
    }
    Normalized {
        frame: f.derived(data),
        model: Some(model),
        degenerate: false,
    }
}

/// Upwind stencil of exterior pixel `(i, j)` for `∇f · r = 1`: weights
/// `|r_x|`, `|r_y|` and the 1-based neighbours one step towards the centre.
/// An axis whose offset is below one pixel has no strictly closer neighbour
/// and drops out.
#[derive(Debug, Clone, Copy)]
struct Stencil {
    wx: f64,
    wy: f64,
    nbx: Option<(usize, usize)>,
    nby: Option<(usize, usize)>,
}

fn stencil(m: &CircularMask, i: usize, j: usize) -> Stencil {
    let (cx, cy) = m.center();
    let (dx, dy) = (j as f64 - cx, i as f64 - cy);
    let norm = dx.hypot(dy);
    let (mut wx, mut wy, mut nbx, mut nby) = (0.0, 0.0, None, None);
    if dx.abs() >= 1.0 {
        wx = dx.abs() / norm;
        nbx = Some((i, if dx > 0.0 { j - 1 } else { j + 1 }));
    }
    if dy.abs() >= 1.0 {
        wy = dy.abs() / norm;
        nby = Some((if dy > 0.0 { i - 1 } else { i + 1 }, j));
    }
    Stencil { wx, wy, nbx, nby }
}

/// Exterior pixels ordered by distance from the centre (ties row-major).
fn exterior_order(m: &CircularMask, nx: usize, ny: usize) -> Vec<(usize, usize)> {
    let mut px: Vec<(i64, usize, usize)> = Vec::new();
    for i in 1..=ny {
        for j in 1..=nx {
            if !m.contains(i, j) {
                let ddy = 2 * i as i64 - ny as i64;
                let ddx = 2 * j as i64 - nx as i64;
                px.push((ddx * ddx + ddy * ddy, i, j));
            }
        }
    }
    px.sort_unstable();
    px.into_iter().map(|(_, i, j)| (i, j)).collect()
}

/// Linear extension outside the mask: in-mask pixels are kept and every
/// exterior pixel solves the first-order upwind discretisation of
/// `∇f · r = 1`, visited outward so its upwind neighbours are already final.
pub fn extrapolate_radial(f: &Frame, m: &CircularMask) -> Frame {
    assert!(m.fits(f), "mask does not fit the frame");
    let nx = f.nx();
    let mut data = f.data().to_vec();
    let idx = |(i, j): (usize, usize)| (i - 1) * nx + (j - 1);
    for p in exterior_order(m, nx, f.ny()) {
        let s = stencil(m, p.0, p.1);
        let mut num = 1.0;
        if let Some(q) = s.nbx {
            num += s.wx * data[idx(q)];
        }
        if let Some(q) = s.nby {
            num += s.wy * data[idx(q)];
        }
        data[idx(p)] = num / (s.wx + s.wy);
    }
    f.derived(data)
}

/// Largest `|∇f · r - 1|` of the upwind scheme over all exterior pixels.
pub fn upwind_residual(f: &Frame, m: &CircularMask) -> f64 {
    let mut worst = 0.0f64;
    for i in 1..=f.ny() {
        for j in 1..=f.nx() {
            if m.contains(i, j) {
                continue;
            }
            let s = stencil(m, i, j);
            let here = f.at(i, j);
            let mut lhs = 0.0;
            if let Some((a, b)) = s.nbx {
                lhs += s.wx * (here - f.at(a, b));
            }
            if let Some((a, b)) = s.nby {
                lhs += s.wy * (here - f.at(a, b));
            }
            worst = worst.max((lhs - 1.0).abs());
        }
    }
    worst
}

/// Grayscale frame to pre-processed frame: normalise, then extend.
pub fn preprocess(gray: &Frame, m: &CircularMask, normalizer: &dyn IntensityNormalizer) -> (Frame, Normalized) {
    let normalized = normalizer.normalize(gray, m);
    let f = extrapolate_radial(&normalized.frame, m);
    (f, normalized)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn masked_stats(f: &Frame, m: &CircularMask) -> (f64, f64) {
        let vals: Vec<f64> = f
            .data()
            .iter()
            .zip(m.flags())
            .filter(|(_, inside)| *inside)
            .map(|(&v, _)| v)
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }

    fn random_frame(n: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::from_fn(n, n, |_, _| rng.random_range(20.0..230.0)).unwrap()
    }

    #[test]
    fn constant_frame_is_unchanged() {
        let f = Frame::filled(64, 64, 117.0).unwrap();
        let m = CircularMask::new(64, 64, 28.8).unwrap();
        let out = correct_vignetting(&f, &m);
        assert!(!out.degenerate);
        for (a, b) in out.frame.data().iter().zip(f.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn known_gain_is_flattened() {
        let n = 128;
        let m = CircularMask::new(n, n, 0.45 * n as f64).unwrap();
        let truth = RadialGainModel {
            a1: -0.5,
            a2: 0.1,
            a3: 0.0,
        };
        let f = Frame::from_fn(n, n, |i, j| 150.0 * truth.gain(rho_squared(&m, i, j).sqrt())).unwrap();
        let (mean0, sd0) = masked_stats(&f, &m);
        let out = correct_vignetting(&f, &m);
        let (mean1, sd1) = masked_stats(&out.frame, &m);
        assert!(sd1 / mean1 < 0.25 * sd0 / mean0, "cv {} vs {}", sd1 / mean1, sd0 / mean0);
        assert!((mean1 - mean0).abs() < 1e-6);
        let fitted = out.model.unwrap();
        assert!((fitted.a1 + 0.5).abs() < 1e-6 && (fitted.a2 - 0.1).abs() < 1e-6);
    }

    #[test]
    fn masked_mean_is_preserved() {
        for seed in 0..5 {
            let f = random_frame(48, seed);
            let m = CircularMask::new(48, 48, 21.6).unwrap();
            let out = correct_vignetting(&f, &m);
            assert!((masked_stats(&out.frame, &m).0 - masked_stats(&f, &m).0).abs() < 1e-6);
        }
    }

    #[test]
    fn all_zero_frame_is_degenerate() {
        let f = Frame::filled(32, 32, 0.0).unwrap();
        let m = CircularMask::new(32, 32, 14.0).unwrap();
        let out = correct_vignetting(&f, &m);
        assert!(out.degenerate);
        assert_eq!(out.frame, f);
    }

    #[test]
    fn gain_invariants() {
        assert_eq!(RadialGainModel::IDENTITY.gain(0.7), 1.0);
        let m = RadialGainModel { a1: -0.5, a2: 0.1, a3: 0.0 };
        assert_eq!(m.gain(0.0), 1.0);
        assert!(m.is_admissible());
        assert!(!RadialGainModel { a1: -0.99, a2: 0.0, a3: 0.0 }.is_admissible());
    }

    #[test]
    fn extrapolation_keeps_interior_and_solves_scheme() {
        for seed in 0..3 {
            let f = random_frame(64, seed);
            let m = CircularMask::new(64, 64, 28.8).unwrap();
            let g = extrapolate_radial(&f, &m);
            for i in 1..=64 {
                for j in 1..=64 {
                    if m.contains(i, j) {
                        assert_eq!(g.at(i, j).to_bits(), f.at(i, j).to_bits());
                    }
                }
            }
            assert!(upwind_residual(&g, &m) <= 1e-6);
            assert!(upwind_residual(&f, &m) > 1.0);
            let again = extrapolate_radial(&g, &m);
            assert_eq!(again, g);
        }
    }

    #[test]
    fn axis_rays_grow_one_per_pixel() {
        let n = 64;
        let f = Frame::filled(n, n, 80.0).unwrap();
        let m = CircularMask::new(n, n, 20.0).unwrap();
        let g = extrapolate_radial(&f, &m);
        // Row 32 is the centre row; columns beyond 32 + 20 are exterior.
        let mut expected = 80.0;
        for j in 53..=64 {
            expected += 1.0;
            assert!((g.at(32, j) - expected).abs() < 1e-12, "column {j}");
        }
        let mut expected = 80.0;
        for i in (1..=11).rev() {
            expected += 1.0;
            assert!((g.at(i, 32) - expected).abs() < 1e-12, "row {i}");
        }
    }

    #[test]
    fn odd_dimensions_are_handled() {
        let f = random_frame(33, 7).clone();
        let f = Frame::from_vec(33, 33, f.into_data()).unwrap();
        let m = CircularMask::new(33, 33, 14.0).unwrap();
        let g = extrapolate_radial(&f, &m);
        assert!(upwind_residual(&g, &m) <= 1e-6);
    }
}
