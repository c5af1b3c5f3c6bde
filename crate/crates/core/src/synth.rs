//! Seeded phantom frames resembling capsule endoscopy views, with ground truth.
//!
//! A frame is a smooth mucosa background with elongated fold ridges, an
//! optional textured dome (the polyp), optional bubble clusters, sensor
//! noise, radial vignetting and a black border outside the circular field
//! of view. Intensities are mapped to RGB with fixed channel factors.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::classifier::Label;
use crate::error::{Error, Result};
use crate::eval::manifest::{write_manifest, FrameRecord};
use crate::exec::Execution;
use crate::imaging::{gaussian_convolve_with, Frame};
use crate::io::write_rgb;

/// Channel gains applied to the rendered intensity.
pub const CHANNEL_FACTORS: [f64; 3] = [1.0, 0.72, 0.52];

/// Field-of-view radius as a fraction of the frame width.
pub const FOV_FRACTION: f64 = 0.47;

/// Correlation length (pixels) and relative amplitude of background shading.
pub const BLOTCH_SCALE: f64 = 25.0;
pub const BLOTCH_AMPLITUDE: f64 = 0.03;

/// Polyp contrast grows as `√(radius / reference)` when the view closes in.
pub const POLYP_REFERENCE_RADIUS: f64 = 0.08;
pub const POLYP_MAX_AMPLITUDE: f64 = 0.95;

/// Dome profile `(1 − (r/R)²)^k`.
pub const POLYP_PROFILE_EXPONENT: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolypSpec {
    /// `(c_x, c_y)`, 1-based.
    pub center: (f64, f64),
    pub radius: f64,
    /// Dome height relative to the local background.
    pub amplitude: f64,
    /// Relative standard deviation of the surface speckle.
    pub texture: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bulge {
    pub center: (f64, f64),
    pub radius: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub nx: usize,
    pub ny: usize,
    pub base: f64,
    /// Gain `1 + a1ρ² + a2ρ⁴ + a3ρ⁶`, `ρ` relative to the field of view.
    pub vignetting: [f64; 3],
    pub fold_count: usize,
    /// Ridge height relative to the background.
    pub fold_amplitude: f64,
    /// Ridge half-width (Gaussian σ) in pixels.
    pub fold_width: f64,
    /// Relative speckle over the whole mucosa.
    pub mucosa_texture: f64,
    pub polyp: Option<PolypSpec>,
    /// Smooth untextured swelling of healthy mucosa.
    pub bulge: Option<Bulge>,
    pub bubble_count: usize,
    /// Standard deviation of additive noise, in intensity units.
    pub noise: f64,
    pub seed: u64,
}

impl PhantomSpec {
    /// Plain mucosa with light noise.
    pub fn flat(nx: usize, seed: u64) -> Self {
        PhantomSpec {
            nx,
            ny: nx,
            base: 120.0,
            vignetting: [-0.45, 0.1, 0.0],
            fold_count: 0,
            fold_amplitude: 0.0,
            fold_width: 5.0,
            mucosa_texture: 0.0,
            polyp: None,
            bulge: None,
            bubble_count: 0,
            noise: 1.5,
            seed,
        }
    }

    pub fn fov_radius(&self) -> f64 {
        FOV_FRACTION * self.nx.min(self.ny) as f64
    }

    pub fn center(&self) -> (f64, f64) {
        (self.nx as f64 / 2.0, self.ny as f64 / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 32 || self.ny < 32 {
            return Err(Error::Spec("phantoms need at least 32x32 pixels".into()));
        }
        if !(self.base > 0.0 && self.noise >= 0.0 && self.fold_width > 0.0) {
            return Err(Error::Spec("base, noise and fold width must be positive".into()));
        }
        if let Some(p) = &self.polyp {
            if !(p.radius > 0.0 && p.amplitude >= 0.0 && p.texture >= 0.0) {
                return Err(Error::Spec("polyp radius must be positive".into()));
            }
            let (cx, cy) = self.center();
            let off = (p.center.0 - cx).hypot(p.center.1 - cy);
            if off + p.radius > self.fov_radius() {
                return Err(Error::Spec(format!(
                    "polyp at ({:.1}, {:.1}) with radius {:.1} leaves the field of view",
                    p.center.0, p.center.1, p.radius
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub label: Label,
    pub polyp_center: Option<(f64, f64)>,
    pub polyp_radius: Option<f64>,
    /// Row-major polyp pixels.
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub image: RgbImage,
    pub truth: GroundTruth,
}

fn white_noise(nx: usize, ny: usize, rng: &mut ChaCha8Rng) -> Frame {
    Frame::from_fn(nx, ny, |_, _| rng.sample::<f64, _>(StandardNormal)).expect("valid dims")
}

/// Gaussian-correlated noise rescaled to unit standard deviation.
fn correlated_noise(nx: usize, ny: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Frame {
    let smooth = gaussian_convolve_with(&white_noise(nx, ny, rng), sigma, Execution::Sequential).expect("sigma >= 1");
    let n = smooth.data().len() as f64;
    let mean = smooth.data().iter().sum::<f64>() / n;
    let sd = (smooth.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    smooth.map(|v| (v - mean) / sd.max(1e-12))
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Gently curving polyline through the field of view.
fn fold_path(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let (cx, cy) = spec.center();
    let fov = spec.fov_radius();
    let r0 = fov * rng.random_range(0.0..0.7);
    let a0 = rng.random_range(0.0..2.0 * PI);
    let mut heading = rng.random_range(0.0..2.0 * PI);
    let length = fov * rng.random_range(0.7..1.5);
    let steps = 8;
    let step = length / steps as f64;
    let bend = rng.random_range(-0.25..0.25);
    let mut p = (cx + r0 * a0.cos(), cy + r0 * a0.sin());
    // Start half a length back so the path is centred on p.
    p = (p.0 - 0.5 * length * heading.cos(), p.1 - 0.5 * length * heading.sin());
    let mut pts = vec![p];
    for _ in 0..steps {
        heading += bend;
        p = (p.0 + step * heading.cos(), p.1 + step * heading.sin());
        pts.push(p);
    }
    pts
}

struct Bubble {
    center: (f64, f64),
    radius: f64,
}

fn bubble_cluster(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Vec<Bubble> {
    let (cx, cy) = spec.center();
    let fov = spec.fov_radius();
    let clusters = 1 + spec.bubble_count / 40;
    let mut out = Vec::with_capacity(spec.bubble_count);
    let centers: Vec<(f64, f64)> = (0..clusters)
        .map(|_| {
            let r = fov * rng.random_range(0.0..0.5);
            let a = rng.random_range(0.0..2.0 * PI);
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect();
    let spread = fov * 0.3;
    for k in 0..spec.bubble_count {
        let c = centers[k % clusters];
        let r = spread * rng.random::<f64>().sqrt();
        let a = rng.random_range(0.0..2.0 * PI);
        out.push(Bubble {
            center: (c.0 + r * a.cos(), c.1 + r * a.sin()),
            radius: rng.random_range(3.0..10.0),
        });
    }
    out
}

/// Renders one frame. Identical specs give identical bytes.
pub fn generate_frame(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let (nx, ny) = (spec.nx, spec.ny);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let blotch = correlated_noise(nx, ny, BLOTCH_SCALE, &mut rng);
    let speckle = correlated_noise(nx, ny, 1.0, &mut rng);
    let sensor = white_noise(nx, ny, &mut rng);
    let folds: Vec<Vec<(f64, f64)>> = (0..spec.fold_count).map(|_| fold_path(spec, &mut rng)).collect();
    let fold_heights: Vec<f64> = (0..spec.fold_count)
        .map(|_| spec.fold_amplitude * rng.random_range(0.7..1.3))
        .collect();
    let bubbles = if spec.bubble_count > 0 {
        bubble_cluster(spec, &mut rng)
    } else {
        Vec::new()
    };

    let (cx, cy) = spec.center();
    let fov = spec.fov_radius();
    let [a1, a2, a3] = spec.vignetting;
    let mut rgb = RgbImage::new(nx as u32, ny as u32);
    let mut mask = vec![false; nx * ny];
    for i in 1..=ny {
        for j in 1..=nx {
            let idx = (i - 1) * nx + (j - 1);
            let p = (j as f64, i as f64);
            let rho = (p.0 - cx).hypot(p.1 - cy) / fov;
            if rho > 1.0 {
                continue;
            }
            let mut rel = 1.0 + BLOTCH_AMPLITUDE * blotch.data()[idx];
            for (path, h) in folds.iter().zip(&fold_heights) {
                let d = path
                    .windows(2)
                    .map(|w| segment_distance(p, w[0], w[1]))
                    .fold(f64::INFINITY, f64::min);
                rel += h * (-d * d / (2.0 * spec.fold_width * spec.fold_width)).exp();
            }
            if let Some(b) = &spec.bulge {
                let r = (p.0 - b.center.0).hypot(p.1 - b.center.1) / b.radius;
                if r <= 1.0 {
                    rel += b.amplitude * (1.0 - r * r).powi(2);
                }
            }
            let mut texture = spec.mucosa_texture;
            if let Some(poly) = &spec.polyp {
                let r = (p.0 - poly.center.0).hypot(p.1 - poly.center.1) / poly.radius;
                if r <= 1.0 {
                    mask[idx] = true;
                    rel += poly.amplitude * (1.0 - r * r).powf(POLYP_PROFILE_EXPONENT);
                    texture = texture.hypot(poly.texture);
                }
            }
            let mut value = spec.base * rel * (1.0 + texture * speckle.data()[idx]);
            let mut specular = false;
            for b in &bubbles {
                let d = (p.0 - b.center.0).hypot(p.1 - b.center.1);
                if d <= b.radius {
                    let rim = (-(b.radius - d).powi(2) / 2.0).exp();
                    value *= 1.1 + 0.6 * rim;
                    let s = (p.0 - b.center.0 + 0.4 * b.radius).hypot(p.1 - b.center.1 + 0.4 * b.radius);
                    specular |= s <= 0.25 * b.radius + 0.75;
                }
            }
            let gain = 1.0 + a1 * rho * rho + a2 * rho.powi(4) + a3 * rho.powi(6);
            let v = value * gain + spec.noise * sensor.data()[idx];
            let px = if specular {
                [255, 255, 255]
            } else {
                CHANNEL_FACTORS.map(|c| (v * c).round().clamp(0.0, 255.0) as u8)
            };
            rgb.put_pixel((j - 1) as u32, (i - 1) as u32, Rgb(px));
        }
    }
    let polyp = spec.polyp.as_ref();
    Ok(Phantom {
        image: rgb,
        truth: GroundTruth {
            label: if polyp.is_some() { Label::Polyp } else { Label::Normal },
            polyp_center: polyp.map(|p| p.center),
            polyp_radius: polyp.map(|p| p.radius),
            mask,
        },
    })
}

/// Categories of polyp-free frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalKind {
    Flat,
    Folds,
    TexturedFolds,
    Bubbles,
}

impl NormalKind {
    /// Cyclic assignment used by the dataset generator.
    pub fn for_index(k: usize) -> Self {
        match k % 10 {
            0..=2 => NormalKind::Flat,
            3..=5 => NormalKind::Folds,
            6 | 7 => NormalKind::TexturedFolds,
            _ => NormalKind::Bubbles,
        }
    }
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Spec for a polyp-free frame of the given kind.
pub fn normal_spec(kind: NormalKind, nx: usize, seed: u64) -> PhantomSpec {
    let mut rng = seeded(seed, 1);
    let mut spec = PhantomSpec::flat(nx, seed);
    spec.base = rng.random_range(105.0..135.0);
    match kind {
        NormalKind::Flat => {
            spec.fold_count = rng.random_range(0..=1);
            spec.fold_amplitude = rng.random_range(0.1..0.2);
        }
        NormalKind::Folds | NormalKind::TexturedFolds => {
            spec.fold_count = rng.random_range(2..=4);
            spec.fold_amplitude = rng.random_range(FOLD_AMPLITUDE.0..FOLD_AMPLITUDE.1);
            spec.fold_width = rng.random_range(FOLD_WIDTH.0..FOLD_WIDTH.1);
            if kind == NormalKind::TexturedFolds {
                spec.mucosa_texture = rng.random_range(0.05..0.09);
                if rng.random_bool(BULGE_PROBABILITY) {
                    let radius = rng.random_range(BULGE_RADIUS.0..BULGE_RADIUS.1) * nx as f64;
                    let (cx, cy) = spec.center();
                    let room = (spec.fov_radius() - radius - 2.0) * 0.6;
                    let r = room * rng.random::<f64>().sqrt();
                    let a = rng.random_range(0.0..2.0 * PI);
                    spec.bulge = Some(Bulge {
                        center: (cx + r * a.cos(), cy + r * a.sin()),
                        radius,
                        amplitude: rng.random_range(BULGE_AMPLITUDE.0..BULGE_AMPLITUDE.1),
                    });
                }
            }
        }
        NormalKind::Bubbles => {
            spec.fold_count = rng.random_range(0..=2);
            spec.fold_amplitude = rng.random_range(0.15..0.3);
            spec.bubble_count = rng.random_range(50..120);
        }
    }
    spec
}

/// Appearance of one polyp, shared by every frame of its sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolypLook {
    /// Relative dome height at the reference radius.
    pub amplitude: f64,
    pub texture: f64,
}

impl PolypLook {
    pub fn draw(seed: u64) -> Self {
        let mut rng = seeded(seed, 4);
        PolypLook {
            amplitude: rng.random_range(0.45..0.65),
            texture: rng.random_range(0.07..0.1),
        }
    }

    pub fn amplitude_at(&self, nx: usize, radius: f64) -> f64 {
        let reference = POLYP_REFERENCE_RADIUS * nx as f64;
        (self.amplitude * (radius / reference).sqrt()).min(POLYP_MAX_AMPLITUDE)
    }
}

/// Share of textured fold frames that carry a bulge, its radius range as a
/// fraction of the frame width, and its relative height.
pub const BULGE_PROBABILITY: f64 = 0.5;
pub const BULGE_RADIUS: (f64, f64) = (0.05, 0.09);
pub const BULGE_AMPLITUDE: (f64, f64) = (0.15, 0.35);

/// Fold height and width ranges of fold-heavy frames.
pub const FOLD_AMPLITUDE: (f64, f64) = (0.15, 0.3);
pub const FOLD_WIDTH: (f64, f64) = (3.0, 5.0);

/// Spec for a frame showing a polyp of the given radius.
pub fn polyp_spec(nx: usize, radius: f64, seed: u64) -> PhantomSpec {
    polyp_view(nx, radius, PolypLook::draw(seed), seed)
}

/// Spec for one view of a polyp with a fixed look.
pub fn polyp_view(nx: usize, radius: f64, look: PolypLook, seed: u64) -> PhantomSpec {
    let mut rng = seeded(seed, 2);
    let mut spec = PhantomSpec::flat(nx, seed);
    spec.base = rng.random_range(105.0..135.0);
    spec.fold_count = rng.random_range(0..=2);
    spec.fold_amplitude = rng.random_range(FOLD_AMPLITUDE.0..FOLD_AMPLITUDE.1);
    spec.fold_width = rng.random_range(FOLD_WIDTH.0..FOLD_WIDTH.1);
    let room = (spec.fov_radius() - radius - 2.0).max(0.0) * 0.6;
    let r = room * rng.random::<f64>().sqrt();
    let a = rng.random_range(0.0..2.0 * PI);
    let (cx, cy) = spec.center();
    spec.polyp = Some(PolypSpec {
        center: (cx + r * a.cos(), cy + r * a.sin()),
        radius,
        amplitude: look.amplitude_at(nx, radius),
        texture: look.texture,
    });
    spec
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub sequences: usize,
    pub frames_per_sequence: usize,
    pub normals: usize,
}

/// Radii of one sequence, from far to near, spanning a factor above 2.
pub fn sequence_radii(nx: usize, frames: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed, 3);
    let far = nx as f64 * rng.random_range(0.07..0.076);
    let near = far * rng.random_range(2.05..2.2);
    (0..frames)
        .map(|k| {
            if frames == 1 {
                far
            } else {
                far + (near - far) * k as f64 / (frames - 1) as f64
            }
        })
        .collect()
}

struct Job {
    record: FrameRecord,
    spec: PhantomSpec,
}

fn frame_seed(seed: u64, k: u64) -> u64 {
    let mut rng = seeded(seed, 0);
    rng.set_word_pos(2 * k as u128);
    rng.random()
}

/// Writes `images/*.png` and `manifest.csv` under `out_dir`. Patients
/// alternate between "1" and "2" over sequences and over normal frames.
pub fn generate_dataset(counts: DatasetCounts, nx: usize, seed: u64, out_dir: &Path, exec: Execution) -> Result<Vec<FrameRecord>> {
    let images = out_dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut jobs = Vec::new();
    let mut k = 0u64;
    for s in 0..counts.sequences {
        let sequence = format!("seq{:02}", s + 1);
        let radii = sequence_radii(nx, counts.frames_per_sequence, frame_seed(seed, 1_000_000 + s as u64));
        let look = PolypLook::draw(frame_seed(seed, 2_000_000 + s as u64));
        for (f, &radius) in radii.iter().enumerate() {
            let frame_id = format!("{sequence}_f{:02}", f + 1);
            let spec = polyp_view(nx, radius, look, frame_seed(seed, k));
            k += 1;
            jobs.push(Job {
                record: FrameRecord {
                    path: images.join(format!("{frame_id}.png")),
                    frame_id,
                    label: Label::Polyp,
                    patient: (1 + s % 2).to_string(),
                    sequence: Some(sequence.clone()),
                },
                spec,
            });
        }
    }
    for n in 0..counts.normals {
        let frame_id = format!("normal_{:04}", n + 1);
        jobs.push(Job {
            record: FrameRecord {
                path: images.join(format!("{frame_id}.png")),
                frame_id,
                label: Label::Normal,
                patient: (1 + n % 2).to_string(),
                sequence: None,
            },
            spec: normal_spec(NormalKind::for_index(n), nx, frame_seed(seed, k)),
        });
        k += 1;
    }
    let written = exec.map(&jobs, |job| {
        let phantom = generate_frame(&job.spec)?;
        write_rgb(&phantom.image, &job.record.path)
    });
    written.into_iter().collect::<Result<Vec<()>>>()?;
    let records: Vec<FrameRecord> = jobs.into_iter().map(|j| j.record).collect();
    write_manifest(manifest_path(out_dir), &records, out_dir)?;
    Ok(records)
}

pub fn manifest_path(out_dir: &Path) -> PathBuf {
    out_dir.join("manifest.csv")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let spec = normal_spec(NormalKind::Bubbles, 128, 9);
        let a = generate_frame(&spec).unwrap();
        let b = generate_frame(&spec).unwrap();
        assert_eq!(a.image.as_raw(), b.image.as_raw());
        let c = generate_frame(&PhantomSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a.image.as_raw(), c.image.as_raw());
    }

    #[test]
    fn polyp_mask_is_the_disc() {
        let mut spec = PhantomSpec::flat(256, 3);
        spec.polyp = Some(PolypSpec {
            center: (128.0, 128.0),
            radius: 40.0,
            amplitude: 0.5,
            texture: 0.08,
        });
        let p = generate_frame(&spec).unwrap();
        assert_eq!(p.truth.label, Label::Polyp);
        for i in 1..=256usize {
            for j in 1..=256usize {
                let inside = (i as f64 - 128.0).hypot(j as f64 - 128.0) <= 40.0;
                assert_eq!(p.truth.mask[(i - 1) * 256 + j - 1], inside);
            }
        }
        let normal = generate_frame(&PhantomSpec::flat(64, 1)).unwrap();
        assert!(normal.truth.mask.iter().all(|&m| !m));
        assert_eq!(normal.truth.label, Label::Normal);
    }

    #[test]
    fn polyp_outside_view_is_rejected() {
        let mut spec = PhantomSpec::flat(256, 3);
        spec.polyp = Some(PolypSpec {
            center: (20.0, 20.0),
            radius: 30.0,
            amplitude: 0.5,
            texture: 0.08,
        });
        assert!(matches!(generate_frame(&spec), Err(Error::Spec(_))));
    }

    #[test]
    fn border_is_black() {
        let p = generate_frame(&PhantomSpec::flat(64, 2)).unwrap();
        assert_eq!(p.image.get_pixel(0, 0).0, [0, 0, 0]);
        assert_ne!(p.image.get_pixel(32, 32).0, [0, 0, 0]);
    }

    #[test]
    fn sequence_radii_span_factor_two() {
        for seed in 0..50 {
            let r = sequence_radii(256, 10, seed);
            assert!(r[9] / r[0] >= 2.0);
            assert!(r[0] >= 256.0 / 15.0 && r[9] <= 256.0 / 4.5);
        }
    }
}
