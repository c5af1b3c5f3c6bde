//! Decision overlays drawn straight onto the RGB frame.

use image::{Rgb, RgbImage};
use polypscan::geometry::ellipse_of_inertia;
use polypscan::FrameDecision;

pub const ELLIPSE_COLOR: Rgb<u8> = Rgb([255, 255, 0]);
pub const MARKER_COLOR: Rgb<u8> = Rgb([0, 255, 0]);
pub const CIRCLE_COLOR: Rgb<u8> = Rgb([255, 255, 0]);

const ELLIPSE_SAMPLES: usize = 180;
const MARKER_HALF: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Style {
    pub ellipses: bool,
    pub markers: bool,
    pub circle: bool,
}

impl Default for Style {
    fn default() -> Self {
        Style {
            ellipses: true,
            markers: true,
            circle: true,
        }
    }
}

/// Shapes in 1-based `(x, y)` image coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Overlay {
    pub ellipses: Vec<Vec<(f64, f64)>>,
    pub markers: Vec<(f64, f64)>,
    /// `(c̃_x, c̃_y, radius)`.
    pub circles: Vec<(f64, f64, f64)>,
}

/// Ellipses and centres of mass of the kept features plus the `R_max`
/// circle around the winning feature's weighted centroid.
pub fn overlay(decision: &FrameDecision, style: Style) -> Overlay {
    let mut out = Overlay::default();
    for rec in decision.features.iter().filter(|f| f.kept) {
        let Some(feature) = &rec.feature else { continue };
        if style.ellipses {
            if let Ok(pts) = ellipse_of_inertia(feature, ELLIPSE_SAMPLES) {
                out.ellipses.push(pts);
            }
        }
        if style.markers {
            out.markers.push(feature.centroid);
        }
    }
    if style.circle {
        if let Some(ball) = decision.winning_feature().and_then(|w| w.ball) {
            out.circles.push((ball.center.cx, ball.center.cy, decision.r_max as f64));
        }
    }
    out
}

fn plot(img: &mut RgbImage, x: f64, y: f64, color: Rgb<u8>) {
    let (px, py) = ((x - 1.0).round(), (y - 1.0).round());
    if px >= 0.0 && py >= 0.0 && (px as u32) < img.width() && (py as u32) < img.height() {
        img.put_pixel(px as u32, py as u32, color);
    }
}

fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
    let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        plot(img, a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), color);
    }
}

fn closed(img: &mut RgbImage, pts: &[(f64, f64)], color: Rgb<u8>) {
    for (k, &p) in pts.iter().enumerate() {
        line(img, p, pts[(k + 1) % pts.len()], color);
    }
}

pub fn circle_points(cx: f64, cy: f64, r: f64) -> Vec<(f64, f64)> {
    let n = ((2.0 * std::f64::consts::PI * r).ceil() as usize).max(16);
    (0..n)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            (cx + r * t.cos(), cy + r * t.sin())
        })
        .collect()
}

pub fn draw(img: &RgbImage, shapes: &Overlay) -> RgbImage {
    let mut out = img.clone();
    for e in &shapes.ellipses {
        closed(&mut out, e, ELLIPSE_COLOR);
    }
    for &(cx, cy, r) in &shapes.circles {
        closed(&mut out, &circle_points(cx, cy, r), CIRCLE_COLOR);
    }
    for &(x, y) in &shapes.markers {
        line(&mut out, (x - MARKER_HALF, y - MARKER_HALF), (x + MARKER_HALF, y + MARKER_HALF), MARKER_COLOR);
        line(&mut out, (x - MARKER_HALF, y + MARKER_HALF), (x + MARKER_HALF, y - MARKER_HALF), MARKER_COLOR);
    }
    out
}

pub fn render_overlay(img: &RgbImage, decision: &FrameDecision, style: Style) -> RgbImage {
    draw(img, &overlay(decision, style))
}
