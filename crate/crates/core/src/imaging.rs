//! Frame representation and the pixelwise operators shared by every stage.
//!
//! Pixel `(i, j)` in the 1-based row/column convention is stored at
//! `data[(i - 1) * nx + (j - 1)]`. Geometric coordinates follow the same
//! convention: `x = j` (column) and `y = i` (row).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

/// Smallest frame side accepted anywhere in the pipeline.
pub const MIN_SIDE: usize = 8;

/// Real-valued intensity matrix on the 0..=255 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    nx: usize,
    ny: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn from_vec(nx: usize, ny: usize, data: Vec<f64>) -> Result<Self> {
        if nx < MIN_SIDE || ny < MIN_SIDE {
            return Err(Error::Dimension(format!(
                "frame {nx}x{ny} is smaller than {MIN_SIDE}x{MIN_SIDE}"
            )));
        }
        if data.len() != nx * ny {
            return Err(Error::Dimension(format!(
                "expected {} pixels for {nx}x{ny}, got {}",
                nx * ny,
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite pixel at row {}, column {}",
                k / nx + 1,
                k % nx + 1
            )));
        }
        Ok(Frame { nx, ny, data })
    }

    pub fn filled(nx: usize, ny: usize, value: f64) -> Result<Self> {
        Frame::from_vec(nx, ny, vec![value; nx * ny])
    }

    /// Build from a function of 1-based `(i, j)`.
    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(nx * ny);
        for i in 1..=ny {
            for j in 1..=nx {
                data.push(f(i, j));
            }
        }
        Frame::from_vec(nx, ny, data)
    }

    /// Internal constructor for data derived from an already valid frame.
    pub(crate) fn derived(&self, data: Vec<f64>) -> Frame {
        debug_assert_eq!(data.len(), self.data.len());
        Frame {
            nx: self.nx,
            ny: self.ny,
            data,
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Pixel at 1-based `(i, j)`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[(i - 1) * self.nx + (j - 1)]
    }

    pub fn same_dims(&self, other: &Frame) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Frame {
        self.derived(self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Frame, f: impl Fn(f64, f64) -> f64) -> Result<Frame> {
        check_dims(self, other)?;
        Ok(self.derived(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Row-major index of the largest pixel (first one on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = k;
            }
        }
        (best / self.nx + 1, best % self.nx + 1)
    }

    pub fn scale(&self, alpha: f64) -> Frame {
        self.map(|v| alpha * v)
    }
}

pub(crate) fn check_dims(a: &Frame, b: &Frame) -> Result<()> {
    if a.same_dims(b) {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{}x{} vs {}x{}",
            a.nx, a.ny, b.nx, b.ny
        )))
    }
}

/// Circular field of view centred at `(nx/2, ny/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularMask {
    nx: usize,
    ny: usize,
    radius: f64,
}

impl CircularMask {
    pub fn new(nx: usize, ny: usize, radius: f64) -> Result<Self> {
        let limit = nx.min(ny) as f64 / 2.0;
        if !(radius > 0.0 && radius <= limit) {
            return Err(Error::param(format!(
                "mask radius {radius} outside (0, {limit}]"
            )));
        }
        Ok(CircularMask { nx, ny, radius })
    }

    pub fn for_frame(f: &Frame, radius: f64) -> Result<Self> {
        CircularMask::new(f.nx(), f.ny(), radius)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Centre `(c_x, c_y)` in 1-based pixel coordinates.
    pub fn center(&self) -> (f64, f64) {
        (self.nx as f64 / 2.0, self.ny as f64 / 2.0)
    }

    pub fn fits(&self, f: &Frame) -> bool {
        self.nx == f.nx() && self.ny == f.ny()
    }

    /// Membership of 1-based pixel `(i, j)`.
    pub fn contains(&self, i: usize, j: usize) -> bool {
        let dy = i as f64 - self.ny as f64 / 2.0;
        let dx = j as f64 - self.nx as f64 / 2.0;
        dy * dy + dx * dx <= self.radius * self.radius
    }

    /// Membership flags in row-major order.
    pub fn flags(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for i in 1..=self.ny {
            for j in 1..=self.nx {
                out.push(self.contains(i, j));
            }
        }
        out
    }
}

/// Normalised, sampled 1-D Gaussian on `2⌈σ⌉ + 1` taps.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel1D {
    sigma: f64,
    taps: Vec<f64>,
}

impl GaussianKernel1D {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma >= 1.0) || !sigma.is_finite() {
            return Err(Error::param(format!("gaussian sigma {sigma} must be >= 1")));
        }
        let radius = sigma.ceil() as i64;
        let raw: Vec<f64> = (-radius..=radius)
            .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let sum: f64 = raw.iter().sum();
        Ok(GaussianKernel1D {
            sigma,
            taps: raw.into_iter().map(|w| w / sum).collect(),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn radius(&self) -> usize {
        self.taps.len() / 2
    }
}

/// Symmetric extension that does not repeat the edge sample:
/// `-1 -> 1`, `n -> n - 2` (0-based).
pub fn mirror_index(k: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = k.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Rec.601 luma of three equally sized channels.
pub fn to_grayscale(red: &Frame, green: &Frame, blue: &Frame) -> Result<Frame> {
    check_dims(red, green)?;
    check_dims(red, blue)?;
    let data = red
        .data
        .iter()
        .zip(&green.data)
        .zip(&blue.data)
        .map(|((&r, &g), &b)| 0.299 * r + 0.587 * g + 0.114 * b)
        .collect();
    Ok(red.derived(data))
}

/// `L_σ f`: separable Gaussian smoothing, rows first, mirror boundaries.
pub fn gaussian_convolve(f: &Frame, sigma: f64) -> Result<Frame> {
    gaussian_convolve_with(f, sigma, Execution::default())
}

pub fn gaussian_convolve_with(f: &Frame, sigma: f64, exec: Execution) -> Result<Frame> {
    let kernel = GaussianKernel1D::new(sigma)?;
    Ok(convolve_separable(f, &kernel, exec))
}

pub(crate) fn convolve_separable(f: &Frame, kernel: &GaussianKernel1D, exec: Execution) -> Frame {
    let (nx, ny) = (f.nx, f.ny);
    let taps = kernel.taps();
    let rad = kernel.radius() as isize;

    // Row pass.
    let mut rows = vec![0.0; nx * ny];
    exec.for_each_row(&mut rows, nx, |r, out| {
        let src = &f.data[r * nx..(r + 1) * nx];
        for (c, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &w) in taps.iter().enumerate() {
                acc += w * src[mirror_index(c as isize + k as isize - rad, nx)];
            }
            *o = acc;
        }
    });

    // Column pass, one output row at a time.
    let mut out = vec![0.0; nx * ny];
    exec.for_each_row(&mut out, nx, |r, dst| {
        for (k, &w) in taps.iter().enumerate() {
            let src_row = mirror_index(r as isize + k as isize - rad, ny);
            let src = &rows[src_row * nx..(src_row + 1) * nx];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    });
    f.derived(out)
}

/// `H(w) · w` pixelwise.
pub fn positive_part(w: &Frame) -> Frame {
    w.map(|v| if v >= 0.0 { v } else { 0.0 })
}

/// Replace every pixel outside `m` by `fill`; pixels inside are untouched.
///
/// Panics if the mask was built for different frame dimensions.
pub fn apply_mask(f: &Frame, m: &CircularMask, fill: f64) -> Frame {
    assert!(m.fits(f), "mask does not fit the frame");
    let mut data = f.data.clone();
    for i in 1..=f.ny {
        for j in 1..=f.nx {
            if !m.contains(i, j) {
                data[(i - 1) * f.nx + (j - 1)] = fill;
            }
        }
    }
    f.derived(data)
}

/// Frobenius norm of `a - b` restricted to the mask.
pub fn frobenius_distance(a: &Frame, b: &Frame, m: &CircularMask) -> Result<f64> {
    check_dims(a, b)?;
    if !m.fits(a) {
        return Err(Error::Dimension("mask does not fit the frames".into()));
    }
    let mut acc = 0.0;
    for (k, inside) in m.flags().into_iter().enumerate() {
        if inside {
            let d = a.data[k] - b.data[k];
            acc += d * d;
        }
    }
    Ok(acc.sqrt())
}
