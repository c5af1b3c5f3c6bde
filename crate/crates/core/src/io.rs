//! PNG and binary PGM/PPM decoding into [`Frame`]s.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::imaging::{to_grayscale, Frame};

/// Decode an image file into a grayscale frame; 8-bit values map to 0..=255
/// without rescaling.
pub fn read_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_frame(&bytes)
}

pub fn decode_frame(bytes: &[u8]) -> Result<Frame> {
    let img = image::load_from_memory(bytes)
        .map_err(|e| Error::Input(format!("cannot decode image: {e}")))?;
    dynamic_to_frame(&img)
}

pub fn dynamic_to_frame(img: &DynamicImage) -> Result<Frame> {
    match img {
        DynamicImage::ImageLuma8(g) => gray_to_frame(g),
        DynamicImage::ImageLumaA8(_) => gray_to_frame(&img.to_luma8()),
        other => rgb_to_frame(&other.to_rgb8()),
    }
}

pub fn gray_to_frame(img: &GrayImage) -> Result<Frame> {
    let (w, h) = img.dimensions();
    Frame::from_vec(
        w as usize,
        h as usize,
        img.as_raw().iter().map(|&v| f64::from(v)).collect(),
    )
}

pub fn rgb_to_frame(img: &RgbImage) -> Result<Frame> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let channel = |c: usize| {
        Frame::from_vec(
            w,
            h,
            img.as_raw().chunks_exact(3).map(|p| f64::from(p[c])).collect(),
        )
    };
    to_grayscale(&channel(0)?, &channel(1)?, &channel(2)?)
}

/// Decode as 8-bit RGB (for overlays).
pub fn read_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes)
        .map_err(|e| Error::Input(format!("cannot decode {}: {e}", path.display())))?;
    Ok(img.to_rgb8())
}

/// Round and clamp to 8 bits.
pub fn frame_to_gray(f: &Frame) -> GrayImage {
    let raw = f
        .data()
        .iter()
        .map(|&v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    GrayImage::from_raw(f.nx() as u32, f.ny() as u32, raw).expect("buffer matches dimensions")
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => Ok(ImageFormat::Png),
        Some("pgm") | Some("ppm") | Some("pnm") => Ok(ImageFormat::Pnm),
        _ => Err(Error::Input(format!(
            "unsupported output extension: {}",
            path.display()
        ))),
    }
}

pub fn write_gray(f: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    frame_to_gray(f).save_with_format(path, format_for(path)?)?;
    Ok(())
}

pub fn write_rgb(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    img.save_with_format(path, format_for(path)?)?;
    Ok(())
}
