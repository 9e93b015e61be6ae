//! Reading and writing slices and masks as PGM or PNG.
//!
//! 8-bit inputs load unchanged. 16-bit inputs are rescaled linearly onto
//! 0..=255 so every pipeline sees the same gray range.

use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageReader, Luma};

use crate::error::{Error, Result};
use crate::imgcore::{BinaryMask, GrayImage};

/// Intensity used to draw mask boundaries on overlays.
pub const OVERLAY_MARKER: f64 = 255.0;

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn decode(path: &Path) -> Result<DynamicImage> {
    ImageReader::open(path)
        .map_err(|e| io_err(path, e))?
        .with_guessed_format()
        .map_err(|e| io_err(path, e))?
        .decode()
        .map_err(|e| image_err(path, e))
}

/// Loads an 8-bit PGM/PNG or a 16-bit PGM as a gray image in `[0, 255]`.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let (w, h, data) = match decode(path)? {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            (w, h, buf.into_raw().into_iter().map(f64::from).collect())
        }
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            let scale = 255.0 / 65535.0;
            let data = buf
                .into_raw()
                .into_iter()
                .map(|v| f64::from(v) * scale)
                .collect();
            (w, h, data)
        }
        other => {
            return Err(Error::InvalidData(format!(
                "{}: expected a grayscale image, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    GrayImage::new(w as usize, h as usize, data)
}

/// Loads a mask: any nonzero pixel is foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let img = load_gray(path)?;
    Ok(BinaryMask::from_fn(img.width(), img.height(), |x, y| {
        img.get(x, y) > 0.0
    }))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
        }
        _ => Ok(()),
    }
}

fn save_u8(width: usize, height: usize, data: Vec<u8>, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(width as u32, height as u32, data)
            .ok_or_else(|| Error::InvalidData("raster size mismatch".into()))?;
    buf.save(path).map_err(|e| image_err(path, e))
}

/// Writes an image as 8-bit, rescaling its gray range onto 0..=255. The
/// format follows the file extension (`.png` or `.pgm`).
pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let scale = 255.0 / img.max_level() as f64;
    let data = img
        .data()
        .iter()
        .map(|&v| (v * scale).round().clamp(0.0, 255.0) as u8)
        .collect();
    save_u8(img.width(), img.height(), data, path.as_ref())
}

/// Writes a mask as 0/255.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let data = mask
        .data()
        .iter()
        .map(|&m| if m { 255 } else { 0 })
        .collect();
    save_u8(mask.width(), mask.height(), data, path.as_ref())
}

/// Copy of `img` with the mask's inner boundary drawn at the top gray level.
pub fn overlay(img: &GrayImage, mask: &BinaryMask) -> Result<GrayImage> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(Error::DimensionMismatch(
            img.width(),
            img.height(),
            mask.width(),
            mask.height(),
        ));
    }
    let marker = OVERLAY_MARKER * img.max_level() as f64 / 255.0;
    let (w, h) = (img.width(), img.height());
    let mut data = img.data().to_vec();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let (xi, yi) = (x as i64, y as i64);
            let edge = [(-1, 0), (1, 0), (0, -1), (0, 1)]
                .iter()
                .any(|&(dx, dy)| !mask.get_signed(xi + dx, yi + dy));
            if edge {
                data[y * w + x] = marker;
            }
        }
    }
    GrayImage::with_max_level(w, h, data, img.max_level())
}
