use super::{BinaryMask, GrayImage};
use crate::error::{Error, Result};

/// Gray-level histogram with `max_level + 1` bins.
///
/// Intensities are binned by rounding to the nearest integer level.
pub fn histogram(img: &GrayImage) -> Result<Vec<u64>> {
    if img.is_empty() {
        return Err(Error::EmptyInput);
    }
    let lt = img.max_level() as usize;
    let mut counts = vec![0u64; lt + 1];
    for &v in img.data() {
        counts[(v.round() as usize).min(lt)] += 1;
    }
    Ok(counts)
}

/// Median of each `window`×`window` neighbourhood, replicating edge pixels.
pub fn median_filter(img: &GrayImage, window: usize) -> Result<GrayImage> {
    if img.is_empty() {
        return Err(Error::EmptyInput);
    }
    if window.is_multiple_of(2) {
        return Err(Error::EvenWindow);
    }
    let (w, h) = (img.width(), img.height());
    if window > w.min(h) {
        return Err(Error::WindowTooLarge {
            window,
            width: w,
            height: h,
        });
    }
    if window == 1 {
        return Ok(img.clone());
    }
    let r = (window / 2) as isize;
    let mid = window * window / 2;
    let src = img.data();
    let mut buf = Vec::with_capacity(window * window);
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h as isize {
        for x in 0..w as isize {
            buf.clear();
            for dy in -r..=r {
                let yy = (y + dy).clamp(0, h as isize - 1) as usize;
                let row = &src[yy * w..(yy + 1) * w];
                for dx in -r..=r {
                    buf.push(row[(x + dx).clamp(0, w as isize - 1) as usize]);
                }
            }
            let (_, m, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
            out.push(*m);
        }
    }
    GrayImage::with_max_level(w, h, out, img.max_level())
}

pub fn invert(mask: &BinaryMask) -> BinaryMask {
    BinaryMask {
        width: mask.width,
        height: mask.height,
        data: mask.data.iter().map(|&b| !b).collect(),
    }
}

/// Keeps intensities under the mask and zeroes everything else.
pub fn apply_mask(img: &GrayImage, mask: &BinaryMask) -> Result<GrayImage> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(Error::DimensionMismatch(
            img.width(),
            img.height(),
            mask.width(),
            mask.height(),
        ));
    }
    let data = img
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&v, &m)| if m { v } else { 0.0 })
        .collect();
    GrayImage::with_max_level(img.width(), img.height(), data, img.max_level())
}
