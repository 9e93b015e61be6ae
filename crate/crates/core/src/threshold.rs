//! Otsu reverse-thresholding pipeline.
//!
//! Stages: (i) input, (ii) reverse thresholding at the Otsu level so that
//! dark parenchyma becomes foreground, (iii) 3×3 median filtering of the
//! binary mask, (iv) background removal (border-touching objects cleared,
//! two largest interior regions kept), (v) hole filling and border
//! correction, (vi) masked parenchyma.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{
    clear_border_objects, connected_components, fill_holes, histogram, median_filter,
    select_lung_regions_with, BinaryMask, Connectivity, GrayImage, LungSelection,
};
use crate::morph::BorderCorrection;
use crate::pipeline::{finish, Candidate, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdParams {
    /// Median window applied to the thresholded mask.
    pub median_window: usize,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        Self { median_window: 3 }
    }
}

/// Output of [`threshold_segment`].
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdResult {
    pub threshold: u32,
    pub mask: BinaryMask,
    pub parenchyma: GrayImage,
    pub stages: Vec<Stage>,
}

/// Between-class variance, scaled by `N²`, as the exact fraction
/// `(S0·N − S·n0)² / (n0·n1)`.
#[derive(Clone, Copy)]
struct Spread {
    num: u128,
    den: u128,
}

impl Spread {
    fn greater_than(&self, other: &Spread) -> bool {
        match (
            self.num.checked_mul(other.den),
            other.num.checked_mul(self.den),
        ) {
            (Some(a), Some(b)) => a > b,
            _ => self.num as f64 / self.den as f64 > other.num as f64 / other.den as f64,
        }
    }
}

/// Level `T` maximising the between-class variance of `{v ≤ T}` against
/// `{v > T}`; the smallest maximiser wins ties.
///
/// The comparison is carried out in exact integer arithmetic, so ties are
/// detected exactly rather than up to rounding.
pub fn otsu_threshold(hist: &[u64]) -> Result<u32> {
    let occupied = hist.iter().filter(|&&c| c > 0).count();
    if occupied == 0 {
        return Err(Error::EmptyInput);
    }
    if occupied == 1 {
        return Err(Error::DegenerateHistogram);
    }
    let n: u128 = hist.iter().map(|&c| c as u128).sum();
    let s: u128 = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| v as u128 * c as u128)
        .sum();

    let mut best: Option<(u32, Spread)> = None;
    let (mut n0, mut s0) = (0u128, 0u128);
    for (t, &c) in hist.iter().enumerate().take(hist.len().saturating_sub(1)) {
        n0 += c as u128;
        s0 += t as u128 * c as u128;
        let n1 = n - n0;
        let spread = if n0 == 0 || n1 == 0 {
            Spread { num: 0, den: 1 }
        } else {
            let diff = (s0 * n).abs_diff(s * n0);
            match diff.checked_mul(diff) {
                Some(num) => Spread { num, den: n0 * n1 },
                None => {
                    // Scale down both parts; only reached for gigapixel inputs.
                    let d = diff as f64;
                    Spread {
                        num: (d * d / (n0 * n1) as f64) as u128,
                        den: 1,
                    }
                }
            }
        };
        match &best {
            Some((_, b)) if !spread.greater_than(b) => {}
            _ => best = Some((t as u32, spread)),
        }
    }
    Ok(best.map(|(t, _)| t).unwrap_or(0))
}

/// Foreground wherever the intensity is at most `t`.
pub fn reverse_threshold(img: &GrayImage, t: f64) -> Result<BinaryMask> {
    if !(0.0..=img.max_level() as f64).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "threshold {t} outside [0, {}]",
            img.max_level()
        )));
    }
    BinaryMask::new(
        img.width(),
        img.height(),
        img.data().iter().map(|&v| v <= t).collect(),
    )
}

/// Stages (i)–(iv) plus hole filling; returns the Otsu level and the
/// uncorrected lung mask.
pub fn threshold_candidate(
    img: &GrayImage,
    params: &ThresholdParams,
    selection: &LungSelection,
) -> Result<(u32, Candidate)> {
    if img.is_empty() {
        return Err(Error::EmptyInput);
    }
    let lt = img.max_level();
    let t = otsu_threshold(&histogram(img)?)?;
    let binary = reverse_threshold(img, t as f64)?;
    let smoothed = median_filter(&binary.to_gray(lt), params.median_window)?.to_mask();
    let interior = clear_border_objects(&smoothed);
    let lungs = select_lung_regions_with(
        &connected_components(&interior, Connectivity::Eight),
        selection,
    )?;
    let filled = fill_holes(&lungs);
    let stages = vec![
        Stage::gray("1_low_dose_ct_image", img.clone()),
        Stage::mask("2_reverse_thresholding", binary),
        Stage::mask("3_median_filtering", smoothed),
        Stage::mask("4_background_removal", lungs),
    ];
    Ok((
        t,
        Candidate {
            mask: filled,
            stages,
        },
    ))
}

pub fn threshold_segment(
    img: &GrayImage,
    correction: &BorderCorrection,
) -> Result<ThresholdResult> {
    threshold_segment_with(img, correction, &ThresholdParams::default())
}

pub fn threshold_segment_with(
    img: &GrayImage,
    correction: &BorderCorrection,
    params: &ThresholdParams,
) -> Result<ThresholdResult> {
    let (threshold, cand) = threshold_candidate(img, params, &LungSelection::default())?;
    let done = finish(img, &cand, correction)?;
    Ok(ThresholdResult {
        threshold,
        mask: done.mask,
        parenchyma: done.parenchyma,
        stages: done.stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct per-threshold evaluation in floating point, no running sums.
    fn brute_otsu(hist: &[u64]) -> u32 {
        let n: f64 = hist.iter().sum::<u64>() as f64;
        let mut best = (0u32, -1.0f64);
        for t in 0..hist.len() - 1 {
            let (mut w0, mut m0, mut w1, mut m1) = (0.0, 0.0, 0.0, 0.0);
            for (v, &c) in hist.iter().enumerate() {
                if v <= t {
                    w0 += c as f64;
                    m0 += (v as f64) * c as f64;
                } else {
                    w1 += c as f64;
                    m1 += (v as f64) * c as f64;
                }
            }
            let var = if w0 == 0.0 || w1 == 0.0 {
                0.0
            } else {
                (w0 / n) * (w1 / n) * (m0 / w0 - m1 / w1).powi(2)
            };
            if var > best.1 {
                best = (t as u32, var);
            }
        }
        best.0
    }

    #[test]
    fn two_spikes_pick_smallest_tie() {
        let mut h = vec![0u64; 256];
        h[10] = 50;
        h[200] = 50;
        assert_eq!(otsu_threshold(&h).unwrap(), 10);
    }

    #[test]
    fn single_bin_is_degenerate() {
        let mut h = vec![0u64; 256];
        h[42] = 9;
        assert!(matches!(
            otsu_threshold(&h),
            Err(Error::DegenerateHistogram)
        ));
    }

    #[test]
    fn random_histograms_match_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mut h = vec![0u64; 256];
            for _ in 0..100 {
                h[rng.random_range(0..256)] += 1;
            }
            assert_eq!(otsu_threshold(&h).unwrap(), brute_otsu(&h));
        }
    }

    #[test]
    fn reverse_threshold_examples() {
        let img = GrayImage::new(3, 1, vec![3.0, 100.0, 200.0]).unwrap();
        assert_eq!(
            reverse_threshold(&img, 100.0).unwrap().data(),
            &[true, true, false]
        );
        assert_eq!(reverse_threshold(&img, 255.0).unwrap().count(), 3);
        let bright = GrayImage::filled(4, 4, 17.0).unwrap();
        assert_eq!(reverse_threshold(&bright, 0.0).unwrap().count(), 0);
        assert!(reverse_threshold(&img, 256.0).is_err());
    }

    #[test]
    fn constant_image_is_rejected() {
        let img = GrayImage::filled(32, 32, 90.0).unwrap();
        assert!(matches!(
            threshold_segment(&img, &BorderCorrection::None),
            Err(Error::DegenerateHistogram)
        ));
    }

    #[test]
    fn stage_names_in_pipeline_order() {
        let img = GrayImage::from_fn(64, 64, |x, y| {
            let (dx, dy) = (x as f64 - 32.0, y as f64 - 32.0);
            if dx * dx / 400.0 + dy * dy / 225.0 <= 1.0 {
                40.0
            } else {
                200.0
            }
        })
        .unwrap();
        let r = threshold_segment(&img, &BorderCorrection::amf()).unwrap();
        let names: Vec<_> = r.stages.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "1_low_dose_ct_image",
                "2_reverse_thresholding",
                "3_median_filtering",
                "4_background_removal",
                "5_lung_mask_after_amf",
                "6_segmented_lung_parenchyma"
            ]
        );
        assert_eq!(r.threshold, 40);
        assert_eq!(
            r.parenchyma,
            crate::imgcore::apply_mask(&img, &r.mask).unwrap()
        );
    }

    proptest! {
        #[test]
        fn reverse_threshold_is_monotone(
            data in proptest::collection::vec(0u8..=255, 36),
            a in 0u8..=255,
            b in 0u8..=255,
        ) {
            let img = GrayImage::new(6, 6, data.iter().map(|&v| v as f64).collect()).unwrap();
            let (lo, hi) = (a.min(b) as f64, a.max(b) as f64);
            let m_lo = reverse_threshold(&img, lo).unwrap();
            let m_hi = reverse_threshold(&img, hi).unwrap();
            prop_assert!(m_hi.contains(&m_lo));
        }
    }
}
