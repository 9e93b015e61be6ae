//! Binary morphology, boundary tracing and the border-correction methods.
//!
//! Erosion and dilation run row-span by row-span over prefix sums of each
//! mask row, so the cost grows with the structuring element's height rather
//! than its area. Opening and closing are evaluated as if the mask were
//! embedded in an infinite background plane: closing pads the raster by the
//! element's extent before dilating, which keeps it extensive and idempotent
//! for masks that touch the image border.

mod amf;
mod correction;
mod trace;

pub use amf::{
    amf_border_correction, amf_border_correction_with, local_concavity_depth, AmfParams,
};
pub use correction::{
    fit_gmm_1d, gmm_correction, gmm_correction_with, rolling_ball_correction, BorderCorrection,
    GmmFit, GmmParams,
};
pub use trace::{boundary_trace, trace_component, Point};

use crate::imgcore::BinaryMask;

/// Disk-shaped structuring element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    radius: usize,
    offsets: Vec<(i64, i64)>,
    /// Per row: `(dy, dx_lo, dx_hi)` inclusive horizontal spans.
    spans: Vec<(i64, i64, i64)>,
}

impl StructuringElement {
    /// All integer offsets with `dx² + dy² ≤ radius²`.
    pub fn disk(radius: usize) -> Self {
        let r = radius as i64;
        let mut offsets = Vec::new();
        let mut spans = Vec::new();
        for dy in -r..=r {
            let half = ((r * r - dy * dy) as f64).sqrt().floor() as i64;
            // Guard against sqrt rounding below an exact square.
            let half = if (half + 1) * (half + 1) + dy * dy <= r * r {
                half + 1
            } else {
                half
            };
            spans.push((dy, -half, half));
            offsets.extend((-half..=half).map(|dx| (dx, dy)));
        }
        Self {
            radius,
            offsets,
            spans,
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn offsets(&self) -> &[(i64, i64)] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Prefix counts of foreground pixels per row: `row * (w + 1) + k` holds the
/// count over columns `0..k`.
fn row_prefix(mask: &BinaryMask) -> Vec<u32> {
    let (w, h) = (mask.width(), mask.height());
    let mut prefix = vec![0u32; (w + 1) * h];
    for y in 0..h {
        let row = &mask.data()[y * w..(y + 1) * w];
        let out = &mut prefix[y * (w + 1)..(y + 1) * (w + 1)];
        for x in 0..w {
            out[x + 1] = out[x] + row[x] as u32;
        }
    }
    prefix
}

/// Minkowski dilation; pixels outside the raster are background.
pub fn dilate(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let prefix = row_prefix(mask);
    let stride = (w + 1) as usize;
    BinaryMask::from_fn(w as usize, h as usize, |x, y| {
        let (x, y) = (x as i64, y as i64);
        se.spans.iter().any(|&(dy, lo, hi)| {
            let sy = y - dy;
            if sy < 0 || sy >= h {
                return false;
            }
            let a = (x - hi).max(0);
            let b = (x - lo).min(w - 1);
            if a > b {
                return false;
            }
            let row = &prefix[sy as usize * stride..];
            row[b as usize + 1] > row[a as usize]
        })
    })
}

/// Minkowski erosion; pixels outside the raster are background, so
/// foreground within the element's reach of the border erodes away.
pub fn erode(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let prefix = row_prefix(mask);
    let stride = (w + 1) as usize;
    BinaryMask::from_fn(w as usize, h as usize, |x, y| {
        let (x, y) = (x as i64, y as i64);
        se.spans.iter().all(|&(dy, lo, hi)| {
            let sy = y + dy;
            if sy < 0 || sy >= h || x + lo < 0 || x + hi >= w {
                return false;
            }
            let row = &prefix[sy as usize * stride..];
            (row[(x + hi) as usize + 1] - row[(x + lo) as usize]) as i64 == hi - lo + 1
        })
    })
}

/// Erosion followed by dilation.
pub fn open(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    dilate(&erode(mask, se), se)
}

/// Dilation followed by erosion, computed on a background-padded copy.
pub fn close(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let pad = se.radius();
    let padded = crop(
        mask,
        -(pad as i64),
        -(pad as i64),
        mask.width() + 2 * pad,
        mask.height() + 2 * pad,
    );
    let closed = erode(&dilate(&padded, se), se);
    crop(&closed, pad as i64, pad as i64, mask.width(), mask.height())
}

/// Copies a `w`×`h` window whose top-left corner sits at `(x0, y0)`;
/// positions outside the source read as background.
pub(crate) fn crop(mask: &BinaryMask, x0: i64, y0: i64, w: usize, h: usize) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| mask.get_signed(x0 + x as i64, y0 + y as i64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::invert;
    use proptest::prelude::*;

    fn brute_dilate(m: &BinaryMask, se: &StructuringElement) -> BinaryMask {
        BinaryMask::from_fn(m.width(), m.height(), |x, y| {
            se.offsets()
                .iter()
                .any(|&(dx, dy)| m.get_signed(x as i64 - dx, y as i64 - dy))
        })
    }

    fn brute_erode(m: &BinaryMask, se: &StructuringElement) -> BinaryMask {
        BinaryMask::from_fn(m.width(), m.height(), |x, y| {
            se.offsets()
                .iter()
                .all(|&(dx, dy)| m.get_signed(x as i64 + dx, y as i64 + dy))
        })
    }

    fn arb_mask(max: usize) -> impl Strategy<Value = BinaryMask> {
        (1..max, 1..max).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<bool>(), w * h)
                .prop_map(move |d| BinaryMask::new(w, h, d).unwrap())
        })
    }

    #[test]
    fn disk_offsets() {
        let d1 = StructuringElement::disk(1);
        let mut offs = d1.offsets().to_vec();
        offs.sort();
        assert_eq!(offs, vec![(-1, 0), (0, -1), (0, 0), (0, 1), (1, 0)]);
        let d5 = StructuringElement::disk(5);
        let expected = (-5i64..=5)
            .flat_map(|y| (-5i64..=5).map(move |x| (x, y)))
            .filter(|(x, y)| x * x + y * y <= 25)
            .count();
        assert_eq!(d5.len(), expected);
        for &(x, y) in d5.offsets() {
            assert!(d5.offsets().contains(&(-x, -y)));
        }
        assert!(d5.offsets().contains(&(0, 0)));
    }

    #[test]
    fn dilate_single_pixel_gives_plus() {
        let mut m = BinaryMask::filled(5, 5, false);
        m.set(2, 2, true);
        let d = dilate(&m, &StructuringElement::disk(1));
        assert_eq!(d.count(), 5);
        for (x, y) in [(2, 2), (1, 2), (3, 2), (2, 1), (2, 3)] {
            assert!(d.get(x, y));
        }
    }

    #[test]
    fn erode_full_mask_drops_border_ring() {
        let full = BinaryMask::filled(10, 10, true);
        let e = erode(&full, &StructuringElement::disk(1));
        assert_eq!(e.count(), 64);
        assert!(e.get(1, 1) && !e.get(0, 5));
    }

    #[test]
    fn open_removes_small_components() {
        let mut m = BinaryMask::filled(20, 20, false);
        for y in 3..5 {
            for x in 3..5 {
                m.set(x, y, true);
            }
        }
        for y in 8..18 {
            for x in 8..18 {
                m.set(x, y, true);
            }
        }
        let se = StructuringElement::disk(2);
        let o = open(&m, &se);
        assert!(!o.get(3, 3));
        assert!(o.get(12, 12));
    }

    #[test]
    fn open_full_mask_is_erode_then_dilate() {
        let full = BinaryMask::filled(10, 10, true);
        let se = StructuringElement::disk(1);
        let o = open(&full, &se);
        assert_eq!(o, dilate(&erode(&full, &se), &se));
        // Only the four corners are lost for the plus-shaped element.
        assert_eq!(o.count(), 96);
    }

    proptest! {
        #[test]
        fn fast_ops_match_brute_force(m in arb_mask(14), r in 1usize..4) {
            let se = StructuringElement::disk(r);
            prop_assert_eq!(dilate(&m, &se), brute_dilate(&m, &se));
            prop_assert_eq!(erode(&m, &se), brute_erode(&m, &se));
        }

        #[test]
        fn closing_is_extensive_and_idempotent(m in arb_mask(16), r in 1usize..4) {
            let se = StructuringElement::disk(r);
            let c = close(&m, &se);
            prop_assert!(c.contains(&m));
            prop_assert_eq!(close(&c, &se), c.clone());
            prop_assert!(erode(&dilate(&m, &se), &se).count() <= c.count());
        }

        #[test]
        fn opening_is_antiextensive_and_idempotent(m in arb_mask(16), r in 1usize..4) {
            let se = StructuringElement::disk(r);
            let o = open(&m, &se);
            prop_assert!(m.contains(&o));
            prop_assert_eq!(open(&o, &se), o);
        }

        #[test]
        fn erode_dilate_duality_away_from_border(m in arb_mask(16), r in 1usize..3) {
            let se = StructuringElement::disk(r);
            let e = erode(&m, &se);
            let d = invert(&dilate(&invert(&m), &se));
            for y in r..m.height().saturating_sub(r) {
                for x in r..m.width().saturating_sub(r) {
                    prop_assert_eq!(e.get(x, y), d.get(x, y));
                }
            }
        }
    }
}
