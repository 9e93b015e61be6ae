//! Adaptive morphological filtering (AMF) of lung borders.
//!
//! The structuring element is a disk whose radius follows the depth of the
//! local boundary indentation. Concave stretches of each traced boundary are
//! located by chord depth; every stretch is closed locally with a disk sized
//! to its deepest point, and the pocket enclosed between the boundary arc and
//! its chord is filled wherever the dilated mask reaches it. Straight and
//! convex stretches are left untouched, so lung borders keep their shape
//! while juxta-pleural indentations are re-included.

use serde::{Deserialize, Serialize};

use super::trace::{boundary_trace, Point};
use super::{close, crop, dilate, StructuringElement};
use crate::error::{Error, Result};
use crate::imgcore::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmfParams {
    /// Upper bound on the adaptive disk radius, pixels.
    pub max_radius: usize,
    /// Indentations no deeper than this are ignored, pixels.
    pub depth_threshold: f64,
    /// Arc half-length, in boundary steps, of the depth chord.
    pub window: usize,
}

impl Default for AmfParams {
    fn default() -> Self {
        Self {
            max_radius: 15,
            depth_threshold: 2.0,
            window: 10,
        }
    }
}

impl AmfParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_radius < 1 {
            return Err(Error::InvalidParameter(
                "AMF max_radius must be >= 1".into(),
            ));
        }
        if self.window < 2 {
            return Err(Error::InvalidParameter("AMF window must be >= 2".into()));
        }
        if !(self.depth_threshold >= 0.0) {
            return Err(Error::InvalidParameter(
                "AMF depth_threshold must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[inline]
fn cyclic(boundary: &[Point], i: isize) -> Point {
    let n = boundary.len() as isize;
    boundary[i.rem_euclid(n) as usize]
}

/// Depth of the indentation at `boundary[index]`.
///
/// Distance from the point to the chord joining the points `window` steps
/// before and after it, counted only when the point lies on the interior side
/// of the chord. `boundary` must be a closed clockwise trace as produced by
/// [`boundary_trace`].
pub fn local_concavity_depth(boundary: &[Point], index: usize, window: usize) -> Result<f64> {
    if window < 2 {
        return Err(Error::InvalidParameter("window must be >= 2".into()));
    }
    let n = boundary.len();
    if n < 2 * window + 1 {
        return Ok(0.0);
    }
    let i = index as isize;
    let a = cyclic(boundary, i - window as isize);
    let b = cyclic(boundary, i + window as isize);
    let p = boundary[index % n];
    let chord = ((b.0 - a.0) as f64, (b.1 - a.1) as f64);
    let len = chord.0.hypot(chord.1);
    if len == 0.0 {
        return Ok(0.0);
    }
    // Clockwise in screen coordinates puts the interior on the positive side.
    let cross = chord.0 * (p.1 - a.1) as f64 - chord.1 * (p.0 - a.0) as f64;
    Ok((cross / len).max(0.0))
}

/// AMF with default depth threshold and window.
pub fn amf_border_correction(mask: &BinaryMask, max_radius: usize) -> Result<BinaryMask> {
    amf_border_correction_with(
        mask,
        &AmfParams {
            max_radius,
            ..AmfParams::default()
        },
    )
}

pub fn amf_border_correction_with(mask: &BinaryMask, params: &AmfParams) -> Result<BinaryMask> {
    params.validate()?;
    let contours = boundary_trace(mask)?;
    let mut out = mask.clone();
    for contour in &contours {
        for run in concave_runs(contour, params)? {
            fill_run(mask, contour, &run, params, &mut out);
        }
    }
    Ok(out)
}

/// A maximal cyclic stretch of boundary indices deeper than the threshold.
struct ConcaveRun {
    start: isize,
    len: usize,
    depth: f64,
}

fn concave_runs(contour: &[Point], params: &AmfParams) -> Result<Vec<ConcaveRun>> {
    let n = contour.len();
    if n < 2 * params.window + 1 {
        return Ok(Vec::new());
    }
    let depths = (0..n)
        .map(|i| local_concavity_depth(contour, i, params.window))
        .collect::<Result<Vec<_>>>()?;
    let deep: Vec<bool> = depths.iter().map(|&d| d > params.depth_threshold).collect();
    if deep.iter().all(|&d| d) {
        let depth = depths.iter().cloned().fold(0.0, f64::max);
        return Ok(vec![ConcaveRun {
            start: 0,
            len: n,
            depth,
        }]);
    }
    // Start scanning just after a shallow point so no run wraps the seam.
    let origin = deep.iter().position(|&d| !d).unwrap();
    let mut runs = Vec::new();
    let mut k = 1;
    while k <= n {
        let i = (origin + k) % n;
        if deep[i] {
            let mut len = 0;
            let mut depth: f64 = 0.0;
            while k <= n && deep[(origin + k) % n] {
                depth = depth.max(depths[(origin + k) % n]);
                len += 1;
                k += 1;
            }
            runs.push(ConcaveRun {
                start: i as isize,
                len,
                depth,
            });
        } else {
            k += 1;
        }
    }
    Ok(runs)
}

fn fill_run(
    mask: &BinaryMask,
    contour: &[Point],
    run: &ConcaveRun,
    params: &AmfParams,
    out: &mut BinaryMask,
) {
    let w = params.window as isize;
    let radius = (run.depth.ceil() as usize).clamp(1, params.max_radius);
    let r = radius as i64;

    // Arc covered by the run's chords.
    let arc_len = (run.len as isize + 2 * w).min(contour.len() as isize);
    let arc: Vec<Point> = (0..arc_len)
        .map(|k| cyclic(contour, run.start - w + k))
        .collect();
    let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
    for &(x, y) in &arc {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    // Neighbourhood of the stretch, clipped to the raster.
    let bx0 = (x0 - r).max(0);
    let by0 = (y0 - r).max(0);
    let bx1 = (x1 + r).min(mask.width() as i64 - 1);
    let by1 = (y1 + r).min(mask.height() as i64 - 1);
    if bx0 > bx1 || by0 > by1 {
        return;
    }
    let bw = (bx1 - bx0 + 1) as usize;
    let bh = (by1 - by0 + 1) as usize;

    // Pocket between each concave point's arc and chord.
    let mut pocket = vec![false; bw * bh];
    for k in 0..run.len as isize {
        let i = run.start + k;
        let poly: Vec<Point> = (-w..=w).map(|j| cyclic(contour, i + j)).collect();
        rasterize_polygon(&poly, bx0, by0, bw, bh, &mut pocket);
    }
    // And the hull of the whole arc, which reaches the mouth of
    // indentations wider than the window.
    if arc_len < contour.len() as isize {
        rasterize_polygon(&convex_hull(&arc), bx0, by0, bw, bh, &mut pocket);
    }

    // The corners of an indentation are usually rounded off, so the chord
    // cuts inside the wall it stands in for. Widen the part of the pocket
    // outside the mask by one pixel.
    let seeds: Vec<bool> = (0..bw * bh)
        .map(|k| pocket[k] && !mask.get(bx0 as usize + k % bw, by0 as usize + k / bw))
        .collect();
    let rim = grow_cross(&seeds, bw, bh);
    let pocket: Vec<bool> = pocket.iter().zip(&rim).map(|(&a, &b)| a || b).collect();

    let se = StructuringElement::disk(radius);
    // Chord depth under-reads indentations wider than the window, so the
    // pocket is gated by the largest allowed disk rather than `se`.
    let reach = params.max_radius as i64;
    let margin = (2 * r).max(reach);
    let pw = bw + 2 * margin as usize;
    let ph = bh + 2 * margin as usize;
    let patch = crop(mask, bx0 - margin, by0 - margin, pw, ph);
    let closed = close(&patch, &se);
    let grown = dilate(&patch, &StructuringElement::disk(params.max_radius));

    for y in 0..bh {
        for x in 0..bw {
            let (px, py) = (x + margin as usize, y + margin as usize);
            let add = closed.get(px, py) || (pocket[y * bw + x] && grown.get(px, py));
            if add {
                out.set(bx0 as usize + x, by0 as usize + y, true);
            }
        }
    }
}

fn grow_cross(src: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut out = src.to_vec();
    for y in 0..h {
        for x in 0..w {
            if src[y * w + x] {
                continue;
            }
            out[y * w + x] = (x > 0 && src[y * w + x - 1])
                || (x + 1 < w && src[y * w + x + 1])
                || (y > 0 && src[(y - 1) * w + x])
                || (y + 1 < h && src[(y + 1) * w + x]);
        }
    }
    out
}

/// Convex hull, counter-clockwise in screen coordinates (monotone chain).
fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross =
        |o: Point, a: Point, b: Point| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let floor = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= floor + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Marks pixel centres inside or on the closed polygon (even-odd rule).
fn rasterize_polygon(poly: &[Point], ox: i64, oy: i64, w: usize, h: usize, out: &mut [bool]) {
    let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
    for &(x, y) in poly {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let x0 = x0.max(ox);
    let y0 = y0.max(oy);
    let x1 = x1.min(ox + w as i64 - 1);
    let y1 = y1.min(oy + h as i64 - 1);
    let n = poly.len();
    for y in y0..=y1 {
        for x in x0..=x1 {
            let mut inside = false;
            let mut on_edge = false;
            for k in 0..n {
                let a = poly[k];
                let b = poly[(k + 1) % n];
                if on_segment(a, b, (x, y)) {
                    on_edge = true;
                    break;
                }
                if (a.1 > y) != (b.1 > y) {
                    // x-coordinate of the edge at this row, compared exactly.
                    let lhs = (x - a.0) * (b.1 - a.1);
                    let rhs = (b.0 - a.0) * (y - a.1);
                    if (b.1 - a.1 > 0 && lhs < rhs) || (b.1 - a.1 < 0 && lhs > rhs) {
                        inside = !inside;
                    }
                }
            }
            if inside || on_edge {
                out[(y - oy) as usize * w + (x - ox) as usize] = true;
            }
        }
    }
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    cross == 0
        && p.0 >= a.0.min(b.0)
        && p.0 <= a.0.max(b.0)
        && p.1 >= a.1.min(b.1)
        && p.1 <= a.1.max(b.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morph::boundary_trace;
    use proptest::prelude::*;

    fn notched_block(notch_radius: f64) -> (BinaryMask, BinaryMask) {
        // 80x60 block with a half-disk bite out of its top edge.
        let (cx, cy) = (40.0, 10.0);
        let inside = |x: usize, y: usize| (10..70).contains(&x) && (10..50).contains(&y);
        let bite = |x: usize, y: usize| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            dx * dx + dy * dy <= notch_radius * notch_radius
        };
        let mask = BinaryMask::from_fn(80, 60, |x, y| inside(x, y) && !bite(x, y));
        let footprint = BinaryMask::from_fn(80, 60, |x, y| inside(x, y) && bite(x, y));
        (mask, footprint)
    }

    #[test]
    fn straight_boundary_has_zero_depth() {
        let line: Vec<Point> = (0..30).map(|x| (x, 5)).collect();
        // Closing it back along the row below keeps the trace well formed.
        let mut contour = line.clone();
        contour.extend(line.iter().rev().map(|&(x, _)| (x, 6)));
        assert_eq!(local_concavity_depth(&contour, 15, 5).unwrap(), 0.0);
    }

    #[test]
    fn convex_arc_has_zero_depth() {
        let m = BinaryMask::from_fn(60, 60, |x, y| {
            let (dx, dy) = (x as f64 - 30.0, y as f64 - 30.0);
            dx * dx + dy * dy <= 400.0
        });
        let b = &boundary_trace(&m).unwrap()[0];
        for i in 0..b.len() {
            assert_eq!(local_concavity_depth(b, i, 10).unwrap(), 0.0);
        }
    }

    #[test]
    fn rectangular_notch_depth() {
        // Six-pixel-deep, eight-wide slot cut into the top of a block.
        let m = BinaryMask::from_fn(60, 40, |x, y| {
            let block = (5..55).contains(&x) && (5..35).contains(&y);
            let slot = (26..34).contains(&x) && y < 11;
            block && !slot
        });
        let b = &boundary_trace(&m).unwrap()[0];
        let deepest = (0..b.len())
            .map(|i| local_concavity_depth(b, i, 10).unwrap())
            .fold(0.0, f64::max);
        assert!((deepest - 6.0).abs() <= 1.0, "depth {deepest}");
    }

    #[test]
    fn short_boundary_has_zero_depth() {
        let b: Vec<Point> = vec![(0, 0), (1, 0), (1, 1), (0, 1)];
        assert_eq!(local_concavity_depth(&b, 0, 2).unwrap(), 0.0);
        assert!(local_concavity_depth(&b, 0, 1).is_err());
    }

    #[test]
    fn fills_hemispheric_notch() {
        let (mask, footprint) = notched_block(8.0);
        let out = amf_border_correction(&mask, 15).unwrap();
        assert!(out.contains(&footprint));
        assert!(out.contains(&mask));
        // At most a one-pixel rim beyond the original block is added.
        let block = mask.union(&footprint).unwrap();
        assert!(dilate(&block, &StructuringElement::disk(1)).contains(&out));
        assert!(out.count() - block.count() <= 20);
    }

    #[test]
    fn smooth_convex_mask_is_unchanged() {
        let m = BinaryMask::from_fn(120, 100, |x, y| {
            let (dx, dy) = ((x as f64 - 60.0) / 45.0, (y as f64 - 50.0) / 35.0);
            dx * dx + dy * dy <= 1.0
        });
        assert_eq!(amf_border_correction(&m, 15).unwrap(), m);
    }

    #[test]
    fn second_pass_is_nearly_stable() {
        let (mask, _) = notched_block(6.0);
        let once = amf_border_correction(&mask, 15).unwrap();
        let twice = amf_border_correction(&once, 15).unwrap();
        assert!(once.hamming(&twice).unwrap() * 1000 < once.len());
    }

    #[test]
    fn narrow_slit_is_closed() {
        // A two-pixel-wide, twelve-deep slit, like a vessel touching the wall.
        let block = |x: usize, y: usize| (10..70).contains(&x) && (10..50).contains(&y);
        let slit = |x: usize, y: usize| (39..41).contains(&x) && y < 22;
        let m = BinaryMask::from_fn(80, 60, |x, y| block(x, y) && !slit(x, y));
        let out = amf_border_correction(&m, 15).unwrap();
        let want = BinaryMask::from_fn(80, 60, block);
        assert!(out.contains(&want));
        assert!(dilate(&want, &StructuringElement::disk(1)).contains(&out));
        assert!(out.count() - want.count() <= 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn output_contains_input(data in proptest::collection::vec(any::<bool>(), 24 * 24)) {
            let m = BinaryMask::new(24, 24, data).unwrap();
            prop_assume!(m.count() > 0);
            let out = amf_border_correction(&m, 6).unwrap();
            prop_assert!(out.contains(&m));
        }
    }
}
