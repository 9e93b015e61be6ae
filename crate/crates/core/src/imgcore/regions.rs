use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{BinaryMask, LabeledImage};
use crate::error::{Error, Result};

/// Pixel adjacency used for region growing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub(crate) fn offsets(self) -> &'static [(i64, i64)] {
        const FOUR: [(i64, i64); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
        const EIGHT: [(i64, i64); 8] = [
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        match n {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            _ => Err(Error::InvalidParameter(format!(
                "connectivity must be 4 or 8, got {n}"
            ))),
        }
    }
}

/// Labels connected foreground regions in first-encounter raster order.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> LabeledImage {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.data[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.data[j] && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            }
        }
    }
    LabeledImage {
        width: w,
        height: h,
        labels,
        component_count: next as usize,
    }
}

/// Marks every pixel with `value` reachable from the image border.
fn flood_from_border(mask: &BinaryMask, value: bool, connectivity: Connectivity) -> Vec<bool> {
    let (w, h) = (mask.width, mask.height);
    let mut reached = vec![false; w * h];
    let mut queue = VecDeque::new();
    let seed = |i: usize, reached: &mut Vec<bool>, queue: &mut VecDeque<usize>| {
        if mask.data[i] == value && !reached[i] {
            reached[i] = true;
            queue.push_back(i);
        }
    };
    for x in 0..w {
        seed(x, &mut reached, &mut queue);
        if h > 1 {
            seed((h - 1) * w + x, &mut reached, &mut queue);
        }
    }
    for y in 0..h {
        seed(y * w, &mut reached, &mut queue);
        if w > 1 {
            seed(y * w + w - 1, &mut reached, &mut queue);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for &(dx, dy) in connectivity.offsets() {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                continue;
            }
            let j = ny as usize * w + nx as usize;
            if mask.data[j] == value && !reached[j] {
                reached[j] = true;
                queue.push_back(j);
            }
        }
    }
    reached
}

/// Turns enclosed background (not 4-connected to the border) into foreground.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let outside = flood_from_border(mask, false, Connectivity::Four);
    BinaryMask {
        width: mask.width,
        height: mask.height,
        data: mask
            .data
            .iter()
            .zip(&outside)
            .map(|(&m, &o)| m || !o)
            .collect(),
    }
}

/// Removes every 8-connected foreground component that touches the image border.
pub fn clear_border_objects(mask: &BinaryMask) -> BinaryMask {
    let touching = flood_from_border(mask, true, Connectivity::Eight);
    BinaryMask {
        width: mask.width,
        height: mask.height,
        data: mask
            .data
            .iter()
            .zip(&touching)
            .map(|(&m, &t)| m && !t)
            .collect(),
    }
}

/// Parameters of the lung-candidate selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LungSelection {
    /// Minimum component area as a fraction of the slice area.
    pub min_area_fraction: f64,
    /// Maximum number of components kept (two lungs).
    pub max_regions: usize,
}

impl Default for LungSelection {
    fn default() -> Self {
        Self {
            min_area_fraction: 0.005,
            max_regions: 2,
        }
    }
}

/// Keeps the two largest interior components that clear the area floor.
pub fn select_lung_regions(labeled: &LabeledImage) -> Result<BinaryMask> {
    select_lung_regions_with(labeled, &LungSelection::default())
}

pub fn select_lung_regions_with(
    labeled: &LabeledImage,
    params: &LungSelection,
) -> Result<BinaryMask> {
    let (w, h) = (labeled.width, labeled.height);
    let total = w * h;
    if total == 0 {
        return Err(Error::NoLungCandidate);
    }
    let areas = labeled.areas();

    let mut on_border = vec![false; labeled.component_count + 1];
    let mut mark = |i: usize| on_border[labeled.labels[i] as usize] = true;
    for x in 0..w {
        mark(x);
        mark((h - 1) * w + x);
    }
    for y in 0..h {
        mark(y * w);
        mark(y * w + w - 1);
    }

    let floor = params.min_area_fraction * total as f64;
    let mut candidates: Vec<u32> = (1..=labeled.component_count as u32)
        .filter(|&l| !on_border[l as usize] && areas[l as usize] as f64 >= floor)
        .collect();
    if candidates.is_empty() {
        return Err(Error::NoLungCandidate);
    }
    // Largest first; label order breaks ties so the choice is deterministic.
    candidates.sort_by(|&a, &b| areas[b as usize].cmp(&areas[a as usize]).then(a.cmp(&b)));
    candidates.truncate(params.max_regions);

    let mut keep = vec![false; labeled.component_count + 1];
    for l in candidates {
        keep[l as usize] = true;
    }
    Ok(BinaryMask {
        width: w,
        height: h,
        data: labeled.labels.iter().map(|&l| keep[l as usize]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(rows: &[&str]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        let data = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c == '#'))
            .collect();
        BinaryMask::new(w, h, data).unwrap()
    }

    #[test]
    fn empty_mask_has_no_components() {
        let l = connected_components(&BinaryMask::filled(5, 5, false), Connectivity::Eight);
        assert_eq!(l.component_count(), 0);
    }

    #[test]
    fn diagonal_pixels_depend_on_connectivity() {
        let m = mask(&["#.", ".#"]);
        assert_eq!(
            connected_components(&m, Connectivity::Four).component_count(),
            2
        );
        assert_eq!(
            connected_components(&m, Connectivity::Eight).component_count(),
            1
        );
    }

    #[test]
    fn labels_follow_raster_order() {
        let m = mask(&["..#", "#..", "..#"]);
        let l = connected_components(&m, Connectivity::Four);
        assert_eq!(l.get(2, 0), 1);
        assert_eq!(l.get(0, 1), 2);
        assert_eq!(l.get(2, 2), 3);
    }

    #[test]
    fn fill_holes_fills_ring_center() {
        let m = mask(&["#####", "#...#", "#...#", "#...#", "#####"]);
        let f = fill_holes(&m);
        assert_eq!(f.count(), 25);
    }

    #[test]
    fn fill_holes_leaves_open_shapes() {
        let m = mask(&[".....", ".##..", ".#...", "....."]);
        assert_eq!(fill_holes(&m), m);
        let empty = BinaryMask::filled(4, 4, false);
        assert_eq!(fill_holes(&empty), empty);
    }

    #[test]
    fn diagonal_gap_does_not_leak_background() {
        // Background inside is 8-connected to the outside through the corner,
        // but hole filling uses 4-connectivity for background.
        let m = mask(&[".....", "..#..", ".#.#.", "..#..", "....."]);
        let f = fill_holes(&m);
        assert!(f.get(2, 2));
    }

    #[test]
    fn clear_border_cases() {
        let top = mask(&[".##.", ".##.", "....", "...."]);
        assert_eq!(clear_border_objects(&top).count(), 0);

        let mixed = mask(&["#.....", "#.....", "......", "...##.", "...##.", "......"]);
        let cleared = clear_border_objects(&mixed);
        assert_eq!(cleared.count(), 4);
        assert!(cleared.get(3, 3) && !cleared.get(0, 0));

        let empty = BinaryMask::filled(3, 3, false);
        assert_eq!(clear_border_objects(&empty), empty);
    }

    #[test]
    fn select_two_largest_blobs() {
        let m = BinaryMask::from_fn(40, 40, |x, y| {
            let a = (5..15).contains(&x) && (5..30).contains(&y);
            let b = (22..35).contains(&x) && (5..30).contains(&y);
            let speck = x == 18 && y == 35;
            a || b || speck
        });
        let l = connected_components(&m, Connectivity::Eight);
        let sel = select_lung_regions(&l).unwrap();
        assert_eq!(sel.count(), 10 * 25 + 13 * 25);
        assert!(!sel.get(18, 35));
    }

    #[test]
    fn select_single_blob() {
        let m = BinaryMask::from_fn(20, 20, |x, y| (4..12).contains(&x) && (4..12).contains(&y));
        let l = connected_components(&m, Connectivity::Eight);
        assert_eq!(select_lung_regions(&l).unwrap(), m);
    }

    #[test]
    fn select_rejects_border_blobs() {
        let m = BinaryMask::from_fn(20, 20, |x, _| x < 5);
        let l = connected_components(&m, Connectivity::Eight);
        assert!(matches!(
            select_lung_regions(&l),
            Err(Error::NoLungCandidate)
        ));
    }
}
