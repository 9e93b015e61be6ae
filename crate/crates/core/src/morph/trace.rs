use crate::error::{Error, Result};
use crate::imgcore::{connected_components, BinaryMask, Connectivity};

/// Integer pixel coordinate `(x, y)`, y pointing down.
pub type Point = (i64, i64);

// Moore neighbourhood in clockwise screen order, starting west.
const DIRS: [Point; 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

fn dir_index(v: Point) -> usize {
    DIRS.iter()
        .position(|&d| d == v)
        .expect("unit neighbour offset")
}

/// One Moore step: from `p`, whose backtrack neighbour lies in direction
/// `back`, find the next boundary pixel and its backtrack direction.
fn moore_step(mask: &BinaryMask, p: Point, back: usize) -> Option<(Point, usize)> {
    for k in 1..=8 {
        let d = (back + k) % 8;
        let q = (p.0 + DIRS[d].0, p.1 + DIRS[d].1);
        if mask.get_signed(q.0, q.1) {
            let prev = DIRS[(d + 7) % 8];
            let b = (prev.0 - DIRS[d].0, prev.1 - DIRS[d].1);
            return Some((q, dir_index(b)));
        }
    }
    None
}

/// Clockwise outer boundary of the component containing `start`, which must
/// be that component's first pixel in raster order.
///
/// Pixels where the boundary pinches (one-pixel bridges) are visited once per
/// pass through them.
pub fn trace_component(mask: &BinaryMask, start: Point) -> Vec<Point> {
    let mut contour = vec![start];
    let Some((mut p, mut back)) = moore_step(mask, start, 0) else {
        return contour;
    };
    let second = p;
    let cap = 4 * mask.len() + 8;
    while contour.len() < cap {
        let (q, qb) = moore_step(mask, p, back).expect("traced pixel has a neighbour");
        if p == start && q == second {
            break;
        }
        contour.push(p);
        p = q;
        back = qb;
    }
    contour
}

/// Outer boundary of every 8-connected component, in raster order of the
/// components' first pixels.
pub fn boundary_trace(mask: &BinaryMask) -> Result<Vec<Vec<Point>>> {
    let labels = connected_components(mask, Connectivity::Eight);
    if labels.component_count() == 0 {
        return Err(Error::EmptyMask);
    }
    let mut seen = vec![false; labels.component_count() + 1];
    let mut out = Vec::with_capacity(labels.component_count());
    for (i, &l) in labels.labels().iter().enumerate() {
        if l != 0 && !seen[l as usize] {
            seen[l as usize] = true;
            let start = ((i % mask.width()) as i64, (i / mask.width()) as i64);
            out.push(trace_component(mask, start));
        }
    }
    Ok(out)
}
