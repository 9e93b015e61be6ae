//! Fuzzy c-means clustering and the FCM lung pipeline.
//!
//! Clustering alternates the standard updates
//!
//! ```text
//! v_k  = Σ_i u_ik^m x_i / Σ_i u_ik^m
//! u_ik = 1 / Σ_j (|x_i − v_k| / |x_i − v_j|)^(2/(m−1))
//! ```
//!
//! over the distinct intensities weighted by their pixel counts, which gives
//! exactly the per-pixel result at the cost of one point per gray level.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{
    clear_border_objects, connected_components, fill_holes, invert, select_lung_regions_with,
    BinaryMask, Connectivity, GrayImage, LungSelection,
};
use crate::morph::BorderCorrection;
use crate::pipeline::{finish, Candidate, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FcmParams {
    pub clusters: usize,
    /// Fuzzifier `m > 1`.
    pub m: f64,
    /// Convergence threshold on the largest center movement, gray levels.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FcmParams {
    fn default() -> Self {
        Self {
            clusters: 2,
            m: 2.0,
            tol: 1e-4,
            max_iter: 300,
        }
    }
}

/// Converged clustering of a value list.
#[derive(Debug, Clone, PartialEq)]
pub struct FcmState {
    /// Cluster centers, ascending.
    pub centers: Vec<f64>,
    /// Per-value memberships, `clusters` consecutive entries per value.
    pub memberships: Vec<f64>,
    pub m: f64,
    /// Objective of the returned centers and memberships.
    pub objective: f64,
    /// Objective after every membership update, starting from the
    /// initial centers.
    pub objective_history: Vec<f64>,
    /// Number of center updates performed.
    pub iterations: usize,
}

impl FcmState {
    pub fn clusters(&self) -> usize {
        self.centers.len()
    }

    /// Membership vector of value `i`.
    pub fn membership(&self, i: usize) -> &[f64] {
        let c = self.clusters();
        &self.memberships[i * c..(i + 1) * c]
    }

    pub fn len(&self) -> usize {
        self.memberships.len() / self.clusters().max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.memberships.is_empty()
    }
}

/// Memberships of `x` in each cluster; a value sitting exactly on one or
/// more centers belongs to them in equal shares.
fn memberships_of(x: f64, centers: &[f64], m: f64, out: &mut [f64]) {
    let on_center = centers.iter().filter(|&&v| v == x).count();
    if on_center > 0 {
        let share = 1.0 / on_center as f64;
        for (u, &v) in out.iter_mut().zip(centers) {
            *u = if v == x { share } else { 0.0 };
        }
        return;
    }
    let p = 1.0 / (m - 1.0);
    // u_k ∝ d_k^(−2/(m−1)), normalised; relative to the nearest center so
    // the powers stay in range.
    let nearest = centers
        .iter()
        .map(|&v| (x - v) * (x - v))
        .fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    for (u, &v) in out.iter_mut().zip(centers) {
        let d2 = (x - v) * (x - v);
        *u = (nearest / d2).powf(p);
        total += *u;
    }
    for u in out.iter_mut() {
        *u /= total;
    }
}

struct Weighted<'a> {
    points: &'a [f64],
    weights: &'a [f64],
}

impl Weighted<'_> {
    fn memberships(&self, centers: &[f64], m: f64) -> Vec<f64> {
        let c = centers.len();
        let mut u = vec![0.0; self.points.len() * c];
        for (i, &x) in self.points.iter().enumerate() {
            memberships_of(x, centers, m, &mut u[i * c..(i + 1) * c]);
        }
        u
    }

    fn objective(&self, u: &[f64], centers: &[f64], m: f64) -> f64 {
        let c = centers.len();
        self.points
            .iter()
            .zip(self.weights)
            .enumerate()
            .map(|(i, (&x, &w))| {
                w * centers
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| u[i * c + k].powf(m) * (x - v) * (x - v))
                    .sum::<f64>()
            })
            .sum()
    }

    fn centers(&self, u: &[f64], previous: &[f64], m: f64) -> Vec<f64> {
        let c = previous.len();
        (0..c)
            .map(|k| {
                let (mut num, mut den) = (0.0, 0.0);
                for (i, (&x, &w)) in self.points.iter().zip(self.weights).enumerate() {
                    let um = w * u[i * c + k].powf(m);
                    num += um * x;
                    den += um;
                }
                if den > 0.0 {
                    num / den
                } else {
                    previous[k]
                }
            })
            .collect()
    }
}

/// Clusters `values` into `c` fuzzy classes.
///
/// Initial centers are drawn uniformly from `[min, max]` of the values with
/// a ChaCha8 generator seeded by `seed`.
pub fn fcm_cluster(
    values: &[f64],
    c: usize,
    m: f64,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<FcmState> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if c < 1 {
        return Err(Error::InvalidParameter("cluster count must be >= 1".into()));
    }
    if !(m > 1.0) || !m.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "fuzzifier must exceed 1, got {m}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite value {v}")));
    }

    // Distinct values and their multiplicities.
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut points: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for &v in &sorted {
        if points.last().is_some_and(|p| p.total_cmp(&v).is_eq()) {
            *weights.last_mut().unwrap() += 1.0;
        } else {
            points.push(v);
            weights.push(1.0);
        }
    }
    if c > points.len() {
        return Err(Error::TooManyClusters);
    }
    let data = Weighted {
        points: &points,
        weights: &weights,
    };

    let (lo, hi) = (points[0], points[points.len() - 1]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<f64> = (0..c)
        .map(|_| lo + (hi - lo) * rng.random::<f64>())
        .collect();

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut u = data.memberships(&centers, m);
    history.push(data.objective(&u, &centers, m));
    while iterations < max_iter {
        let next = data.centers(&u, &centers, m);
        let movement = next
            .iter()
            .zip(&centers)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        centers = next;
        iterations += 1;
        u = data.memberships(&centers, m);
        history.push(data.objective(&u, &centers, m));
        if movement < tol {
            break;
        }
    }

    // Ascending centers, memberships permuted to match.
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| centers[a].total_cmp(&centers[b]));
    let centers: Vec<f64> = order.iter().map(|&k| centers[k]).collect();

    let mut memberships = Vec::with_capacity(values.len() * c);
    for &x in values {
        let i = points
            .binary_search_by(|p| p.total_cmp(&x))
            .expect("value present among distinct points");
        memberships.extend(order.iter().map(|&k| u[i * c + k]));
    }

    Ok(FcmState {
        centers,
        memberships,
        m,
        objective: *history.last().unwrap(),
        objective_history: history,
        iterations,
    })
}

/// Lung (dark-class) mask: a pixel is foreground when its membership in the
/// lower-center cluster is at least that in the upper one.
pub fn fcm_defuzzify(state: &FcmState, img: &GrayImage) -> Result<BinaryMask> {
    if state.clusters() != 2 {
        return Err(Error::InvalidParameter(format!(
            "defuzzification needs 2 clusters, got {}",
            state.clusters()
        )));
    }
    if state.len() != img.len() {
        return Err(Error::InvalidData(format!(
            "{} memberships for {} pixels",
            state.len(),
            img.len()
        )));
    }
    BinaryMask::new(
        img.width(),
        img.height(),
        (0..img.len())
            .map(|i| {
                let u = state.membership(i);
                u[0] >= u[1]
            })
            .collect(),
    )
}

/// Output of [`fcm_segment`].
#[derive(Debug, Clone, PartialEq)]
pub struct FcmResult {
    pub centers: Vec<f64>,
    pub iterations: usize,
    pub mask: BinaryMask,
    pub parenchyma: GrayImage,
    pub stages: Vec<Stage>,
}

/// Stages (i)–(iv) plus hole filling.
pub fn fcm_candidate(
    img: &GrayImage,
    params: &FcmParams,
    selection: &LungSelection,
    seed: u64,
) -> Result<(FcmState, Candidate)> {
    if img.is_empty() {
        return Err(Error::EmptyInput);
    }
    if params.clusters != 2 {
        return Err(Error::InvalidParameter(
            "the FCM pipeline separates exactly 2 classes".into(),
        ));
    }
    let state = fcm_cluster(
        img.data(),
        params.clusters,
        params.m,
        params.tol,
        params.max_iter,
        seed,
    )?;
    let dark = fcm_defuzzify(&state, img)?;
    // Clustered image: each pixel shown at its cluster's center intensity.
    let clustered = GrayImage::with_max_level(
        img.width(),
        img.height(),
        dark.data()
            .iter()
            .map(|&d| {
                if d {
                    state.centers[0]
                } else {
                    state.centers[1]
                }
            })
            .collect(),
        img.max_level(),
    )?;
    // Tissue class is the bright one; its negative puts lung in the foreground.
    let tissue = invert(&dark);
    let negative = invert(&tissue);
    let interior = clear_border_objects(&negative);
    let lungs = select_lung_regions_with(
        &connected_components(&interior, Connectivity::Eight),
        selection,
    )?;
    let filled = fill_holes(&lungs);
    let stages = vec![
        Stage::gray("1_low_dose_ct_image", img.clone()),
        Stage::gray("2_fuzzy_c_means_clustering", clustered),
        Stage::mask("3_image_negatives", negative),
        Stage::mask("4_removal_of_surrounding_tissues", lungs),
    ];
    Ok((
        state,
        Candidate {
            mask: filled,
            stages,
        },
    ))
}

pub fn fcm_segment(img: &GrayImage, correction: &BorderCorrection, seed: u64) -> Result<FcmResult> {
    fcm_segment_with(img, correction, &FcmParams::default(), seed)
}

pub fn fcm_segment_with(
    img: &GrayImage,
    correction: &BorderCorrection,
    params: &FcmParams,
    seed: u64,
) -> Result<FcmResult> {
    let (state, cand) = fcm_candidate(img, params, &LungSelection::default(), seed)?;
    let done = finish(img, &cand, correction)?;
    Ok(FcmResult {
        centers: state.centers,
        iterations: state.iterations,
        mask: done.mask,
        parenchyma: done.parenchyma,
        stages: done.stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn separated_blobs_give_their_values() {
        let mut values = vec![10.0; 100];
        values.extend(vec![200.0; 100]);
        let s = fcm_cluster(&values, 2, 2.0, 1e-4, 300, 1).unwrap();
        assert!((s.centers[0] - 10.0).abs() < 1.0);
        assert!((s.centers[1] - 200.0).abs() < 1.0);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let values = [3.0, 8.0, 8.0, 21.0, 5.5];
        let s = fcm_cluster(&values, 1, 2.0, 1e-6, 100, 9).unwrap();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!((s.centers[0] - mean).abs() < 1e-9);
        assert!(s.memberships.iter().all(|&u| u == 1.0));
    }

    #[test]
    fn too_many_clusters() {
        assert!(matches!(
            fcm_cluster(&[1.0, 1.0, 2.0], 3, 2.0, 1e-4, 10, 0),
            Err(Error::TooManyClusters)
        ));
    }

    #[test]
    fn parameter_checks() {
        assert!(fcm_cluster(&[], 2, 2.0, 1e-4, 10, 0).is_err());
        assert!(fcm_cluster(&[1.0, 2.0], 2, 1.0, 1e-4, 10, 0).is_err());
        assert!(fcm_cluster(&[1.0, 2.0], 2, 2.0, 0.0, 10, 0).is_err());
        assert!(fcm_cluster(&[1.0, 2.0], 0, 2.0, 1e-4, 10, 0).is_err());
    }

    #[test]
    fn defuzzify_at_centers_and_midpoint() {
        let img = GrayImage::new(3, 1, vec![40.0, 120.0, 200.0]).unwrap();
        let state = FcmState {
            centers: vec![40.0, 200.0],
            memberships: {
                let mut u = vec![0.0; 6];
                for (i, &x) in img.data().iter().enumerate() {
                    memberships_of(x, &[40.0, 200.0], 2.0, &mut u[i * 2..i * 2 + 2]);
                }
                u
            },
            m: 2.0,
            objective: 0.0,
            objective_history: vec![],
            iterations: 0,
        };
        assert_eq!(state.membership(1), &[0.5, 0.5]);
        let mask = fcm_defuzzify(&state, &img).unwrap();
        assert_eq!(mask.data(), &[true, true, false]);
    }

    #[test]
    fn defuzzify_needs_two_clusters() {
        let img = GrayImage::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let s = fcm_cluster(img.data(), 3, 2.0, 1e-4, 50, 0).unwrap();
        assert!(fcm_defuzzify(&s, &img).is_err());
    }

    #[test]
    fn two_region_image_recovers_ellipse() {
        let inside = |x: usize, y: usize| {
            let (dx, dy) = ((x as f64 - 40.0) / 25.0, (y as f64 - 32.0) / 18.0);
            dx * dx + dy * dy <= 1.0
        };
        let img =
            GrayImage::from_fn(80, 64, |x, y| if inside(x, y) { 40.0 } else { 200.0 }).unwrap();
        let (_, cand) =
            fcm_candidate(&img, &FcmParams::default(), &LungSelection::default(), 4).unwrap();
        let stage_iv = match &cand.stages[3].raster {
            crate::pipeline::StageRaster::Mask(m) => m.clone(),
            _ => unreachable!(),
        };
        assert_eq!(stage_iv, BinaryMask::from_fn(80, 64, inside));
    }

    #[test]
    fn segmentation_is_deterministic() {
        let img = GrayImage::from_fn(64, 64, |x, y| {
            let (dx, dy) = (x as f64 - 32.0, y as f64 - 32.0);
            let base = if dx * dx + dy * dy < 300.0 {
                50.0
            } else {
                170.0
            };
            base + ((x * 7 + y * 13) % 11) as f64
        })
        .unwrap();
        let a = fcm_segment(&img, &BorderCorrection::amf(), 3).unwrap();
        let b = fcm_segment(&img, &BorderCorrection::amf(), 3).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn memberships_sum_to_one_and_objective_descends(
            values in proptest::collection::vec(0.0f64..255.0, 3..200),
            seed in any::<u64>(),
            m in 1.2f64..3.5,
        ) {
            let distinct = {
                let mut v = values.clone();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v.len()
            };
            prop_assume!(distinct >= 2);
            let s = fcm_cluster(&values, 2, m, 1e-6, 200, seed).unwrap();
            for i in 0..values.len() {
                let total: f64 = s.membership(i).iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
            for w in s.objective_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
            }
            prop_assert!(s.centers[0] <= s.centers[1]);
        }
    }
}
