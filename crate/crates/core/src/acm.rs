//! Two-phase piecewise-constant level-set segmentation (Chan–Vese).
//!
//! The contour is the zero set of `φ`, positive inside. Each iteration
//! moves `φ` by
//!
//! ```text
//! dt · δε(φ) · [ μ·κ(φ) − λin·(I − c_in)² + λout·(I − c_out)² ]
//! ```
//!
//! with `c_in`, `c_out` the current phase means and `κ` the curvature of the
//! level lines. The smoothed delta has unbounded support, so pixels far from
//! the contour can switch phase too and interior boundaries appear without
//! explicit seeding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{
    connected_components, fill_holes, select_lung_regions_with, squared_distance, BinaryMask,
    Connectivity, GrayImage, LungSelection,
};
use crate::morph::BorderCorrection;
use crate::pipeline::{finish, Candidate, Stage};

/// Level-set function on the image grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetField {
    width: usize,
    height: usize,
    phi: Vec<f64>,
}

impl LevelSetField {
    pub fn new(width: usize, height: usize, phi: Vec<f64>) -> Result<Self> {
        if phi.len() != width * height {
            return Err(Error::InvalidData(format!(
                "{} values for a {width}x{height} field",
                phi.len()
            )));
        }
        if let Some(v) = phi.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite level-set value {v}"
            )));
        }
        Ok(Self { width, height, phi })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut phi = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                phi.push(f(x, y));
            }
        }
        Self::new(width, height, phi)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.phi[y * self.width + x]
    }

    /// Pixels with `φ ≥ 0`.
    pub fn inside(&self) -> BinaryMask {
        BinaryMask::new(
            self.width,
            self.height,
            self.phi.iter().map(|&v| v >= 0.0).collect(),
        )
        .expect("field dimensions are consistent")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcmParams {
    /// Contour-length weight, in squared gray levels per pixel.
    pub mu: f64,
    pub lambda_in: f64,
    pub lambda_out: f64,
    pub dt: f64,
    pub max_iter: usize,
    /// Evolution stops once fewer than this fraction of pixels change phase.
    pub stop_tol: f64,
    /// Width of the smoothed delta, pixels.
    pub epsilon: f64,
    /// Iterations between signed-distance reinitialisations; 0 disables.
    pub reinit_every: usize,
    /// Binomial smoothing passes applied to φ before taking its curvature.
    pub curvature_smoothing: usize,
}

impl Default for AcmParams {
    fn default() -> Self {
        Self {
            mu: 0.2 * 255.0 * 255.0,
            lambda_in: 1.0,
            lambda_out: 1.0,
            dt: 0.5,
            max_iter: 500,
            stop_tol: 1e-4,
            epsilon: 1.5,
            reinit_every: 1,
            curvature_smoothing: 3,
        }
    }
}

impl AcmParams {
    /// Defaults with the length weight scaled to an intensity range `[0, lt]`.
    pub fn for_max_level(lt: u32) -> Self {
        let lt = lt as f64;
        Self {
            mu: 0.2 * lt * lt,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.into()));
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return bad("mu must be >= 0");
        }
        if !(self.lambda_in > 0.0 && self.lambda_out > 0.0) {
            return bad("lambda_in and lambda_out must be > 0");
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad("dt must be > 0");
        }
        if !(self.stop_tol > 0.0 && self.stop_tol < 1.0) {
            return bad("stop_tol must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        Ok(())
    }
}

/// Smoothed Dirac delta `ε / (π(ε² + φ²))`.
#[inline]
pub fn delta_eps(phi: f64, eps: f64) -> f64 {
    eps / (std::f64::consts::PI * (eps * eps + phi * phi))
}

/// Signed distance with the given phase assignment: `+(d − ½)` inside,
/// `−(d − ½)` outside, `d` the distance to the nearest pixel of the other
/// phase. The sign of every pixel is preserved.
pub fn signed_distance(inside: &BinaryMask) -> LevelSetField {
    let (w, h) = (inside.width(), inside.height());
    let m = inside.data();
    let to_out = squared_distance(w, h, |i| !m[i]);
    let to_in = squared_distance(w, h, |i| m[i]);
    // With no pixel of the other phase the distance is capped at the raster
    // size.
    let cap = (w + h) as f64;
    let phi = (0..w * h)
        .map(|i| {
            if m[i] {
                (to_out[i].sqrt() - 0.5).min(cap)
            } else {
                -(to_in[i].sqrt() - 0.5).min(cap)
            }
        })
        .collect();
    LevelSetField {
        width: w,
        height: h,
        phi,
    }
}

/// Signed distance to the centered rectangle spanning the middle 60% of
/// each dimension.
pub fn init_region(img: &GrayImage) -> Result<LevelSetField> {
    if img.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (w, h) = (img.width(), img.height());
    let span = |n: usize| {
        (
            (n as f64 * 0.2).round() as usize,
            (n as f64 * 0.8).round() as usize,
        )
    };
    let (x0, x1) = span(w);
    let (y0, y1) = span(h);
    let rect = BinaryMask::from_fn(w, h, |x, y| (x0..x1).contains(&x) && (y0..y1).contains(&y));
    Ok(signed_distance(&rect))
}

/// Curvature `div(∇φ/|∇φ|)` by central differences, replicated borders.
pub fn curvature(field: &LevelSetField) -> Vec<f64> {
    let (w, h) = (field.width, field.height);
    let mut k = vec![0.0; w * h];
    curvature_into(&field.phi, w, h, &mut k);
    k
}

/// One pass of the separable `[1 2 1] / 4` kernel with replicated borders.
fn blur121(f: &mut [f64], g: &mut [f64], w: usize, h: usize) {
    g.copy_from_slice(f);
    for y in 0..h {
        for x in 0..w {
            let l = g[y * w + x.saturating_sub(1)];
            let r = g[y * w + (x + 1).min(w - 1)];
            f[y * w + x] = 0.25 * l + 0.5 * g[y * w + x] + 0.25 * r;
        }
    }
    g.copy_from_slice(f);
    for y in 0..h {
        for x in 0..w {
            let u = g[y.saturating_sub(1) * w + x];
            let d = g[(y + 1).min(h - 1) * w + x];
            f[y * w + x] = 0.25 * u + 0.5 * g[y * w + x] + 0.25 * d;
        }
    }
}

fn curvature_into(phi: &[f64], w: usize, h: usize, out: &mut [f64]) {
    for y in 0..h {
        let yu = y.saturating_sub(1);
        let yd = (y + 1).min(h - 1);
        for x in 0..w {
            let xl = x.saturating_sub(1);
            let xr = (x + 1).min(w - 1);
            let at = |xx: usize, yy: usize| phi[yy * w + xx];
            let c = at(x, y);
            let px = 0.5 * (at(xr, y) - at(xl, y));
            let py = 0.5 * (at(x, yd) - at(x, yu));
            let pxx = at(xr, y) - 2.0 * c + at(xl, y);
            let pyy = at(x, yd) - 2.0 * c + at(x, yu);
            let pxy = 0.25 * (at(xr, yd) - at(xr, yu) - at(xl, yd) + at(xl, yu));
            let g2 = px * px + py * py;
            out[y * w + x] = if g2 < 1e-12 {
                0.0
            } else {
                (pxx * py * py - 2.0 * px * py * pxy + pyy * px * px) / (g2 * g2.sqrt())
            };
        }
    }
}

/// Smoothed contour length `Σ δε(φ)|∇φ|`, central differences.
pub fn smoothed_length(field: &LevelSetField, eps: f64) -> f64 {
    let (w, h) = (field.width, field.height);
    let at = |x: usize, y: usize| field.phi[y * w + x];
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let px = 0.5 * (at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y));
            let py = 0.5 * (at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1)));
            total += delta_eps(at(x, y), eps) * px.hypot(py);
        }
    }
    total
}

/// Phase means `(c_in, c_out)`.
///
/// An empty phase takes the mean of the image's outer pixel ring; when that
/// coincides with the other phase's mean the partition carries no
/// information and the contour is reported as collapsed.
pub fn phase_means(img: &GrayImage, inside: &[bool]) -> Result<(f64, f64)> {
    let (mut s_in, mut n_in, mut s_out, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for (&v, &m) in img.data().iter().zip(inside) {
        if m {
            s_in += v;
            n_in += 1;
        } else {
            s_out += v;
            n_out += 1;
        }
    }
    if n_in > 0 && n_out > 0 {
        return Ok((s_in / n_in as f64, s_out / n_out as f64));
    }
    let ring = ring_mean(img);
    let (c_in, c_out) = if n_in == 0 {
        (ring, s_out / n_out as f64)
    } else {
        (s_in / n_in as f64, ring)
    };
    if c_in == c_out {
        return Err(Error::ContourCollapsed);
    }
    Ok((c_in, c_out))
}

fn ring_mean(img: &GrayImage) -> f64 {
    let (w, h) = (img.width(), img.height());
    let (mut s, mut n) = (0.0, 0usize);
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                s += img.get(x, y);
                n += 1;
            }
        }
    }
    s / n as f64
}

/// Crack length of the partition: 4-adjacent pixel pairs in different phases.
fn crack_length(inside: &[bool], w: usize, h: usize) -> usize {
    let mut n = 0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w && inside[i] != inside[i + 1] {
                n += 1;
            }
            if y + 1 < h && inside[i] != inside[i + w] {
                n += 1;
            }
        }
    }
    n
}

/// Discrete energy of a sharp partition, with its optimal phase means.
pub fn chan_vese_energy(img: &GrayImage, inside: &BinaryMask, p: &AcmParams) -> Result<f64> {
    inside_check(img, inside.width(), inside.height())?;
    energy_of(img, inside.data(), p)
}

fn energy_of(img: &GrayImage, inside: &[bool], p: &AcmParams) -> Result<f64> {
    let (c_in, c_out) = phase_means(img, inside)?;
    let region: f64 = img
        .data()
        .iter()
        .zip(inside)
        .map(|(&v, &m)| {
            if m {
                p.lambda_in * (v - c_in) * (v - c_in)
            } else {
                p.lambda_out * (v - c_out) * (v - c_out)
            }
        })
        .sum();
    Ok(p.mu * crack_length(inside, img.width(), img.height()) as f64 + region)
}

fn inside_check(img: &GrayImage, w: usize, h: usize) -> Result<()> {
    if img.width() != w || img.height() != h {
        return Err(Error::DimensionMismatch(img.width(), img.height(), w, h));
    }
    if img.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Step halvings tried for sign changes that were turned down.
const MAX_HALVINGS: u32 = 12;

/// Proposed changes this close (chessboard distance) are judged together.
const GROUP_REACH: usize = 2;

/// Scratch space for grouping proposed sign changes.
struct Patches {
    w: usize,
    h: usize,
    /// Patch tag per pixel; tags only grow so nothing needs clearing.
    label: Vec<u32>,
    tag: u32,
    stack: Vec<usize>,
    members: Vec<usize>,
}

impl Patches {
    fn new(w: usize, h: usize) -> Self {
        Self {
            w,
            h,
            label: vec![0; w * h],
            tag: 0,
            stack: Vec::new(),
            members: Vec::new(),
        }
    }

    /// Groups the pixels of `flip` into 4-connected patches and flips each
    /// patch in `inside` whose flip does not raise the energy with the means
    /// held fixed. Patches are maximal, so no two share a length edge.
    /// Accepted pixels go to `kept`, the others to `refused`.
    #[allow(clippy::too_many_arguments)]
    fn settle(
        &mut self,
        data: &[f64],
        flip: &[usize],
        wants: &mut [bool],
        inside: &mut [bool],
        (c_in, c_out): (f64, f64),
        p: &AcmParams,
        kept: &mut Vec<usize>,
        refused: &mut Vec<usize>,
    ) {
        let (w, h) = (self.w, self.h);
        let first = self.tag + 1;
        for &seed in flip {
            if self.label[seed] >= first {
                continue;
            }
            self.tag += 1;
            let tag = self.tag;
            self.members.clear();
            self.stack.push(seed);
            self.label[seed] = tag;
            let mut region = 0.0;
            let mut crack = 0i64;
            while let Some(i) = self.stack.pop() {
                self.members.push(i);
                let v = data[i];
                let cost_in = p.lambda_in * (v - c_in) * (v - c_in);
                let cost_out = p.lambda_out * (v - c_out) * (v - c_out);
                region += if inside[i] {
                    cost_out - cost_in
                } else {
                    cost_in - cost_out
                };
                let (x, y) = (i % w, i / w);
                let nbrs = [
                    (x > 0).then(|| i - 1),
                    (x + 1 < w).then(|| i + 1),
                    (y > 0).then(|| i - w),
                    (y + 1 < h).then(|| i + w),
                ];
                for j in nbrs.into_iter().flatten() {
                    if !wants[j] {
                        // The neighbour stays, so this edge switches state.
                        crack += if inside[j] == inside[i] { 1 } else { -1 };
                    }
                }
                let r = GROUP_REACH;
                for ny in y.saturating_sub(r)..(y + r + 1).min(h) {
                    for nx in x.saturating_sub(r)..(x + r + 1).min(w) {
                        let j = ny * w + nx;
                        if wants[j] && self.label[j] < first {
                            self.label[j] = tag;
                            self.stack.push(j);
                        }
                    }
                }
            }
            let dest = if region + p.mu * crack as f64 <= 0.0 {
                for &i in &self.members {
                    inside[i] = !inside[i];
                }
                &mut *kept
            } else {
                &mut *refused
            };
            dest.extend_from_slice(&self.members);
        }
        for &i in flip {
            wants[i] = false;
        }
        if self.tag > u32::MAX / 2 {
            self.label.fill(0);
            self.tag = 0;
        }
    }
}

/// Result of an evolution with its per-iteration record.
#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub phi: LevelSetField,
    pub iterations: usize,
    /// Energy of the initial partition followed by one entry per iteration.
    pub energy: Vec<f64>,
    /// Phase means `(c_in, c_out)` used by each iteration.
    pub means: Vec<(f64, f64)>,
}

pub fn chan_vese_evolve(
    img: &GrayImage,
    phi0: &LevelSetField,
    p: &AcmParams,
) -> Result<LevelSetField> {
    Ok(chan_vese_run(img, phi0, p)?.phi)
}

/// Evolves `phi0` until fewer than `stop_tol` of the pixels change phase in
/// an iteration, or `max_iter` iterations.
pub fn chan_vese_run(img: &GrayImage, phi0: &LevelSetField, p: &AcmParams) -> Result<Evolution> {
    p.validate()?;
    inside_check(img, phi0.width, phi0.height)?;
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let data = img.data();
    let mut phi = phi0.phi.clone();
    let mut inside: Vec<bool> = phi.iter().map(|&v| v >= 0.0).collect();
    let mut kappa = vec![0.0; n];
    let mut energy = vec![energy_of(img, &inside, p)?];
    let mut means = Vec::new();
    let mut iterations = 0;

    let mut speed = vec![0.0; n];
    let mut smooth = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut wants = vec![false; n];
    let mut patches = Patches::new(w, h);
    let (mut flip, mut kept, mut refused) = (Vec::new(), Vec::new(), Vec::new());
    while iterations < p.max_iter {
        let (c_in, c_out) = phase_means(img, &inside)?;
        smooth.copy_from_slice(&phi);
        for _ in 0..p.curvature_smoothing {
            blur121(&mut smooth, &mut scratch, w, h);
        }
        curvature_into(&smooth, w, h, &mut kappa);
        flip.clear();
        for i in 0..n {
            let v = data[i];
            let force = p.mu * kappa[i] - p.lambda_in * (v - c_in) * (v - c_in)
                + p.lambda_out * (v - c_out) * (v - c_out);
            speed[i] = delta_eps(phi[i], p.epsilon) * force;
            if (phi[i] + p.dt * speed[i] >= 0.0) != inside[i] {
                flip.push(i);
            }
        }
        // Sign changes are taken patch by patch, and only where they do not
        // raise the energy at the current means. Refused pixels are offered
        // again with half the step.
        let mut changed = 0;
        let mut dt = p.dt;
        for halving in 0..=MAX_HALVINGS {
            if flip.is_empty() {
                break;
            }
            if halving > 0 {
                dt *= 0.5;
                flip.retain(|&i| (phi[i] + dt * speed[i] >= 0.0) != inside[i]);
            }
            for &i in &flip {
                wants[i] = true;
            }
            kept.clear();
            refused.clear();
            patches.settle(
                data,
                &flip,
                &mut wants,
                &mut inside,
                (c_in, c_out),
                p,
                &mut kept,
                &mut refused,
            );
            changed += kept.len();
            for &i in &kept {
                phi[i] += dt * speed[i];
                speed[i] = 0.0;
            }
            std::mem::swap(&mut flip, &mut refused);
        }
        for i in 0..n {
            // Moves that keep the sign are taken in full; refused ones stop
            // just short of the front.
            let moved = phi[i] + p.dt * speed[i];
            phi[i] = if (moved >= 0.0) == inside[i] {
                moved
            } else if inside[i] {
                0.0
            } else {
                -f64::MIN_POSITIVE
            };
        }
        means.push((c_in, c_out));
        energy.push(energy_of(img, &inside, p)?);
        iterations += 1;
        if p.reinit_every > 0 && iterations % p.reinit_every == 0 {
            let mask = BinaryMask::new(w, h, inside.clone())?;
            phi = signed_distance(&mask).phi;
        }
        if (changed as f64) < p.stop_tol * n as f64 {
            break;
        }
    }

    Ok(Evolution {
        phi: LevelSetField {
            width: w,
            height: h,
            phi,
        },
        iterations,
        energy,
        means,
    })
}

/// Phase with the lower mean intensity.
pub fn dark_phase(img: &GrayImage, phi: &LevelSetField) -> Result<BinaryMask> {
    let inside = phi.inside();
    let (c_in, c_out) = phase_means(img, inside.data())?;
    Ok(if c_in <= c_out {
        inside
    } else {
        crate::imgcore::invert(&inside)
    })
}

/// Output of [`acm_segment`].
#[derive(Debug, Clone, PartialEq)]
pub struct AcmResult {
    pub iterations: usize,
    pub mask: BinaryMask,
    pub parenchyma: GrayImage,
    pub stages: Vec<Stage>,
}

/// Stages (i)–(iv) plus hole filling; returns the iteration count.
pub fn acm_candidate(
    img: &GrayImage,
    params: &AcmParams,
    selection: &LungSelection,
) -> Result<(usize, Candidate)> {
    let phi0 = init_region(img)?;
    let run = chan_vese_run(img, &phi0, params)?;
    let dark = dark_phase(img, &run.phi)?;
    let lungs =
        select_lung_regions_with(&connected_components(&dark, Connectivity::Eight), selection)?;
    let filled = fill_holes(&lungs);
    let stages = vec![
        Stage::gray("1_low_dose_ct_image", img.clone()),
        Stage::mask("2_initial_region_selection", phi0.inside()),
        Stage::mask("3_active_contour_segmentation", dark),
        Stage::mask("4_separation_of_lung_region", lungs),
    ];
    Ok((
        run.iterations,
        Candidate {
            mask: filled,
            stages,
        },
    ))
}

pub fn acm_segment(img: &GrayImage, correction: &BorderCorrection) -> Result<AcmResult> {
    acm_segment_with(img, correction, &AcmParams::for_max_level(img.max_level()))
}

pub fn acm_segment_with(
    img: &GrayImage,
    correction: &BorderCorrection,
    params: &AcmParams,
) -> Result<AcmResult> {
    let (iterations, cand) = acm_candidate(img, params, &LungSelection::default())?;
    let done = finish(img, &cand, correction)?;
    Ok(AcmResult {
        iterations,
        mask: done.mask,
        parenchyma: done.parenchyma,
        stages: done.stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn disk_image(size: usize, r: f64) -> (GrayImage, BinaryMask) {
        let c = size as f64 / 2.0 - 0.5;
        let inside = |x: usize, y: usize| {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            dx * dx + dy * dy <= r * r
        };
        let img =
            GrayImage::from_fn(size, size, |x, y| if inside(x, y) { 40.0 } else { 200.0 }).unwrap();
        (img, BinaryMask::from_fn(size, size, inside))
    }

    fn dice(a: &BinaryMask, b: &BinaryMask) -> f64 {
        let both = a.intersection(b).unwrap().count() as f64;
        2.0 * both / (a.count() + b.count()) as f64
    }

    #[test]
    fn init_region_small_image() {
        let img = GrayImage::filled(10, 10, 0.0).unwrap();
        let phi = init_region(&img).unwrap();
        let block = BinaryMask::from_fn(10, 10, |x, y| (2..8).contains(&x) && (2..8).contains(&y));
        assert_eq!(phi.inside(), block);
        assert!(phi.get(0, 0) < 0.0);
        assert!(phi.phi().iter().all(|&v| v != 0.0));
    }

    #[test]
    fn signed_distance_matches_brute_force() {
        let m = BinaryMask::from_fn(17, 13, |x, y| {
            (x * 7 + y * 3) % 5 == 0 || (4..9).contains(&x)
        });
        let phi = signed_distance(&m);
        for y in 0..13 {
            for x in 0..17 {
                let mut best = f64::INFINITY;
                for yy in 0..13 {
                    for xx in 0..17 {
                        if m.get(xx, yy) != m.get(x, y) {
                            let d = ((x as f64 - xx as f64).powi(2)
                                + (y as f64 - yy as f64).powi(2))
                            .sqrt();
                            best = best.min(d);
                        }
                    }
                }
                let want = if m.get(x, y) { best - 0.5 } else { 0.5 - best };
                assert!((phi.get(x, y) - want).abs() < 1e-9, "({x},{y})");
            }
        }
    }

    #[test]
    fn curvature_of_circle() {
        // Signed distance to a circle of radius 40: κ = −1/r at radius r.
        let phi = LevelSetField::from_fn(128, 128, |x, y| {
            40.0 - ((x as f64 - 64.0).powi(2) + (y as f64 - 64.0).powi(2)).sqrt()
        })
        .unwrap();
        let k = curvature(&phi);
        let at = |x: usize, y: usize| k[y * 128 + x];
        assert!((at(104, 64) + 1.0 / 40.0).abs() < 1e-3);
        assert!((at(64, 94) + 1.0 / 30.0).abs() < 1e-3);
    }

    #[test]
    fn curvature_is_length_gradient() {
        // Shallow, smooth φ so δε varies over many pixels.
        let (w, h) = (256usize, 256usize);
        let slope = 0.02;
        let phi = LevelSetField::from_fn(w, h, |x, y| {
            let r2 = (x as f64 - 128.0).powi(2) + (y as f64 - 128.0).powi(2);
            slope * (70.0 - (r2 + 100.0).sqrt())
        })
        .unwrap();
        let bump: Vec<f64> = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                let d2 = (x - 198.0).powi(2) + (y - 128.0).powi(2);
                (-d2 / (2.0 * 15.0 * 15.0)).exp()
            })
            .collect();
        let eps = 1.5;
        let k = curvature(&phi);
        // δL/δφ = −δε(φ)·κ.
        let predicted: f64 = (0..w * h)
            .map(|i| -delta_eps(phi.phi()[i], eps) * k[i] * bump[i])
            .sum();
        let s = 1e-3;
        let shifted = |sign: f64| {
            let v = phi
                .phi()
                .iter()
                .zip(&bump)
                .map(|(p, b)| p + sign * s * b)
                .collect();
            smoothed_length(&LevelSetField::new(w, h, v).unwrap(), eps)
        };
        let numeric = (shifted(1.0) - shifted(-1.0)) / (2.0 * s);
        let rel = (numeric - predicted).abs() / predicted.abs();
        assert!(
            rel < 1e-3,
            "numeric {numeric} predicted {predicted} rel {rel}"
        );
    }

    #[test]
    fn recovers_dark_disk() {
        let (img, truth) = disk_image(128, 30.0);
        let phi0 = init_region(&img).unwrap();
        let run = chan_vese_run(&img, &phi0, &AcmParams::default()).unwrap();
        let dark = dark_phase(&img, &run.phi).unwrap();
        assert!(dice(&dark, &truth) >= 0.99);
        for w in run.energy.windows(2) {
            assert!(w[1] <= w[0] * 1.01 + 1e-9, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn constant_image_contour_shrinks() {
        let img = GrayImage::filled(40, 40, 90.0).unwrap();
        let phi0 = init_region(&img).unwrap();
        let p = AcmParams {
            max_iter: 20,
            ..AcmParams::default()
        };
        match chan_vese_run(&img, &phi0, &p) {
            Ok(run) => {
                assert!(run.phi.inside().count() < phi0.inside().count());
                assert!(run.means.iter().all(|&(a, b)| a == b));
            }
            Err(e) => assert!(matches!(e, Error::ContourCollapsed)),
        }
    }

    #[test]
    fn evolution_is_deterministic() {
        let (img, _) = disk_image(64, 12.0);
        let phi0 = init_region(&img).unwrap();
        let p = AcmParams::default();
        assert_eq!(
            chan_vese_evolve(&img, &phi0, &p).unwrap(),
            chan_vese_evolve(&img, &phi0, &p).unwrap()
        );
    }

    #[test]
    fn parameter_validation() {
        let bad = [
            AcmParams {
                mu: -1.0,
                ..AcmParams::default()
            },
            AcmParams {
                lambda_in: 0.0,
                ..AcmParams::default()
            },
            AcmParams {
                dt: 0.0,
                ..AcmParams::default()
            },
            AcmParams {
                stop_tol: 1.0,
                ..AcmParams::default()
            },
        ];
        for p in bad {
            assert!(p.validate().is_err());
        }
        let img = GrayImage::filled(8, 8, 1.0).unwrap();
        let phi = LevelSetField::from_fn(4, 4, |_, _| 1.0).unwrap();
        assert!(chan_vese_run(&img, &phi, &AcmParams::default()).is_err());
    }

    #[test]
    fn stage_names() {
        let img = GrayImage::from_fn(96, 96, |x, y| {
            let body =
                ((x as f64 - 48.0) / 44.0).powi(2) + ((y as f64 - 48.0) / 40.0).powi(2) <= 1.0;
            let lung = |cx: f64| {
                ((x as f64 - cx) / 12.0).powi(2) + ((y as f64 - 48.0) / 22.0).powi(2) <= 1.0
            };
            if lung(30.0) || lung(66.0) {
                50.0
            } else if body {
                170.0
            } else {
                10.0
            }
        })
        .unwrap();
        let r = acm_segment(&img, &BorderCorrection::amf()).unwrap();
        let names: Vec<_> = r.stages.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "1_low_dose_ct_image",
                "2_initial_region_selection",
                "3_active_contour_segmentation",
                "4_separation_of_lung_region",
                "5_lung_mask_after_amf",
                "6_segmented_lung_parenchyma"
            ]
        );
        assert!(r.mask.count() > 1200);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn means_stay_in_range_and_energy_descends(
            data in proptest::collection::vec(0u8..=255, 24 * 24),
        ) {
            let img = GrayImage::new(24, 24, data.iter().map(|&v| v as f64).collect()).unwrap();
            let (lo, hi) = img.min_max().unwrap();
            let phi0 = init_region(&img).unwrap();
            let p = AcmParams { max_iter: 60, ..AcmParams::default() };
            match chan_vese_run(&img, &phi0, &p) {
                Ok(run) => {
                    for &(a, b) in &run.means {
                        prop_assert!(a >= lo - 1e-9 && a <= hi + 1e-9);
                        prop_assert!(b >= lo - 1e-9 && b <= hi + 1e-9);
                    }
                    for w in run.energy.windows(2) {
                        prop_assert!(w[1] <= w[0] * 1.01 + 1e-9);
                    }
                }
                Err(e) => prop_assert!(matches!(e, Error::ContourCollapsed)),
            }
        }
    }
}
