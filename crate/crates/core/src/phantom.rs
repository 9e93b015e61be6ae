//! Seeded synthetic thorax slices with exact lung masks.
//!
//! A slice is a body ellipse on dark background with two dark lung ellipses,
//! optional vessels and nodules at soft-tissue intensity, and additive
//! Gaussian noise. Intensities are quantised to whole gray levels.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{BinaryMask, GrayImage, DEFAULT_MAX_LEVEL};

/// Millimetres per pixel; 3–10 mm nodules span radii of about 2–7 px.
pub const PIXEL_PITCH_MM: f64 = 0.7;

/// Ellipse with semi-axes `a` (along the rotated x axis) and `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    /// Rotation, radians.
    pub angle: f64,
}

impl Ellipse {
    pub fn new(cx: f64, cy: f64, a: f64, b: f64, angle: f64) -> Self {
        Self {
            cx,
            cy,
            a,
            b,
            angle,
        }
    }

    fn local(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        (c * dx + s * dy, -s * dx + c * dy)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (u, v) = self.local(x, y);
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }

    /// Same centre and rotation, semi-axes reduced by `margin`.
    pub fn shrunk(&self, margin: f64) -> Self {
        Self {
            a: self.a - margin,
            b: self.b - margin,
            ..*self
        }
    }

    /// Boundary point at parameter `t`.
    pub fn point(&self, t: f64) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let (u, v) = (self.a * t.cos(), self.b * t.sin());
        (self.cx + c * u - s * v, self.cy + s * u + c * v)
    }

    /// Unit outward normal at parameter `t`.
    pub fn normal(&self, t: f64) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let (u, v) = (t.cos() / self.a, t.sin() / self.b);
        let (nx, ny) = (c * u - s * v, s * u + c * v);
        let len = nx.hypot(ny);
        (nx / len, ny / len)
    }

    pub fn rasterize(&self, size: usize) -> BinaryMask {
        BinaryMask::from_fn(size, size, |x, y| self.contains(x as f64, y as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoduleKind {
    Isolated,
    JuxtaPleural,
    JuxtaVascular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nodule {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub intensity: f64,
    pub kind: NoduleKind,
}

/// Thick polyline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vessel {
    pub points: Vec<(f64, f64)>,
    pub thickness: f64,
    pub intensity: f64,
}

impl Vessel {
    fn distance(&self, x: f64, y: f64) -> f64 {
        if self.points.len() == 1 {
            let (px, py) = self.points[0];
            return (x - px).hypot(y - py);
        }
        self.points
            .windows(2)
            .map(|s| segment_distance(s[0], s[1], (x, y)))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.distance(x, y) <= self.thickness / 2.0
    }
}

fn segment_distance(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub size: usize,
    pub body: Ellipse,
    pub lungs: [Ellipse; 2],
    pub background_intensity: f64,
    pub body_intensity: f64,
    pub parenchyma_intensity: f64,
    pub vessels: Vec<Vessel>,
    pub nodules: Vec<Nodule>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            size: 512,
            body: Ellipse::new(256.0, 256.0, 220.0, 170.0, 0.0),
            lungs: [
                Ellipse::new(156.0, 256.0, 70.0, 115.0, 0.05),
                Ellipse::new(356.0, 256.0, 70.0, 115.0, -0.05),
            ],
            background_intensity: 10.0,
            body_intensity: 170.0,
            parenchyma_intensity: 50.0,
            vessels: Vec::new(),
            nodules: Vec::new(),
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    /// Index of the lung containing the point, if any.
    fn lung_at(&self, x: f64, y: f64) -> Option<usize> {
        self.lungs.iter().position(|l| l.contains(x, y))
    }

    /// Nearest lung by normalised radius, the host of a wall nodule.
    fn host_lung(&self, x: f64, y: f64) -> usize {
        let score = |l: &Ellipse| {
            let (u, v) = l.local(x, y);
            ((u / l.a).powi(2) + (v / l.b).powi(2)).sqrt() - 1.0
        };
        if score(&self.lungs[0]).abs() <= score(&self.lungs[1]).abs() {
            0
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidAnatomy(msg));
        if self.size == 0 {
            return Err(Error::EmptyInput);
        }
        let lt = DEFAULT_MAX_LEVEL as f64;
        for (name, v) in [
            ("background", self.background_intensity),
            ("body", self.body_intensity),
            ("parenchyma", self.parenchyma_intensity),
        ] {
            if !(0.0..=lt).contains(&v) {
                return bad(format!("{name} intensity {v} outside [0, {lt}]"));
            }
        }
        if self.parenchyma_intensity >= self.body_intensity {
            return bad("parenchyma must be darker than the body".into());
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter("noise_sigma must be >= 0".into()));
        }
        let n = self.size;
        let body = self.body.rasterize(n);
        let l0 = self.lungs[0].rasterize(n);
        let l1 = self.lungs[1].rasterize(n);
        if l0.count() == 0 || l1.count() == 0 {
            return bad("empty lung".into());
        }
        if l0.intersection(&l1)?.count() > 0 {
            return bad("lung ellipses overlap".into());
        }
        let lungs = l0.union(&l1)?;
        if !body.contains(&lungs) {
            return bad("lungs extend outside the body".into());
        }
        for (x, y) in [(0, 0), (n - 1, 0), (0, n - 1), (n - 1, n - 1)] {
            if body.get(x, y) {
                return bad("body fills the field of view".into());
            }
        }
        for nod in &self.nodules {
            if !(nod.radius > 0.0) {
                return bad(format!("nodule radius {}", nod.radius));
            }
            match nod.kind {
                NoduleKind::Isolated => {
                    if self.lung_at(nod.cx, nod.cy).is_none() {
                        return bad("isolated nodule outside the lungs".into());
                    }
                }
                NoduleKind::JuxtaPleural => {
                    let l = &self.lungs[self.host_lung(nod.cx, nod.cy)];
                    let (u, v) = l.local(nod.cx, nod.cy);
                    let r = ((u / l.a).powi(2) + (v / l.b).powi(2)).sqrt();
                    if (r - 1.0).abs() * l.a.min(l.b) > 1.0 {
                        return bad("juxta-pleural nodule off the lung wall".into());
                    }
                }
                NoduleKind::JuxtaVascular => {
                    if !self
                        .vessels
                        .iter()
                        .any(|v| v.distance(nod.cx, nod.cy) <= 1.0)
                    {
                        return bad("juxta-vascular nodule off every vessel".into());
                    }
                }
            }
        }
        Ok(())
    }
}

/// Suite composition class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    JuxtaPleural,
    WallVessel,
    Isolated,
    Clean,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::JuxtaPleural => "juxta_pleural",
            Category::WallVessel => "wall_vessel",
            Category::Isolated => "isolated",
            Category::Clean => "clean",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSample {
    pub id: usize,
    pub category: Category,
    pub spec: PhantomSpec,
    pub image: GrayImage,
    /// Lung parenchyma including nodules and vessels inside the lungs.
    pub truth: BinaryMask,
    /// Lung pixels covered by each nodule, in `spec.nodules` order.
    pub nodule_footprints: Vec<BinaryMask>,
}

/// Renders a slice. Juxta-pleural nodules occupy the part of their disk
/// inside the host lung; outside it they would be indistinguishable from the
/// chest wall.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(GrayImage, BinaryMask, Vec<BinaryMask>)> {
    spec.validate()?;
    let n = spec.size;
    let lungs = spec.lungs[0]
        .rasterize(n)
        .union(&spec.lungs[1].rasterize(n))?;

    let footprints: Vec<BinaryMask> = spec
        .nodules
        .iter()
        .map(|nod| {
            let host = match nod.kind {
                NoduleKind::JuxtaPleural => Some(spec.host_lung(nod.cx, nod.cy)),
                _ => None,
            };
            BinaryMask::from_fn(n, n, |x, y| {
                let (fx, fy) = (x as f64, y as f64);
                let in_disk = (fx - nod.cx).hypot(fy - nod.cy) <= nod.radius;
                in_disk
                    && match host {
                        Some(h) => spec.lungs[h].contains(fx, fy),
                        None => lungs.get(x, y),
                    }
            })
        })
        .collect();

    let mut data = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let (fx, fy) = (x as f64, y as f64);
            let mut v = if lungs.get(x, y) {
                spec.parenchyma_intensity
            } else if spec.body.contains(fx, fy) {
                spec.body_intensity
            } else {
                spec.background_intensity
            };
            if lungs.get(x, y) {
                for vessel in &spec.vessels {
                    if vessel.contains(fx, fy) {
                        v = vessel.intensity;
                    }
                }
                for (nod, fp) in spec.nodules.iter().zip(&footprints) {
                    if fp.get(x, y) {
                        v = nod.intensity;
                    }
                }
            }
            data.push(v);
        }
    }

    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let noise = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for v in &mut data {
            *v += noise.sample(&mut rng);
        }
    }
    let lt = DEFAULT_MAX_LEVEL as f64;
    for v in &mut data {
        // Adding zero turns a rounded -0.0 into 0.0.
        *v = v.round().clamp(0.0, lt) + 0.0;
    }

    let image = GrayImage::new(n, n, data)?;
    let mut truth = lungs;
    for fp in &footprints {
        truth = truth.union(fp)?;
    }
    Ok((image, truth, footprints))
}

/// Builds a sample of the given category from a per-sample generator.
fn random_spec(category: Category, size: usize, rng: &mut ChaCha8Rng) -> PhantomSpec {
    let k = size as f64 / 512.0;
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    let body = Ellipse::new(
        256.0 * k,
        256.0 * k,
        u(214.0, 226.0) * k,
        u(164.0, 176.0) * k,
        0.0,
    );
    let lungs = [
        Ellipse::new(
            u(150.0, 162.0) * k,
            u(250.0, 262.0) * k,
            u(64.0, 76.0) * k,
            u(107.0, 123.0) * k,
            u(0.0, 0.08),
        ),
        Ellipse::new(
            u(350.0, 362.0) * k,
            u(250.0, 262.0) * k,
            u(64.0, 76.0) * k,
            u(107.0, 123.0) * k,
            -u(0.0, 0.08),
        ),
    ];
    let sigma = [4.0, 8.0, 12.0][rng.random_range(0..3)];
    let mut spec = PhantomSpec {
        size,
        body,
        lungs,
        noise_sigma: sigma,
        seed: rng.random(),
        ..PhantomSpec::default()
    };

    // Interior vessels in every slice; fill_holes removes them from masks.
    for lung in lungs {
        for _ in 0..rng.random_range(2..=4) {
            let inner = lung.shrunk(18.0 * k);
            let t = rng.random::<f64>() * std::f64::consts::TAU;
            let s = rng.random::<f64>() * 0.8;
            let (px, py) = inner.point(t);
            let start = (lung.cx + s * (px - lung.cx), lung.cy + s * (py - lung.cy));
            let dir = rng.random::<f64>() * std::f64::consts::TAU;
            let len = rng.random_range(6.0..14.0) * k;
            let end = (start.0 + len * dir.cos(), start.1 + len * dir.sin());
            if inner.contains(end.0, end.1) {
                spec.vessels.push(Vessel {
                    points: vec![start, end],
                    thickness: rng.random_range(2.0..3.5),
                    intensity: 160.0,
                });
            }
        }
    }

    let mut placed: Vec<(f64, f64, f64)> = Vec::new();
    let clear = |placed: &[(f64, f64, f64)], x: f64, y: f64, r: f64| {
        placed
            .iter()
            .all(|&(px, py, pr)| (x - px).hypot(y - py) > r + pr + 12.0 * k)
    };
    match category {
        Category::JuxtaPleural => {
            let count = rng.random_range(1..=2);
            let mut tries = 0;
            while placed.len() < count && tries < 100 {
                tries += 1;
                let lung = lungs[rng.random_range(0..2)];
                let t = rng.random::<f64>() * std::f64::consts::TAU;
                let (x, y) = lung.point(t);
                let r = rng.random_range(4..=7) as f64;
                if clear(&placed, x, y, r) {
                    placed.push((x, y, r));
                    spec.nodules.push(Nodule {
                        cx: x,
                        cy: y,
                        radius: r,
                        intensity: 165.0,
                        kind: NoduleKind::JuxtaPleural,
                    });
                }
            }
        }
        Category::WallVessel => {
            for _ in 0..rng.random_range(1..=3) {
                let lung = lungs[rng.random_range(0..2)];
                let t = rng.random::<f64>() * std::f64::consts::TAU;
                let (nx, ny) = lung.normal(t);
                let (bx, by) = lung.point(t);
                let len = rng.random_range(8.0..14.0) * k;
                // Starts just outside the wall so it stays attached after
                // rasterisation.
                spec.vessels.push(Vessel {
                    points: vec![(bx + nx, by + ny), (bx - len * nx, by - len * ny)],
                    thickness: rng.random_range(2.0..3.0),
                    intensity: 160.0,
                });
            }
        }
        Category::Isolated => {
            let count = rng.random_range(1..=2);
            let mut tries = 0;
            while placed.len() < count && tries < 100 {
                tries += 1;
                let lung = lungs[rng.random_range(0..2)];
                let r = rng.random_range(2..=7) as f64;
                let inner = lung.shrunk(r + 8.0 * k);
                let t = rng.random::<f64>() * std::f64::consts::TAU;
                let s = rng.random::<f64>().sqrt() * 0.9;
                let (px, py) = inner.point(t);
                let (x, y) = (lung.cx + s * (px - lung.cx), lung.cy + s * (py - lung.cy));
                if clear(&placed, x, y, r) {
                    placed.push((x, y, r));
                    spec.nodules.push(Nodule {
                        cx: x,
                        cy: y,
                        radius: r,
                        intensity: 165.0,
                        kind: NoduleKind::Isolated,
                    });
                }
            }
        }
        Category::Clean => {}
    }
    spec
}

/// Category counts of an `n`-sample suite, in [`Category`] order.
pub fn suite_composition(n: usize) -> [usize; 4] {
    let juxta = (0.4 * n as f64).round() as usize;
    let vessel = (0.2 * n as f64).round() as usize;
    let rest = n - juxta - vessel;
    [juxta, vessel, rest.div_ceil(2), rest / 2]
}

/// `n` samples: 40% juxta-pleural nodules, 20% wall-attached vessels, the
/// rest split between isolated nodules and clean slices.
pub fn default_suite(n: usize, seed: u64) -> Result<Vec<PhantomSample>> {
    default_suite_sized(n, seed, 512)
}

pub fn default_suite_sized(n: usize, seed: u64, size: usize) -> Result<Vec<PhantomSample>> {
    if n < 5 {
        return Err(Error::InvalidParameter(format!(
            "suite needs n >= 5, got {n}"
        )));
    }
    if size < 64 {
        return Err(Error::InvalidParameter(format!(
            "phantom size {size} below 64"
        )));
    }
    let counts = suite_composition(n);
    let order = [
        Category::JuxtaPleural,
        Category::WallVessel,
        Category::Isolated,
        Category::Clean,
    ];
    let mut categories: Vec<Category> = order
        .iter()
        .zip(counts)
        .flat_map(|(&c, k)| std::iter::repeat_n(c, k))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    categories.shuffle(&mut rng);
    let seeds: Vec<u64> = (0..n).map(|_| rng.random()).collect();

    categories
        .into_iter()
        .zip(seeds)
        .enumerate()
        .map(|(id, (category, s))| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let spec = random_spec(category, size, &mut rng);
            let (image, truth, nodule_footprints) = generate_phantom(&spec)?;
            Ok(PhantomSample {
                id,
                category,
                spec,
                image,
                truth,
                nodule_footprints,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::{connected_components, histogram, Connectivity};

    #[test]
    fn noiseless_plain_slice_has_three_levels() {
        let spec = PhantomSpec::default();
        let (img, truth, fps) = generate_phantom(&spec).unwrap();
        let h = histogram(&img).unwrap();
        assert_eq!(h.iter().filter(|&&c| c > 0).count(), 3);
        let want = spec.lungs[0]
            .rasterize(512)
            .union(&spec.lungs[1].rasterize(512))
            .unwrap();
        assert_eq!(truth, want);
        assert!(fps.is_empty());
        assert_eq!(
            connected_components(&truth, Connectivity::Eight).component_count(),
            2
        );
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = PhantomSpec {
            noise_sigma: 8.0,
            seed: 11,
            ..PhantomSpec::default()
        };
        assert_eq!(
            generate_phantom(&spec).unwrap(),
            generate_phantom(&spec).unwrap()
        );
    }

    #[test]
    fn juxta_pleural_footprint_is_the_bite_into_the_lung() {
        let mut spec = PhantomSpec::default();
        let lung = spec.lungs[0];
        let (x, y) = lung.point(std::f64::consts::PI);
        spec.nodules.push(Nodule {
            cx: x,
            cy: y,
            radius: 8.0,
            intensity: 165.0,
            kind: NoduleKind::JuxtaPleural,
        });
        let (img, truth, fps) = generate_phantom(&spec).unwrap();
        let fp = &fps[0];
        let ellipses = lung
            .rasterize(512)
            .union(&spec.lungs[1].rasterize(512))
            .unwrap();
        assert!(truth.contains(fp));
        assert_eq!(truth, ellipses);
        // Roughly half of the disk lies inside the wall.
        let disk = std::f64::consts::PI * 64.0;
        assert!((fp.count() as f64 - disk / 2.0).abs() < 0.15 * disk);
        for (i, &on) in fp.data().iter().enumerate() {
            if on {
                assert_eq!(img.data()[i], 165.0);
            }
        }
    }

    #[test]
    fn overlapping_lungs_are_rejected() {
        let mut spec = PhantomSpec::default();
        spec.lungs[1] = Ellipse::new(200.0, 256.0, 70.0, 115.0, 0.0);
        assert!(matches!(
            generate_phantom(&spec),
            Err(Error::InvalidAnatomy(_))
        ));
        let spec = PhantomSpec {
            parenchyma_intensity: 200.0,
            ..PhantomSpec::default()
        };
        assert!(generate_phantom(&spec).is_err());
    }

    #[test]
    fn suite_composition_rule() {
        assert_eq!(suite_composition(50), [20, 10, 10, 10]);
        assert_eq!(suite_composition(5), [2, 1, 1, 1]);
        assert!(default_suite(4, 0).is_err());
    }

    #[test]
    fn small_suite_covers_every_category() {
        let suite = default_suite_sized(5, 3, 128).unwrap();
        for c in [
            Category::JuxtaPleural,
            Category::WallVessel,
            Category::Isolated,
            Category::Clean,
        ] {
            assert!(suite.iter().any(|s| s.category == c));
        }
        let again = default_suite_sized(5, 3, 128).unwrap();
        assert_eq!(suite, again);
        for s in &suite {
            assert!([4.0, 8.0, 12.0].contains(&s.spec.noise_sigma));
            for fp in &s.nodule_footprints {
                assert!(s.truth.contains(fp));
                assert!(fp.count() > 0);
            }
            assert_eq!(
                connected_components(&s.truth, Connectivity::Eight).component_count(),
                2
            );
        }
    }

    #[test]
    fn noiseless_slice_thresholds_to_the_ellipses() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = PhantomSpec {
            noise_sigma: 0.0,
            ..random_spec(Category::Isolated, 512, &mut rng)
        };
        let (img, _, _) = generate_phantom(&spec).unwrap();
        let ellipses = spec.lungs[0]
            .rasterize(512)
            .union(&spec.lungs[1].rasterize(512))
            .unwrap();
        let r = crate::threshold::threshold_segment(&img, &crate::morph::BorderCorrection::None)
            .unwrap();
        let c = crate::metrics::confusion_counts(&r.mask, &ellipses).unwrap();
        assert!(crate::metrics::dsc(&c) >= 0.98);
    }
}
