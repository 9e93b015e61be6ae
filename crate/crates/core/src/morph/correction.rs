use serde::{Deserialize, Serialize};

use super::amf::{amf_border_correction_with, AmfParams};
use super::{close, dilate, erode, StructuringElement};
use crate::error::{Error, Result};
use crate::imgcore::{BinaryMask, GrayImage};

/// Lung-border correction applied to a candidate mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum BorderCorrection {
    None,
    Amf(AmfParams),
    RollingBall { radius: usize },
    Gmm(GmmParams),
}

impl BorderCorrection {
    pub const DEFAULT_ROLLING_BALL_RADIUS: usize = 10;

    pub fn amf() -> Self {
        BorderCorrection::Amf(AmfParams::default())
    }

    pub fn rolling_ball() -> Self {
        BorderCorrection::RollingBall {
            radius: Self::DEFAULT_ROLLING_BALL_RADIUS,
        }
    }

    pub fn gmm() -> Self {
        BorderCorrection::Gmm(GmmParams::default())
    }

    /// Short identifier used in reports and on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            BorderCorrection::None => "none",
            BorderCorrection::Amf(_) => "amf",
            BorderCorrection::RollingBall { .. } => "rolling_ball",
            BorderCorrection::Gmm(_) => "gmm",
        }
    }

    /// Default-parameter correction by name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "none" => Ok(BorderCorrection::None),
            "amf" => Ok(Self::amf()),
            "rolling_ball" | "rolling-ball" => Ok(Self::rolling_ball()),
            "gmm" => Ok(Self::gmm()),
            other => Err(Error::InvalidParameter(format!(
                "unknown correction '{other}'"
            ))),
        }
    }

    pub fn apply(&self, img: &GrayImage, mask: &BinaryMask) -> Result<BinaryMask> {
        match self {
            BorderCorrection::None => Ok(mask.clone()),
            BorderCorrection::Amf(p) => amf_border_correction_with(mask, p),
            BorderCorrection::RollingBall { radius } => rolling_ball_correction(mask, *radius),
            BorderCorrection::Gmm(p) => gmm_correction_with(img, mask, p),
        }
    }
}

/// Closing with a fixed disk: the ball rolled along the outside of the mask.
pub fn rolling_ball_correction(mask: &BinaryMask, radius: usize) -> Result<BinaryMask> {
    if radius < 1 {
        return Err(Error::InvalidParameter(
            "rolling ball radius must be >= 1".into(),
        ));
    }
    Ok(close(mask, &StructuringElement::disk(radius)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmParams {
    /// Half-width of the band around the mask boundary, pixels.
    pub band: usize,
    pub max_iter: usize,
    /// Stop once the mean log-likelihood improves by less than this.
    pub tol: f64,
}

impl Default for GmmParams {
    fn default() -> Self {
        Self {
            band: 5,
            max_iter: 100,
            tol: 1e-5,
        }
    }
}

/// Two-component 1-D Gaussian mixture, components sorted by mean.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub variances: [f64; 2],
    /// Mean log-likelihood after each EM iteration.
    pub log_likelihood: Vec<f64>,
}

impl GmmFit {
    /// Posterior probability of the lower-mean component.
    pub fn posterior_low(&self, x: f64) -> f64 {
        let p0 = self.weights[0] * normal_pdf(x, self.means[0], self.variances[0]);
        let p1 = self.weights[1] * normal_pdf(x, self.means[1], self.variances[1]);
        if p0 + p1 == 0.0 {
            // Far in a tail: the nearer mean wins.
            return if (x - self.means[0]).abs() <= (x - self.means[1]).abs() {
                1.0
            } else {
                0.0
            };
        }
        p0 / (p0 + p1)
    }
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Fits a two-component mixture by EM, seeded at the 25th and 75th
/// percentiles. Returns `None` when the data cannot support two components
/// (fewer than two samples, or no spread).
pub fn fit_gmm_1d(values: &[f64], max_iter: usize, tol: f64) -> Option<GmmFit> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut means = [percentile(&sorted, 0.25), percentile(&sorted, 0.75)];
    if means[0] == means[1] {
        means = [sorted[0], sorted[sorted.len() - 1]];
    }
    let mut variances = [var, var];
    let mut weights = [0.5, 0.5];
    // Keeps a component from collapsing onto a single repeated value.
    let floor = var * 1e-6;

    let mut history = Vec::new();
    let mut resp = vec![0.0; values.len()];
    for _ in 0..max_iter {
        // E step, accumulating the log-likelihood of the current parameters.
        let mut ll = 0.0;
        for (r, &x) in resp.iter_mut().zip(values) {
            let p0 = weights[0] * normal_pdf(x, means[0], variances[0]);
            let p1 = weights[1] * normal_pdf(x, means[1], variances[1]);
            let total = p0 + p1;
            if total > 0.0 {
                *r = p0 / total;
                ll += total.ln();
            } else {
                *r = if (x - means[0]).abs() <= (x - means[1]).abs() {
                    1.0
                } else {
                    0.0
                };
                ll += f64::MIN_POSITIVE.ln();
            }
        }
        let ll = ll / n;
        // M step.
        let n0: f64 = resp.iter().sum();
        let n1 = n - n0;
        if n0 <= 0.0 || n1 <= 0.0 {
            history.push(ll);
            break;
        }
        let m0 = resp.iter().zip(values).map(|(r, x)| r * x).sum::<f64>() / n0;
        let m1 = resp
            .iter()
            .zip(values)
            .map(|(r, x)| (1.0 - r) * x)
            .sum::<f64>()
            / n1;
        let v0 = resp
            .iter()
            .zip(values)
            .map(|(r, x)| r * (x - m0).powi(2))
            .sum::<f64>()
            / n0;
        let v1 = resp
            .iter()
            .zip(values)
            .map(|(r, x)| (1.0 - r) * (x - m1).powi(2))
            .sum::<f64>()
            / n1;
        means = [m0, m1];
        variances = [v0.max(floor), v1.max(floor)];
        weights = [n0 / n, n1 / n];

        let converged = history
            .last()
            .is_some_and(|&prev: &f64| (ll - prev).abs() < tol);
        history.push(ll);
        if converged {
            break;
        }
    }

    let mut fit = GmmFit {
        weights,
        means,
        variances,
        log_likelihood: history,
    };
    if fit.means[0] > fit.means[1] {
        fit.means.swap(0, 1);
        fit.variances.swap(0, 1);
        fit.weights.swap(0, 1);
    }
    Some(fit)
}

pub fn gmm_correction(img: &GrayImage, mask: &BinaryMask) -> Result<BinaryMask> {
    gmm_correction_with(img, mask, &GmmParams::default())
}

/// Reclassifies a band around the mask boundary with a two-class intensity
/// mixture, adding band pixels that favour the darker (lung) component.
pub fn gmm_correction_with(
    img: &GrayImage,
    mask: &BinaryMask,
    params: &GmmParams,
) -> Result<BinaryMask> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(Error::DimensionMismatch(
            img.width(),
            img.height(),
            mask.width(),
            mask.height(),
        ));
    }
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    let se = StructuringElement::disk(params.band.max(1));
    let outer = dilate(mask, &se);
    let inner = erode(mask, &se);
    let band: Vec<usize> = (0..mask.len())
        .filter(|&i| outer.data()[i] && !inner.data()[i])
        .collect();
    let values: Vec<f64> = band.iter().map(|&i| img.data()[i]).collect();
    let Some(fit) = fit_gmm_1d(&values, params.max_iter, params.tol) else {
        return Ok(mask.clone());
    };
    let mut out = mask.clone();
    for (&i, &v) in band.iter().zip(&values) {
        if !mask.data()[i] && fit.posterior_low(v) > 0.5 {
            out.data_mut()[i] = true;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn rolling_ball_fills_narrow_notch_only() {
        let block = |x: usize, y: usize| (10..70).contains(&x) && (10..50).contains(&y);
        let narrow = |x: usize, y: usize| (38..42).contains(&x) && y < 18;
        let m = BinaryMask::from_fn(80, 60, |x, y| block(x, y) && !narrow(x, y));
        let out = rolling_ball_correction(&m, 5).unwrap();
        // A ball resting on the top edge still dips into the mouth row.
        let mouth = |x: usize, y: usize| y == 10 && (38..42).contains(&x);
        assert_eq!(
            out,
            BinaryMask::from_fn(80, 60, |x, y| block(x, y) && !mouth(x, y))
        );

        let wide = |x: usize, y: usize| (25..55).contains(&x) && y < 25;
        let m = BinaryMask::from_fn(80, 60, |x, y| block(x, y) && !wide(x, y));
        let out = rolling_ball_correction(&m, 5).unwrap();
        // The ball fits inside the cavity, so its floor stays open.
        assert!(!out.get(40, 20));
    }

    #[test]
    fn rolling_ball_radius_one_keeps_smooth_mask() {
        let m = BinaryMask::from_fn(50, 50, |x, y| {
            let (dx, dy) = (x as f64 - 25.0, y as f64 - 25.0);
            dx * dx + dy * dy <= 225.0
        });
        assert_eq!(rolling_ball_correction(&m, 1).unwrap(), m);
    }

    #[test]
    fn em_recovers_separated_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Normal::new(50.0, 6.0).unwrap();
        let b = Normal::new(170.0, 9.0).unwrap();
        let mut values: Vec<f64> = (0..600).map(|_| a.sample(&mut rng)).collect();
        values.extend((0..400).map(|_| b.sample(&mut rng)));
        let fit = fit_gmm_1d(&values, 100, 1e-5).unwrap();
        assert!((fit.means[0] - 50.0).abs() < 2.5);
        assert!((fit.means[1] - 170.0).abs() < 8.5);
        for pair in fit.log_likelihood.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-12);
        }
    }

    #[test]
    fn constant_band_leaves_mask_unchanged() {
        let img = GrayImage::filled(30, 30, 80.0).unwrap();
        let m = BinaryMask::from_fn(30, 30, |x, y| {
            (10..20).contains(&x) && (10..20).contains(&y)
        });
        assert_eq!(gmm_correction(&img, &m).unwrap(), m);
    }

    #[test]
    fn gmm_adds_dark_band_pixels() {
        // Dark square of side 20 whose mask misses its outer two pixels.
        let img = GrayImage::from_fn(40, 40, |x, y| {
            if (10..30).contains(&x) && (10..30).contains(&y) {
                40.0
            } else {
                180.0
            }
        })
        .unwrap();
        let m = BinaryMask::from_fn(40, 40, |x, y| {
            (12..28).contains(&x) && (12..28).contains(&y)
        });
        let out = gmm_correction(&img, &m).unwrap();
        let truth = BinaryMask::from_fn(40, 40, |x, y| {
            (10..30).contains(&x) && (10..30).contains(&y)
        });
        assert_eq!(out, truth);
    }

    #[test]
    fn correction_names_round_trip() {
        for name in ["none", "amf", "rolling_ball", "gmm"] {
            assert_eq!(BorderCorrection::from_name(name).unwrap().name(), name);
        }
        assert!(BorderCorrection::from_name("snake").is_err());
    }
}
