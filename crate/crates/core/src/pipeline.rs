//! Method-agnostic pipeline plumbing: stage snapshots, the shared tail
//! (border correction and masking), and dispatch by method name.

use serde::{Deserialize, Serialize};

use crate::acm::{acm_candidate, AcmParams};
use crate::error::{Error, Result};
use crate::fcm::{fcm_candidate, FcmParams};
use crate::imgcore::{apply_mask, BinaryMask, GrayImage, LungSelection};
use crate::morph::BorderCorrection;
use crate::threshold::{threshold_candidate, ThresholdParams};

/// Segmentation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Threshold,
    Fcm,
    Acm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Threshold, Method::Fcm, Method::Acm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Threshold => "threshold",
            Method::Fcm => "fcm",
            Method::Acm => "acm",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "threshold" => Ok(Method::Threshold),
            "fcm" => Ok(Method::Fcm),
            "acm" => Ok(Method::Acm),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

/// Raster captured at a pipeline stage.
#[derive(Debug, Clone, PartialEq)]
pub enum StageRaster {
    Gray(GrayImage),
    Mask(BinaryMask),
}

/// Named intermediate result, in pipeline order.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub name: String,
    pub raster: StageRaster,
}

impl Stage {
    pub fn gray(name: impl Into<String>, img: GrayImage) -> Self {
        Stage {
            name: name.into(),
            raster: StageRaster::Gray(img),
        }
    }

    pub fn mask(name: impl Into<String>, mask: BinaryMask) -> Self {
        Stage {
            name: name.into(),
            raster: StageRaster::Mask(mask),
        }
    }
}

/// Lung mask before border correction, with the stages that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub mask: BinaryMask,
    pub stages: Vec<Stage>,
}

/// Final mask and masked image of a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct Finished {
    pub mask: BinaryMask,
    pub parenchyma: GrayImage,
    pub stages: Vec<Stage>,
}

/// Applies the border correction and masks the input, appending stages
/// (v) and (vi).
pub fn finish(
    img: &GrayImage,
    candidate: &Candidate,
    correction: &BorderCorrection,
) -> Result<Finished> {
    let mask = correction.apply(img, &candidate.mask)?;
    let parenchyma = apply_mask(img, &mask)?;
    let mut stages = candidate.stages.clone();
    stages.push(Stage::mask(
        format!("5_lung_mask_after_{}", correction.name()),
        mask.clone(),
    ));
    stages.push(Stage::gray(
        "6_segmented_lung_parenchyma",
        parenchyma.clone(),
    ));
    Ok(Finished {
        mask,
        parenchyma,
        stages,
    })
}

/// Every tunable of the three pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineConfig {
    pub threshold: ThresholdParams,
    pub fcm: FcmParams,
    pub acm: AcmParams,
    pub selection: LungSelection,
    /// Seed for methods with random initialisation.
    pub seed: u64,
}

/// Method-specific facts worth reporting next to the mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunInfo {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

/// Candidate mask plus report details for any method.
pub fn candidate(
    img: &GrayImage,
    method: Method,
    config: &PipelineConfig,
) -> Result<(Candidate, RunInfo)> {
    match method {
        Method::Threshold => {
            let (t, cand) = threshold_candidate(img, &config.threshold, &config.selection)?;
            Ok((
                cand,
                RunInfo {
                    threshold: Some(t),
                    ..RunInfo::default()
                },
            ))
        }
        Method::Fcm => {
            let (state, cand) = fcm_candidate(img, &config.fcm, &config.selection, config.seed)?;
            Ok((
                cand,
                RunInfo {
                    centers: Some(state.centers.clone()),
                    iterations: Some(state.iterations),
                    ..RunInfo::default()
                },
            ))
        }
        Method::Acm => {
            let (iterations, cand) = acm_candidate(img, &config.acm, &config.selection)?;
            Ok((
                cand,
                RunInfo {
                    iterations: Some(iterations),
                    ..RunInfo::default()
                },
            ))
        }
    }
}

/// Complete run of one method with one border correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub method: Method,
    pub correction: BorderCorrection,
    pub mask: BinaryMask,
    pub parenchyma: GrayImage,
    pub stages: Vec<Stage>,
    pub info: RunInfo,
}

pub fn segment(
    img: &GrayImage,
    method: Method,
    correction: &BorderCorrection,
    config: &PipelineConfig,
) -> Result<Segmentation> {
    let (cand, info) = candidate(img, method, config)?;
    let done = finish(img, &cand, correction)?;
    Ok(Segmentation {
        method,
        correction: *correction,
        mask: done.mask,
        parenchyma: done.parenchyma,
        stages: done.stages,
        info,
    })
}
