//! Lung parenchyma segmentation of chest CT slices.
//!
//! Three candidate generators (Otsu thresholding, fuzzy c-means, Chan-Vese
//! active contour) share a common tail: border correction, of which the
//! adaptive morphological filter in [`morph`] re-includes juxta-pleural
//! nodules, then masking. [`metrics`] scores masks against a reference and
//! [`phantom`] produces synthetic slices with exact ground truth.

// Parameter checks use `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acm;
pub mod bench;
pub mod cli;
pub mod error;
pub mod fcm;
pub mod imgcore;
pub mod io;
pub mod metrics;
pub mod morph;
pub mod phantom;
pub mod pipeline;
pub mod threshold;

pub use error::{Error, Result};
