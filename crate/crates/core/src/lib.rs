//! Crack detection in registered multimodal images (infrared, visible, X-ray).
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! - [`raster`]: the image carrier, PNM / FR32 I/O and the convolution engine.
//! - [`preprocess`]: crude crack maps, translation alignment, X-ray flattening,
//!   CLAHE and morphological component analysis.
//! - [`features`]: the 208-plane per-pixel filter bank and its manifest.
//! - [`quantize`]: equal-frequency binning into categorical predictors and
//!   training-set assembly from partial label masks.
//! - [`bctf`]: the Bayesian conditional tensor factorization classifier with
//!   MCMC variable selection, prediction and an exact enumeration oracle.
//!
//! [`synth`] renders synthetic multimodal crack scenes with label masks.
//!
//! Image-side code is generic over the sample type through [`Scalar`]
//! (`f32` or `f64`); the aliases below name the concrete instantiations. The
//! classifier works in `f64` throughout.

// `!(x > 0.0)` style guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bctf;
pub mod error;
pub mod features;
pub mod preprocess;
pub mod quantize;
pub mod raster;
pub mod synth;

mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Raster64 = raster::Raster<f64>;
pub type Raster32 = raster::Raster<f32>;
pub type Kernel64 = raster::Kernel<f64>;
pub type Kernel32 = raster::Kernel<f32>;
pub type FeatureStack64 = features::FeatureStack<f64>;
pub type FeatureStack32 = features::FeatureStack<f32>;
pub type ModalitySet64 = features::ModalitySet<f64>;
pub type ModalitySet32 = features::ModalitySet<f32>;
