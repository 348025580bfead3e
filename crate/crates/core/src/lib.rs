//! Denoising and demosaicking of Bayer CFA image sequences.
//!
//! The processing chain works on raw mosaicked frames:
//!
//! 1. the CFA is repacked into half-resolution 4-channel images (R, G1, G2, B),
//! 2. an intensity-dependent noise curve is estimated and fitted with a
//!    continuous two-segment linear model,
//! 3. the noise is stabilized by the transform derived from that curve,
//! 4. the channels are decorrelated (YUVW) and denoised with a motion
//!    compensated spatio-temporal patch PCA,
//! 5. the denoised CFA is demosaicked by a directional single-frame
//!    initialization refined with a spatio-temporal non-local average that
//!    only averages original CFA samples.
//!
//! [`pipeline`] wires the stages together and provides the simulation and
//! RMSE evaluation harness.

pub mod cfa;
pub mod color;
pub mod demosaic;
pub mod denoise;
pub mod error;
pub mod flow;
pub mod image;
pub mod netpbm;
pub mod noise;
pub mod pipeline;
pub mod synth;

pub use cfa::{BayerPattern, CfaColor, CfaImage, DecimationMask, QuadImage};
pub use error::{Error, Result};
pub use image::{Accumulator, Image, Patch, Sequence};
