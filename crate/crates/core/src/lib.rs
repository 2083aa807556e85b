//! Saliency maps and distance-correlation diagnostics for comparing a
//! knowledge-distilled student network with a base network of the same
//! architecture trained without a teacher.
//!
//! * [`distcorr`]: distance covariance and correlation, U-centering and
//!   partial distance correlation.
//! * [`cam`]: unique-feature class activation maps (UniCAM) and the Grad-CAM
//!   baseline.
//! * [`metrics`]: Feature Similarity Score and Relevance Score.
//! * [`npy`], [`manifest`]: the on-disk tensor and batch formats.
//! * [`testkit`]: a seeded toy network and synthetic fixtures.

pub mod cam;
pub mod distcorr;
pub mod error;
pub mod json;
pub mod manifest;
pub mod metrics;
pub mod npy;
pub mod tensor;
pub mod testkit;

pub use error::{Error, Result};
pub use tensor::Tensor;
