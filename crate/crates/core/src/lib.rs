//! Stay-positive detector laboratory.
//!
//! A small feed-forward detector is trained to separate synthetic "real"
//! images from images carrying a planted generator artifact. Its linear head
//! can then be re-fit with every weight projected onto the non-negative
//! orthant, so the logit only ever grows with the presence of a feature.
//! The crate bundles the synthetic benchmark, the detector, both training
//! stages and their ablations, the logit decomposition into real and fake
//! scores, and the evaluation protocols used to compare them.

pub mod error;
pub mod evalkit;
pub mod experiment;
pub mod nnet;
pub mod scores;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
pub use nnet::{MlpParams, Scalar};
pub use synthgen::{DatasetSpec, ImageSample, Label};
