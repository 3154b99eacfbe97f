//! Damaging-collision prediction for object placing: scene synthesis and
//! labeling, depth preprocessing, the PonNet classifier and its ablations, a
//! plane-detection baseline, and the training/evaluation harness.

pub mod depthproc;
pub mod error;
pub mod harness;
pub mod model;
pub mod placesim;
pub mod planedet;

pub use error::{Error, Result};
