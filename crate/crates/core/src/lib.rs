//! Query-free adversarial examples for object detectors.
//!
//! The attack locates a target object from a segmentation mask, overwrites a
//! fraction of its pixels with nearby background, reconstructs a
//! class-specific sample by inverting a small classifier, and adds stripes of
//! that sample to the object under an L2 budget. Detector output dumps taken
//! before and after the attack are compared with [`evalharness`].

pub mod cli;
pub mod error;
pub mod evalharness;
pub mod imagecore;
pub mod inversion;
pub mod perturb;
pub mod replace;
pub mod segmask;

pub use error::{Error, Result};
