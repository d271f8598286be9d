//! Iris recognition pipeline with a post-mortem evaluation harness:
//! manifest ingest, mask-driven segmentation, Hough circle fitting,
//! rubber-sheet normalization, Gabor encoding, rotation-compensated
//! Hamming matching, and ROC/CMC/FNMR evaluation over capture-time subsets.

pub mod boundary;
pub mod config;
pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod manifest;
pub mod matching;
pub mod morphology;
pub mod normalization;
pub mod pipeline;
pub mod segmentation;
pub mod synth;

pub use error::{Error, Result};
