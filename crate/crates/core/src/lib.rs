//! Spoken language and speaker diarization toolkit.
//!
//! The pipeline runs from frame features (or audio) through window-level
//! embeddings and a statistical back-end to diarization by fixed
//! segmentation or by change-point detection, and scores the result.
//! Data-parallel stages use rayon when the `parallel` feature is on; every
//! parallel path has a sequential twin that produces identical output.

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backend;
pub mod corpus;
pub mod diarize;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod linalg;
pub mod parallel;

pub use error::{Error, Result};
pub use nalgebra;
pub use parallel::Parallelism;
