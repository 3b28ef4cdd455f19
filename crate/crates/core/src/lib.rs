//! Biomarker exploration toolkit: cohort cleaning, mRMR ranking, three
//! classifier families, Shapley attribution pooled over bootstrap splits,
//! and thresholded correlation graphs compared between case and control
//! groups.

pub mod attribution;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod ingest;
pub mod linalg;
pub mod pipeline;
pub mod models;
pub mod select;
pub mod stats;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
