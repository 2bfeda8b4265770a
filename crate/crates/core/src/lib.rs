//! Ordinal multi-task engine for scoring and classifying cloze-task
//! fillers.
//!
//! The pipeline: a (context, filler) pair is rendered to a labelled text
//! block, featurized into a pooled vector (whole context + filler halves),
//! projected through a GELU layer, and scored by two rank-consistent coral
//! heads — a 2-unit head decoding to the three plausibility classes and a
//! 4-unit head decoding to a continuous score in (1, 5). Training is joint
//! over both heads with a weighted per-sample loss, AdamW and a cosine
//! learning-rate schedule.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod embeddings;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod ordinal;
pub mod threads;

pub use error::{Error, Result};
