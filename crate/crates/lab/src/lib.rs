//! Experiment harness around `w2s-core`: dataset file formats, checkpoints,
//! few-shot evaluation, and the config-driven pipelines behind the `w2s` binary.

pub mod checkpoint;
pub mod cifar;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod fewshot;
pub mod idx;
pub mod report;

pub use error::{LabError, Result};
