//! Time-series out-of-distribution detection: datasets, augmentations,
//! backbones, training, post-hoc scorers and evaluation metrics.

pub mod augment;
pub mod bench;
pub mod data;
pub mod features;
pub mod metrics;
pub mod model;
pub mod scorers;
pub mod seed;
pub mod train;
