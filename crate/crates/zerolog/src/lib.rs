//! Cross-system log anomaly detection.
//!
//! The pipeline: raw log lines are mined into templates with a fixed-depth
//! Drain tree ([`parser`]), every template from every system is embedded into
//! one shared semantic space ([`embed`]), and a GRU-plus-attention network
//! ([`net`]) is trained on a labeled source system together with raw,
//! unlabeled logs from a target system. Training ([`train`]) runs adversarial
//! domain adaptation inside a meta-learning loop so the detector carries over
//! to the target system without ever seeing a target label. [`eval`] holds
//! detection, metrics and the ablation/sweep/timing harnesses; [`data`] holds
//! corpus loaders and a deterministic synthetic generator that exercises the
//! whole path at desk scale.

pub mod cli;
pub mod config;
pub mod data;
pub mod embed;
pub mod error;
pub mod eval;
pub mod manifest;
pub mod net;
pub mod parser;
pub mod train;

pub use error::{Error, Result};
