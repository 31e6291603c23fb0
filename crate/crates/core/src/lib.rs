//! Single-lead ECG false-alarm classification.
//!
//! The pipeline segments lead II into beats, measures 84 time-domain
//! features per beat, clusters each patient's beats with k-means and
//! condenses the clusters into a 31-value high-level feature vector that a
//! boosted-tree ensemble classifies as a true or false alarm. A wavelet
//! feature bank and a last-seven-beats vector serve as baselines.

pub mod clustering;
pub mod dwt_features;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod feature_table;
pub mod feature_synthesis;
pub mod matrix;
pub mod pipeline;
pub mod record_io;
pub mod segment_features;
pub mod segmentation;
pub mod synthetic;

pub use error::{Error, Result};
pub use record_io::{AlarmType, EcgRecord, Label};
