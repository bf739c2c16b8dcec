//! Workflow engine for few-shot anomaly detection on attributed
//! multi-relation graphs.
//!
//! A run builds graph statistics, plans candidate workflows (topology,
//! evidence functions, detector), trains and calibrates each on the labeled
//! splits, selects one by a lexicographic validation criterion and applies a
//! guarded refit before predicting the test nodes.

pub mod detector;
pub mod encoding;
pub mod error;
pub mod evidence;
pub mod graph;
pub mod harness;
pub mod matrix;
pub mod planner;
pub mod search;
pub mod seed;
pub mod subspace;
pub mod workflow;

pub use error::{Error, Result};
