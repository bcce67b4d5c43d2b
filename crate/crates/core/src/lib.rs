//! Network-wide traffic volume estimation with a two-branch spatio-temporal
//! graph network over the oriented dual road graph.

pub mod config;
pub mod data;
pub mod diff;
pub mod error;
pub mod graph;
pub mod model;
pub mod nn;
pub mod par;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, ErrorKind, Result};
