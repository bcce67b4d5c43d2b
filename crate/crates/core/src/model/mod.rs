//! Two-branch spatio-temporal volume estimator and its ablation variants.

mod config;
mod encoding;
mod hda;

pub use config::{Ablations, ModelConfig, Variant, MODEL_KEYS};
pub use encoding::{SpeedEncoding, HOUR_DIMS, SPEED_DIMS, WEEKDAY_DIMS};
pub use hda::{GraphInput, HdaModel, Trace};
