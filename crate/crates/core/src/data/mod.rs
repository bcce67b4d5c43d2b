//! Speed/volume profiles, training samples and normalisation.

mod dataset;
mod norm;
mod profiles;

pub use dataset::{assemble_dataset, build_input, build_inputs, Sample};
pub use norm::NormStats;
pub use profiles::{Profiles, SPEED_HEADER_PREFIX, VOLUME_HEADER_PREFIX};
