//! Training loop, sensor hold-out, metrics, ablations and network-wide
//! inference.

mod adam;
mod baseline;
mod config;
mod experiment;
mod metrics;
mod split;
mod trainer;

pub use adam::Adam;
pub use baseline::ClassBaseline;
pub use config::{TrainConfig, TRAIN_KEYS};
pub use experiment::{
    hour_slice_csv, infer_network, load_checkpoint, prepare, run_ablations, run_seed,
    save_checkpoint, AblationRow, SeedRun, ABLATION_MODELS,
};
pub use metrics::{geh, huber_profile_loss, metrics, MetricsReport};
pub use split::split_sensors;
pub use trainer::{
    batch_gradient, evaluate, predict, train, train_observed, EpochRecord, LabeledSet, TrainOutcome,
};
