//! Synthetic road networks with known speed/volume ground truth.
//!
//! Volumes are built as capacity × class demand × an upstream factor that
//! depends on the segments feeding each directed segment, so the direction
//! of every dual edge carries information. Speeds follow a congestion curve
//! that stays flat below a utilisation threshold.

mod config;
mod network;
mod traffic;

pub use config::{SynthConfig, TrafficMode, SYNTH_KEYS};
pub use network::{gen_network, select_sensors};
pub use traffic::{demand_shape, gen_traffic, upstream_factor, SpeedCurve, SynthTraffic};
