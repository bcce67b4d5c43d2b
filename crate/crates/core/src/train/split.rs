use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::substream;

/// Splits sensor nodes into training and validation sets, with
/// `round(fraction · n)` validation sensors. Both sets come back sorted.
pub fn split_sensors(
    sensors: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let unique: BTreeSet<usize> = sensors.iter().copied().collect();
    if unique.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 sensor nodes to split, got {}",
            unique.len()
        )));
    }
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!(
            "validation fraction must lie in [0, 1), got {fraction}"
        )));
    }
    let n = unique.len();
    let n_val = ((fraction * n as f64).round() as usize).min(n - 1);
    if n_val == 0 {
        log::warn!("validation split is empty");
    }
    let mut order: Vec<usize> = unique.into_iter().collect();
    order.shuffle(&mut substream(seed, "split", &[]));
    let mut val = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}
