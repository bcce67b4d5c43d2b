use std::collections::BTreeSet;

use super::dataset::Sample;
use super::profiles::Profiles;
use crate::config::{join_list, KeyValues};
use crate::error::{Error, Result};
use crate::graph::{DualGraph, NUM_STATIC, STATIC_NAMES};
use crate::model::SpeedEncoding;

/// Scaling fitted on training samples only: z-scores for the static
/// descriptors and the speed channel, a plain scale for volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub static_mean: [f64; NUM_STATIC],
    pub static_std: [f64; NUM_STATIC],
    pub speed_mean: f64,
    pub speed_std: f64,
    pub volume_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
    let vals: Vec<f64> = values.collect();
    for &v in &vals {
        n += 1;
        sum += v;
    }
    let mean = if n > 0 { sum / n as f64 } else { 0.0 };
    for &v in &vals {
        sq += (v - mean) * (v - mean);
    }
    let std = if n > 0 { (sq / n as f64).sqrt() } else { 0.0 };
    (mean, std, n)
}

fn usable(std: f64, what: &str) -> f64 {
    if std > 1e-12 && std.is_finite() {
        std
    } else {
        log::warn!("{what} has zero variance on the training samples; using scale 1");
        1.0
    }
}

impl NormStats {
    /// Fits on the target nodes of `train`: their static descriptors, their
    /// speed profiles on the sample days and their volume profiles.
    pub fn fit(dual: &DualGraph, speeds: &Profiles, train: &[Sample]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InvalidInput(
                "cannot fit normalisation on zero samples".into(),
            ));
        }
        let targets: BTreeSet<usize> = train.iter().map(|s| s.target).collect();
        let feats: Vec<[f64; NUM_STATIC]> = targets
            .iter()
            .map(|&v| dual.node(v).attrs.to_features())
            .collect();
        let mut static_mean = [0.0; NUM_STATIC];
        let mut static_std = [1.0; NUM_STATIC];
        for j in 0..NUM_STATIC {
            let (m, s, _) = mean_std(feats.iter().map(|f| f[j]));
            static_mean[j] = m;
            static_std[j] = usable(s, STATIC_NAMES[j]);
        }
        let mut speed_values = Vec::new();
        for s in train {
            let p = speeds.get(s.target, s.day).ok_or_else(|| {
                Error::NotFound(format!("speed profile for node {} day {}", s.target, s.day))
            })?;
            speed_values.extend_from_slice(p);
        }
        let (speed_mean, speed_std, _) = mean_std(speed_values.into_iter());
        let (_, volume_std, _) = mean_std(train.iter().flat_map(|s| s.volume.iter().copied()));
        Ok(NormStats {
            static_mean,
            static_std,
            speed_mean,
            speed_std: usable(speed_std, "speed"),
            volume_std: usable(volume_std, "volume"),
        })
    }

    pub fn identity() -> Self {
        NormStats {
            static_mean: [0.0; NUM_STATIC],
            static_std: [1.0; NUM_STATIC],
            speed_mean: 0.0,
            speed_std: 1.0,
            volume_std: 1.0,
        }
    }

    pub fn normalize_statics(&self, f: &[f64; NUM_STATIC]) -> [f64; NUM_STATIC] {
        std::array::from_fn(|j| (f[j] - self.static_mean[j]) / self.static_std[j])
    }

    pub fn denormalize_statics(&self, z: &[f64; NUM_STATIC]) -> [f64; NUM_STATIC] {
        std::array::from_fn(|j| z[j] * self.static_std[j] + self.static_mean[j])
    }

    pub fn normalize_speed(&self, v: f64) -> f64 {
        (v - self.speed_mean) / self.speed_std
    }

    pub fn denormalize_speed(&self, z: f64) -> f64 {
        z * self.speed_std + self.speed_mean
    }

    pub fn speed_encoding(&self) -> SpeedEncoding {
        SpeedEncoding {
            mean: self.speed_mean,
            std: self.speed_std,
        }
    }

    pub fn scale_volume(&self, q: f64) -> f64 {
        q / self.volume_std
    }

    pub fn unscale_volume(&self, z: f64) -> f64 {
        z * self.volume_std
    }

    pub fn to_kv(&self, kv: &mut KeyValues) {
        kv.set("norm.static_mean", join_list(&self.static_mean));
        kv.set("norm.static_std", join_list(&self.static_std));
        kv.set("norm.speed_mean", self.speed_mean);
        kv.set("norm.speed_std", self.speed_std);
        kv.set("norm.volume_std", self.volume_std);
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let arr = |key: &str| -> Result<[f64; NUM_STATIC]> {
            if !kv.contains(key) {
                return Err(Error::Config(format!("missing key {key}")));
            }
            kv.get_list_or::<f64>(key, Vec::new())?
                .try_into()
                .map_err(|_| Error::Config(format!("{key} needs {NUM_STATIC} values")))
        };
        let scalar = |key: &str| -> Result<f64> {
            if !kv.contains(key) {
                return Err(Error::Config(format!("missing key {key}")));
            }
            kv.get_or(key, 0.0)
        };
        Ok(NormStats {
            static_mean: arr("norm.static_mean")?,
            static_std: arr("norm.static_std")?,
            speed_mean: scalar("norm.speed_mean")?,
            speed_std: scalar("norm.speed_std")?,
            volume_std: scalar("norm.volume_std")?,
        })
    }
}
