use crate::config::{join_list, KeyValues};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Huber threshold in veh/h.
    pub delta: f64,
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seeds: Vec<u64>,
    pub val_fraction: f64,
    /// Epochs without a better validation GEH before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            delta: 50.0,
            batch: 64,
            epochs: 100,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seeds: vec![1, 2, 3, 4, 5],
            val_fraction: 0.2,
            patience: 15,
        }
    }
}

pub const TRAIN_KEYS: &[&str] = &[
    "train.delta",
    "train.batch",
    "train.epochs",
    "train.lr",
    "train.beta1",
    "train.beta2",
    "train.adam_eps",
    "train.seeds",
    "train.val_fraction",
    "train.patience",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.delta > 0.0) {
            return bad(format!("train.delta must be positive, got {}", self.delta));
        }
        if self.batch == 0 || self.epochs == 0 {
            return bad("train.batch and train.epochs must be positive".into());
        }
        if !(self.lr > 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.adam_eps > 0.0)
        {
            return bad("optimizer settings out of range".into());
        }
        if self.seeds.is_empty() {
            return bad("train.seeds must list at least one seed".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!(
                "train.val_fraction must lie in [0, 1), got {}",
                self.val_fraction
            ));
        }
        Ok(())
    }

    pub fn to_kv(&self, kv: &mut KeyValues) {
        kv.set("train.delta", self.delta);
        kv.set("train.batch", self.batch);
        kv.set("train.epochs", self.epochs);
        kv.set("train.lr", self.lr);
        kv.set("train.beta1", self.beta1);
        kv.set("train.beta2", self.beta2);
        kv.set("train.adam_eps", self.adam_eps);
        kv.set("train.seeds", join_list(&self.seeds));
        kv.set("train.val_fraction", self.val_fraction);
        kv.set("train.patience", self.patience);
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            delta: kv.get_or("train.delta", d.delta)?,
            batch: kv.get_or("train.batch", d.batch)?,
            epochs: kv.get_or("train.epochs", d.epochs)?,
            lr: kv.get_or("train.lr", d.lr)?,
            beta1: kv.get_or("train.beta1", d.beta1)?,
            beta2: kv.get_or("train.beta2", d.beta2)?,
            adam_eps: kv.get_or("train.adam_eps", d.adam_eps)?,
            seeds: kv.get_list_or("train.seeds", d.seeds)?,
            val_fraction: kv.get_or("train.val_fraction", d.val_fraction)?,
            patience: kv.get_or("train.patience", d.patience)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
