use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use stgnn_core::config::KeyValues;
use stgnn_core::model::MODEL_KEYS;
use stgnn_core::synth::SYNTH_KEYS;
use stgnn_core::train::TRAIN_KEYS;

use crate::Common;

/// Invalid combination of command-line arguments.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

const RUN_KEYS: &[&str] = &["run.seed", "run.workers"];

/// Resolved configuration: file, then `--set` overrides, then dedicated
/// flags.
pub struct Settings {
    pub kv: KeyValues,
    pub seed: u64,
    pub workers: usize,
}

impl Settings {
    pub fn resolve(common: &Common) -> Result<Self> {
        let mut kv = match &common.config {
            Some(path) => KeyValues::read(path)?,
            None => KeyValues::new(),
        };
        for item in &common.overrides {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {item:?}")))?;
            kv.set(k.trim(), v.trim());
        }
        if let Some(seed) = common.seed {
            kv.set("run.seed", seed);
        }
        if let Some(w) = common.workers {
            kv.set("run.workers", w);
        }
        let known: Vec<&str> = SYNTH_KEYS
            .iter()
            .chain(MODEL_KEYS)
            .chain(TRAIN_KEYS)
            .chain(RUN_KEYS)
            .copied()
            .collect();
        let unknown: Vec<&str> = kv
            .keys()
            .filter(|k| !k.starts_with("paths.") && !known.contains(k))
            .collect();
        if let Some(k) = unknown.first() {
            return Err(
                stgnn_core::Error::Config(format!("unknown configuration key {k:?}")).into(),
            );
        }
        let seed = kv.get_or("run.seed", 1u64)?;
        let workers = kv.get_or("run.workers", 0usize)?;
        kv.set("run.seed", seed);
        Ok(Settings { kv, seed, workers })
    }

    pub fn set_path(&mut self, key: &str, path: &Path) {
        self.kv.set(&format!("paths.{key}"), path.display());
    }

    /// Writes the resolved configuration as `run.cfg` in `out`.
    pub fn save(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        self.kv.save(&out.join("run.cfg"))?;
        Ok(())
    }
}

/// `status.txt`: exit code and, on failure, the error message.
pub fn write_status(out: &Path, code: u8, err: Option<&anyhow::Error>) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut text = format!(
        "status = {}\nexit_code = {code}\n",
        if code == 0 { "ok" } else { "error" }
    );
    if let Some(e) = err {
        text.push_str(&format!(
            "message = {}\n",
            format!("{e:#}").replace('\n', " ")
        ));
    }
    std::fs::write(out.join("status.txt"), text)?;
    Ok(())
}
