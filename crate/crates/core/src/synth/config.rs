use std::fmt;
use std::str::FromStr;

use crate::config::{join_list, KeyValues};
use crate::error::{Error, Result};

/// Weekday-averaged profiles (one day per weekday) or individual raw days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrafficMode {
    #[default]
    Averaged,
    Raw,
}

impl fmt::Display for TrafficMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrafficMode::Averaged => "averaged",
            TrafficMode::Raw => "raw",
        })
    }
}

impl FromStr for TrafficMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "averaged" | "weekday" => Ok(TrafficMode::Averaged),
            "raw" => Ok(TrafficMode::Raw),
            _ => Err(Error::Config(format!("unknown traffic mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub rows: usize,
    pub cols: usize,
    /// Mean link length in metres.
    pub spacing: f64,
    pub one_way_prob: f64,
    pub sensor_fraction: f64,
    /// Demand utilisation peak per functional class 1..5.
    pub class_utilization: [f64; 5],
    /// veh/h per lane.
    pub capacity_per_lane: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Utilisation below which speed stays at free flow.
    pub free_flow_threshold: f64,
    /// Weight of the node's own share in the upstream factor; the rest comes
    /// from the lanes of the upstream segments.
    pub upstream_base: f64,
    /// Standard deviation of speed noise, km/h (truncated at 3σ).
    pub speed_noise: f64,
    /// Relative standard deviation of volume noise (truncated at 3σ).
    pub volume_noise: f64,
    pub mode: TrafficMode,
    /// Weeks of individual days in raw mode.
    pub weeks: usize,
    /// Relative per-(node, day) demand jitter in raw mode.
    pub day_jitter: f64,
    /// Probability that a sensor's day profile is missing.
    pub missing_rate: f64,
    pub steps: usize,
    pub horizon: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rows: 5,
            cols: 5,
            spacing: 300.0,
            one_way_prob: 0.2,
            sensor_fraction: 0.3,
            class_utilization: [0.85, 0.75, 0.65, 0.55, 0.45],
            capacity_per_lane: 900.0,
            alpha: 1.0,
            beta: 2.0,
            free_flow_threshold: 0.55,
            upstream_base: 0.3,
            speed_noise: 0.0,
            volume_noise: 0.0,
            mode: TrafficMode::Averaged,
            weeks: 4,
            day_jitter: 0.15,
            missing_rate: 0.0,
            steps: 96,
            horizon: 24,
        }
    }
}

pub const SYNTH_KEYS: &[&str] = &[
    "synth.rows",
    "synth.cols",
    "synth.spacing",
    "synth.one_way_prob",
    "synth.sensor_fraction",
    "synth.class_utilization",
    "synth.capacity_per_lane",
    "synth.alpha",
    "synth.beta",
    "synth.free_flow_threshold",
    "synth.upstream_base",
    "synth.speed_noise",
    "synth.volume_noise",
    "synth.mode",
    "synth.weeks",
    "synth.day_jitter",
    "synth.missing_rate",
    "synth.steps",
    "synth.horizon",
];

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.rows == 0 || self.cols == 0 {
            return bad(format!(
                "grid must be at least 1x1, got {}x{}",
                self.rows, self.cols
            ));
        }
        if !(self.sensor_fraction > 0.0 && self.sensor_fraction <= 1.0) {
            return bad(format!(
                "synth.sensor_fraction must lie in (0, 1], got {}",
                self.sensor_fraction
            ));
        }
        for (name, p) in [
            ("one_way_prob", self.one_way_prob),
            ("missing_rate", self.missing_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("synth.{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(0.0..1.0).contains(&self.free_flow_threshold) {
            return bad(format!(
                "synth.free_flow_threshold must lie in [0, 1), got {}",
                self.free_flow_threshold
            ));
        }
        if !(0.0..=1.0).contains(&self.upstream_base) {
            return bad(format!(
                "synth.upstream_base must lie in [0, 1], got {}",
                self.upstream_base
            ));
        }
        if self
            .class_utilization
            .iter()
            .any(|&u| !(0.0..=1.0).contains(&u))
        {
            return bad("synth.class_utilization entries must lie in [0, 1]".into());
        }
        if self.capacity_per_lane <= 0.0 || self.alpha < 0.0 || self.beta <= 0.0 {
            return bad("capacity and beta must be positive, alpha non-negative".into());
        }
        if self.speed_noise < 0.0 || self.volume_noise < 0.0 || self.day_jitter < 0.0 {
            return bad("noise levels must be non-negative".into());
        }
        if !(20.0..=2000.0).contains(&self.spacing) {
            return bad(format!(
                "synth.spacing must lie in [20, 2000] m, got {}",
                self.spacing
            ));
        }
        if self.horizon == 0 || self.steps == 0 || self.steps % self.horizon != 0 {
            return bad(format!(
                "synth.steps ({}) must be a positive multiple of synth.horizon ({})",
                self.steps, self.horizon
            ));
        }
        if self.mode == TrafficMode::Raw && self.weeks == 0 {
            return bad("synth.weeks must be positive in raw mode".into());
        }
        Ok(())
    }

    /// Day indices; the weekday of day `d` is `d % 7` (0 = Monday).
    pub fn days(&self) -> usize {
        match self.mode {
            TrafficMode::Averaged => 7,
            TrafficMode::Raw => 7 * self.weeks,
        }
    }

    pub fn to_kv(&self, kv: &mut KeyValues) {
        kv.set("synth.rows", self.rows);
        kv.set("synth.cols", self.cols);
        kv.set("synth.spacing", self.spacing);
        kv.set("synth.one_way_prob", self.one_way_prob);
        kv.set("synth.sensor_fraction", self.sensor_fraction);
        kv.set(
            "synth.class_utilization",
            join_list(&self.class_utilization),
        );
        kv.set("synth.capacity_per_lane", self.capacity_per_lane);
        kv.set("synth.alpha", self.alpha);
        kv.set("synth.beta", self.beta);
        kv.set("synth.free_flow_threshold", self.free_flow_threshold);
        kv.set("synth.upstream_base", self.upstream_base);
        kv.set("synth.speed_noise", self.speed_noise);
        kv.set("synth.volume_noise", self.volume_noise);
        kv.set("synth.mode", self.mode);
        kv.set("synth.weeks", self.weeks);
        kv.set("synth.day_jitter", self.day_jitter);
        kv.set("synth.missing_rate", self.missing_rate);
        kv.set("synth.steps", self.steps);
        kv.set("synth.horizon", self.horizon);
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = SynthConfig::default();
        let util = kv.get_list_or("synth.class_utilization", d.class_utilization.to_vec())?;
        let class_utilization: [f64; 5] = util
            .try_into()
            .map_err(|_| Error::Config("synth.class_utilization needs 5 values".into()))?;
        let cfg = SynthConfig {
            rows: kv.get_or("synth.rows", d.rows)?,
            cols: kv.get_or("synth.cols", d.cols)?,
            spacing: kv.get_or("synth.spacing", d.spacing)?,
            one_way_prob: kv.get_or("synth.one_way_prob", d.one_way_prob)?,
            sensor_fraction: kv.get_or("synth.sensor_fraction", d.sensor_fraction)?,
            class_utilization,
            capacity_per_lane: kv.get_or("synth.capacity_per_lane", d.capacity_per_lane)?,
            alpha: kv.get_or("synth.alpha", d.alpha)?,
            beta: kv.get_or("synth.beta", d.beta)?,
            free_flow_threshold: kv.get_or("synth.free_flow_threshold", d.free_flow_threshold)?,
            upstream_base: kv.get_or("synth.upstream_base", d.upstream_base)?,
            speed_noise: kv.get_or("synth.speed_noise", d.speed_noise)?,
            volume_noise: kv.get_or("synth.volume_noise", d.volume_noise)?,
            mode: kv.get_or("synth.mode", d.mode)?,
            weeks: kv.get_or("synth.weeks", d.weeks)?,
            day_jitter: kv.get_or("synth.day_jitter", d.day_jitter)?,
            missing_rate: kv.get_or("synth.missing_rate", d.missing_rate)?,
            steps: kv.get_or("synth.steps", d.steps)?,
            horizon: kv.get_or("synth.horizon", d.horizon)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
