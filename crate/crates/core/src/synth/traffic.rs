use rand::Rng as _;
use rand_distr::StandardNormal;

use super::config::{SynthConfig, TrafficMode};
use crate::data::Profiles;
use crate::error::Result;
use crate::graph::DualGraph;
use crate::rng::{substream, Rng};

/// Congestion curve `v = ffs / (1 + α·s^β)` with
/// `s = max(0, (x − x0) / (1 − x0))` and utilisation `x = q / capacity`.
/// Speed is exactly `ffs` for `x ≤ x0`; with `x0 = 0` this is the BPR form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedCurve {
    pub alpha: f64,
    pub beta: f64,
    pub threshold: f64,
}

impl SpeedCurve {
    pub fn from_config(cfg: &SynthConfig) -> Self {
        SpeedCurve {
            alpha: cfg.alpha,
            beta: cfg.beta,
            threshold: cfg.free_flow_threshold,
        }
    }

    fn excess(&self, x: f64) -> f64 {
        ((x - self.threshold) / (1.0 - self.threshold)).max(0.0)
    }

    pub fn speed(&self, ffs: f64, x: f64) -> f64 {
        ffs / (1.0 + self.alpha * self.excess(x).powf(self.beta))
    }

    /// Utilisation that produces `speed`; `None` in the flat part of the
    /// curve where the speed does not determine it.
    pub fn utilisation(&self, ffs: f64, speed: f64) -> Option<f64> {
        if self.alpha == 0.0 || speed >= ffs {
            return None;
        }
        let s = ((ffs / speed - 1.0) / self.alpha).powf(1.0 / self.beta);
        Some(self.threshold + (1.0 - self.threshold) * s)
    }
}

fn bump(hour: f64, centre: f64, width: f64) -> f64 {
    (-(hour - centre).powi(2) / (2.0 * width * width)).exp()
}

/// Relative demand in `[0, 1]` for a functional class (1..5), weekday
/// (0 = Monday) and hour of day. Arterials carry sharp commuter peaks,
/// local streets a flatter daytime profile.
pub fn demand_shape(class: u8, weekday: usize, hour: f64) -> f64 {
    let local = (class.clamp(1, 5) - 1) as f64 / 4.0;
    let night = 0.06 + 0.04 * (1.0 - local);
    let day = match weekday % 7 {
        5 | 6 => {
            let scale = if weekday % 7 == 5 { 0.75 } else { 0.6 };
            scale * bump(hour, 13.5, 3.5) + 0.1 * bump(hour, 20.0, 1.5)
        }
        w => {
            let am = (1.0 - 0.4 * local) * bump(hour, 8.0, 1.2);
            let pm_scale = if w == 4 { 1.05 } else { 0.95 };
            let pm = pm_scale * (1.0 - 0.25 * local) * bump(hour, 17.5, 1.6);
            let midday = (0.45 + 0.25 * local) * bump(hour, 13.0, 3.0);
            am.max(pm).max(midday) + 0.1 * midday
        }
    };
    (night + (1.0 - night) * day).clamp(0.0, 1.0)
}

/// Demand multiplier of a directed segment from the segments that feed it:
/// `base + (1 − base)·mean(lanes_u / 4)` over predecessors `u`. A segment
/// without predecessors uses its own lane count.
pub fn upstream_factor(dual: &DualGraph, v: usize, base: f64) -> f64 {
    let preds = dual.predecessors(v);
    let share = if preds.is_empty() {
        dual.node(v).attrs.lanes as f64 / 4.0
    } else {
        preds
            .iter()
            .map(|&u| dual.node(u).attrs.lanes as f64 / 4.0)
            .sum::<f64>()
            / preds.len() as f64
    };
    base + (1.0 - base) * share
}

/// Generated profiles for every dual node and day.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTraffic {
    /// Speeds (km/h) of every node, `steps` values per day.
    pub speeds: Profiles,
    /// Ground-truth hourly volumes (veh/h) of every node.
    pub truth: Profiles,
    /// Volumes revealed for sensor nodes only, with missing profiles.
    pub observed: Profiles,
}

fn truncated_normal(rng: &mut Rng) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z.clamp(-3.0, 3.0)
}

/// Utilisation per step for node `v` on `day`.
fn utilisation(cfg: &SynthConfig, class: u8, factor: f64, day: usize, jitter: f64) -> Vec<f64> {
    let util = cfg.class_utilization[(class.clamp(1, 5) - 1) as usize];
    (0..cfg.steps)
        .map(|t| {
            let hour = 24.0 * (t as f64 + 0.5) / cfg.steps as f64;
            (util * demand_shape(class, day % 7, hour) * factor * jitter).clamp(0.0, 1.0)
        })
        .collect()
}

/// Speed and volume profiles for every node of `dual` on every day of the
/// configured mode. Each `(node, day)` pair draws from its own random
/// stream, so the output does not depend on scheduling.
pub fn gen_traffic(cfg: &SynthConfig, dual: &DualGraph, seed: u64) -> Result<SynthTraffic> {
    cfg.validate()?;
    let curve = SpeedCurve::from_config(cfg);
    let days = cfg.days();
    let per_hour = cfg.steps / cfg.horizon;
    let n = dual.num_nodes();
    let factors: Vec<f64> = (0..n)
        .map(|v| upstream_factor(dual, v, cfg.upstream_base))
        .collect();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|v| (0..days).map(move |d| (v, d)))
        .collect();
    let generated = crate::par::map(&pairs, |&(v, day)| {
        let attrs = dual.node(v).attrs;
        let capacity = cfg.capacity_per_lane * attrs.lanes as f64;
        let mut rng = substream(seed, "traffic", &[v as u64, day as u64]);
        let jitter = match cfg.mode {
            TrafficMode::Averaged => 1.0,
            TrafficMode::Raw => (1.0 + cfg.day_jitter * truncated_normal(&mut rng)).max(0.05),
        };
        let x = utilisation(cfg, attrs.functional_class, factors[v], day, jitter);
        let speed: Vec<f64> = x
            .iter()
            .map(|&x| {
                let noise = cfg.speed_noise * truncated_normal(&mut rng);
                (curve.speed(attrs.free_flow_speed, x) + noise).max(1.0)
            })
            .collect();
        let volume: Vec<f64> = x
            .chunks(per_hour)
            .map(|c| {
                let q = capacity * c.iter().sum::<f64>() / per_hour as f64;
                (q * (1.0 + cfg.volume_noise * truncated_normal(&mut rng))).max(0.0)
            })
            .collect();
        let missing =
            substream(seed, "missing", &[v as u64, day as u64]).gen_bool(cfg.missing_rate);
        (speed, volume, missing)
    });
    let mut out = SynthTraffic {
        speeds: Profiles::new(cfg.steps),
        truth: Profiles::new(cfg.horizon),
        observed: Profiles::new(cfg.horizon),
    };
    for (&(v, day), (speed, volume, missing)) in pairs.iter().zip(generated) {
        out.speeds.insert(v, day, speed)?;
        if dual.node(v).sensor {
            if missing {
                out.observed.insert_missing(v, day);
            } else {
                out.observed.insert(v, day, volume.clone())?;
            }
        }
        out.truth.insert(v, day, volume)?;
    }
    if out.observed.is_empty() && n > 0 {
        log::warn!("no sensor nodes flagged; no volumes revealed");
    }
    Ok(out)
}
