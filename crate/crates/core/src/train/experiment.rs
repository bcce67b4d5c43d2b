use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use super::baseline::ClassBaseline;
use super::config::TrainConfig;
use super::metrics::{metrics, MetricsReport};
use super::split::split_sensors;
use super::trainer::{evaluate, predict, train, LabeledSet, TrainOutcome};
use crate::config::KeyValues;
use crate::data::{assemble_dataset, build_input, NormStats, Profiles, Sample};
use crate::error::{Error, Result};
use crate::graph::DualGraph;
use crate::model::{HdaModel, ModelConfig, Variant};

/// Row labels of the ablation table: the full model, the five
/// architectural variants and the full model on raw daily profiles.
pub const ABLATION_MODELS: [&str; 7] = [
    "full",
    "no_st_branch",
    "no_spatial_branch",
    "no_neighborhood",
    "single_branch_fusion",
    "undirected_gat",
    "raw_volumes",
];

/// Samples for every sensor and every day that has speed profiles.
pub fn prepare(
    dual: &DualGraph,
    speeds: &Profiles,
    volumes: &Profiles,
    k: usize,
) -> Result<Vec<Sample>> {
    let days: Vec<usize> = speeds.days().into_iter().collect();
    assemble_dataset(dual, volumes, k, &days)
}

/// One training run: split, normalisation, training and held-out metrics.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub outcome: TrainOutcome,
    pub norm: NormStats,
    pub train_nodes: Vec<usize>,
    pub val_nodes: Vec<usize>,
    /// Held-out metrics of the model; `None` without validation sensors.
    pub val_metrics: Option<MetricsReport>,
    /// Held-out metrics of the class-mean baseline.
    pub baseline_metrics: Option<MetricsReport>,
}

fn check_dims(cfg: &ModelConfig, speeds: &Profiles, samples: &[Sample]) -> Result<()> {
    if cfg.steps != speeds.width() {
        return Err(Error::Config(format!(
            "model.steps = {} but speed profiles have {} values",
            cfg.steps,
            speeds.width()
        )));
    }
    if let Some(s) = samples.iter().find(|s| s.volume.len() != cfg.horizon) {
        return Err(Error::Config(format!(
            "model.horizon = {} but volume profiles have {} values",
            cfg.horizon,
            s.volume.len()
        )));
    }
    Ok(())
}

pub fn run_seed(
    dual: &DualGraph,
    speeds: &Profiles,
    samples: &[Sample],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<SeedRun> {
    check_dims(model_cfg, speeds, samples)?;
    let sensors: Vec<usize> = samples
        .iter()
        .map(|s| s.target)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let (train_nodes, val_nodes) = split_sensors(&sensors, train_cfg.val_fraction, seed)?;
    let val_lookup: BTreeSet<usize> = val_nodes.iter().copied().collect();
    let (val_samples, train_samples): (Vec<Sample>, Vec<Sample>) = samples
        .iter()
        .cloned()
        .partition(|s| val_lookup.contains(&s.target));
    let norm = NormStats::fit(dual, speeds, &train_samples)?;
    let train_set = LabeledSet::build(dual, speeds, &train_samples, &norm)?;
    let val_set = LabeledSet::build(dual, speeds, &val_samples, &norm)?;
    let model = HdaModel::new(model_cfg, seed)?;
    let outcome = train(model, &train_set, &val_set, &norm, train_cfg, seed)?;
    let (val_metrics, baseline_metrics) = if val_set.is_empty() {
        (None, None)
    } else {
        let (_, report, _) = evaluate(&outcome.model, &val_set, &norm, train_cfg.delta)?;
        let baseline = ClassBaseline::fit(dual, &train_samples)?;
        let base: Vec<Vec<f64>> = val_samples
            .iter()
            .map(|s| baseline.predict(dual, s.target, s.day))
            .collect();
        (Some(report), Some(metrics(&base, &val_set.targets)?))
    };
    Ok(SeedRun {
        seed,
        outcome,
        norm,
        train_nodes,
        val_nodes,
        val_metrics,
        baseline_metrics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub model: String,
    pub seed: u64,
    pub metrics: MetricsReport,
}

impl AblationRow {
    pub fn results_csv(rows: &[AblationRow]) -> String {
        let mut out = String::from("model,seed,rmse,mape,geh,pct_geh_gt5\n");
        for r in rows {
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.model, r.seed, m.rmse, m.mape, m.geh, m.pct_geh_gt5
            );
        }
        out
    }

    /// Seed-averaged metrics per model, in first-appearance order.
    pub fn table(rows: &[AblationRow]) -> Result<Vec<(String, MetricsReport)>> {
        let mut names: Vec<&str> = Vec::new();
        for r in rows {
            if !names.contains(&r.model.as_str()) {
                names.push(&r.model);
            }
        }
        names
            .into_iter()
            .map(|name| {
                let reports: Vec<MetricsReport> = rows
                    .iter()
                    .filter(|r| r.model == name)
                    .map(|r| r.metrics)
                    .collect();
                Ok((name.to_string(), MetricsReport::mean(&reports)?))
            })
            .collect()
    }

    pub fn table_csv(table: &[(String, MetricsReport)]) -> String {
        let mut out = String::from("model,rmse,mape,geh,pct_geh_gt5\n");
        for (name, m) in table {
            let _ = writeln!(
                out,
                "{name},{},{},{},{}",
                m.rmse, m.mape, m.geh, m.pct_geh_gt5
            );
        }
        out
    }
}

/// Trains the full model and each variant on the averaged data and the full
/// model on raw daily data, for every seed. Returns one row per model and
/// seed, ordered as [`ABLATION_MODELS`].
pub fn run_ablations(
    dual: &DualGraph,
    averaged: (&Profiles, &[Sample]),
    raw: (&Profiles, &[Sample]),
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    let base = model_cfg.clone().with_variant(Variant::Full);
    let mut jobs: Vec<(String, ModelConfig, (&Profiles, &[Sample]))> = Vec::new();
    for v in Variant::ALL {
        let name = if v == Variant::Full { "full" } else { v.name() };
        jobs.push((name.to_string(), base.clone().with_variant(v), averaged));
    }
    jobs.push(("raw_volumes".to_string(), base, raw));
    let mut rows = Vec::new();
    for (name, cfg, (speeds, samples)) in jobs {
        for &seed in &train_cfg.seeds {
            let run = run_seed(dual, speeds, samples, &cfg, train_cfg, seed)?;
            let metrics = run.val_metrics.ok_or_else(|| {
                Error::Config("ablations need a non-empty validation split".into())
            })?;
            log::info!("{name} seed {seed}: GEH {:.3}", metrics.geh);
            rows.push(AblationRow {
                model: name.clone(),
                seed,
                metrics,
            });
        }
    }
    Ok(rows)
}

/// Target profile of every dual node on each of `days`, in veh/h and
/// clamped at zero, computed on each node's own neighbourhood.
pub fn infer_network(
    model: &HdaModel,
    dual: &DualGraph,
    speeds: &Profiles,
    norm: &NormStats,
    days: &[usize],
) -> Result<Profiles> {
    let k = model.config().k;
    let rows = crate::par::map_range(dual.num_nodes(), |v| -> Result<Vec<(usize, Vec<f64>)>> {
        let sub = dual.khop_subgraph(v, k)?;
        days.iter()
            .map(|&day| {
                Ok((
                    day,
                    predict(model, &build_input(dual, speeds, &sub, day, norm)?, norm)?,
                ))
            })
            .collect()
    });
    let mut out = Profiles::new(model.config().horizon);
    for (v, per_day) in rows.into_iter().enumerate() {
        for (day, q) in per_day? {
            out.insert(v, day, q)?;
        }
    }
    Ok(out)
}

/// Writes the model files plus `norm.cfg` into `dir`.
pub fn save_checkpoint(dir: &Path, model: &HdaModel, norm: &NormStats) -> Result<()> {
    model.save(dir)?;
    let mut kv = KeyValues::new();
    norm.to_kv(&mut kv);
    kv.save(&dir.join("norm.cfg"))
}

pub fn load_checkpoint(dir: &Path) -> Result<(HdaModel, NormStats)> {
    let model = HdaModel::load(dir)?;
    let norm = NormStats::from_kv(&KeyValues::read(&dir.join("norm.cfg"))?)?;
    Ok((model, norm))
}

/// `node_id,volume` rows for one day and hour of network-wide estimates.
pub fn hour_slice_csv(profiles: &Profiles, day: usize, hour: usize) -> Result<String> {
    if hour >= profiles.width() {
        return Err(Error::InvalidInput(format!(
            "hour {hour} outside a {}-hour profile",
            profiles.width()
        )));
    }
    let mut out = String::from("node_id,volume\n");
    let mut found = false;
    for ((node, d), p) in profiles.iter() {
        if d != day {
            continue;
        }
        if let Some(p) = p {
            found = true;
            let _ = writeln!(out, "{node},{}", p[hour]);
        }
    }
    if !found {
        return Err(Error::NotFound(format!("no profiles for day {day}")));
    }
    Ok(out)
}
