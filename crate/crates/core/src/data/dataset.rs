use std::sync::Arc;

use super::norm::NormStats;
use super::profiles::Profiles;
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::graph::{DualGraph, Subgraph, NUM_STATIC};
use crate::model::{GraphInput, SPEED_DIMS};

/// One training example: a labelled node on one day with its `K`-hop
/// neighbourhood and its own volume profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub target: usize,
    pub day: usize,
    pub subgraph: Arc<Subgraph>,
    pub volume: Vec<f64>,
}

/// One sample per labelled node and day. Profiles that are absent or
/// missing are skipped with a warning.
pub fn assemble_dataset(
    dual: &DualGraph,
    volumes: &Profiles,
    k: usize,
    days: &[usize],
) -> Result<Vec<Sample>> {
    let labeled = dual.labeled();
    if labeled.is_empty() {
        return Err(Error::InvalidInput(
            "no sensor nodes in the dual graph".into(),
        ));
    }
    let mut samples = Vec::with_capacity(labeled.len() * days.len());
    let mut skipped = 0usize;
    for v in labeled {
        let sub = Arc::new(dual.khop_subgraph(v, k)?);
        for &day in days {
            match volumes.get(v, day) {
                Some(q) => samples.push(Sample {
                    target: v,
                    day,
                    subgraph: Arc::clone(&sub),
                    volume: q.to_vec(),
                }),
                None => {
                    skipped += 1;
                    log::debug!("sensor {v} has no complete volume profile for day {day}");
                }
            }
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} sensor-days with missing volume profiles");
    }
    Ok(samples)
}

/// Model input for the neighbourhood `sub` on `day`: encoded speeds for
/// every node and normalised static descriptors.
pub fn build_input(
    dual: &DualGraph,
    speeds: &Profiles,
    sub: &Subgraph,
    day: usize,
    norm: &NormStats,
) -> Result<GraphInput> {
    let enc = norm.speed_encoding();
    let mut speed = Vec::with_capacity(sub.len() * speeds.width() * SPEED_DIMS);
    let mut statics = Vec::with_capacity(sub.len() * NUM_STATIC);
    for &v in &sub.nodes {
        let p = speeds
            .get(v, day)
            .ok_or_else(|| Error::NotFound(format!("speed profile for node {v} day {day}")))?;
        enc.encode_into(p, day % 7, &mut speed);
        statics.extend_from_slice(&norm.normalize_statics(&dual.node(v).attrs.to_features()));
    }
    Ok(GraphInput {
        speed: Tensor::matrix(sub.len() * speeds.width(), SPEED_DIMS, speed)?,
        statics: Tensor::matrix(sub.len(), NUM_STATIC, statics)?,
        edges: sub.edges.clone(),
        target: sub.target,
    })
}

pub fn build_inputs(
    dual: &DualGraph,
    speeds: &Profiles,
    samples: &[Sample],
    norm: &NormStats,
) -> Result<Vec<GraphInput>> {
    crate::par::map(samples, |s| {
        build_input(dual, speeds, &s.subgraph, s.day, norm)
    })
    .into_iter()
    .collect()
}
