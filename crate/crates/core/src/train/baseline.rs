use std::collections::BTreeMap;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::graph::DualGraph;

/// Mean volume profile per functional class and weekday over the training
/// samples. Unseen classes fall back to the weekday mean, then to the mean
/// over all samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassBaseline {
    by_class: BTreeMap<(u8, usize), Vec<f64>>,
    by_weekday: BTreeMap<usize, Vec<f64>>,
    overall: Vec<f64>,
}

fn mean_profiles<'a>(profiles: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut sum: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for p in profiles {
        if sum.is_empty() {
            sum = vec![0.0; p.len()];
        }
        for (s, v) in sum.iter_mut().zip(p) {
            *s += v;
        }
        n += 1;
    }
    sum.iter().map(|s| s / n.max(1) as f64).collect()
}

impl ClassBaseline {
    pub fn fit(dual: &DualGraph, train: &[Sample]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InvalidInput(
                "baseline needs at least one sample".into(),
            ));
        }
        let mut groups: BTreeMap<(u8, usize), Vec<&[f64]>> = BTreeMap::new();
        let mut days: BTreeMap<usize, Vec<&[f64]>> = BTreeMap::new();
        for s in train {
            let class = dual.node(s.target).attrs.functional_class;
            groups
                .entry((class, s.day % 7))
                .or_default()
                .push(&s.volume);
            days.entry(s.day % 7).or_default().push(&s.volume);
        }
        Ok(ClassBaseline {
            by_class: groups
                .into_iter()
                .map(|(k, v)| (k, mean_profiles(v.into_iter())))
                .collect(),
            by_weekday: days
                .into_iter()
                .map(|(k, v)| (k, mean_profiles(v.into_iter())))
                .collect(),
            overall: mean_profiles(train.iter().map(|s| s.volume.as_slice())),
        })
    }

    pub fn predict(&self, dual: &DualGraph, node: usize, day: usize) -> Vec<f64> {
        let class = dual.node(node).attrs.functional_class;
        self.by_class
            .get(&(class, day % 7))
            .or_else(|| self.by_weekday.get(&(day % 7)))
            .unwrap_or(&self.overall)
            .clone()
    }
}
