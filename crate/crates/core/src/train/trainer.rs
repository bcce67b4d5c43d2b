use rand::seq::SliceRandom;

use super::adam::Adam;
use super::config::TrainConfig;
use super::metrics::{huber_profile_loss, metrics, MetricsReport};
use crate::data::{build_inputs, NormStats, Profiles, Sample};
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::graph::DualGraph;
use crate::model::{GraphInput, HdaModel};
use crate::nn::Ctx;
use crate::rng::substream;

/// Model inputs and original-unit targets for a list of samples.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub inputs: Vec<GraphInput>,
    pub targets: Vec<Vec<f64>>,
    pub nodes: Vec<usize>,
    pub days: Vec<usize>,
}

impl LabeledSet {
    pub fn build(
        dual: &DualGraph,
        speeds: &Profiles,
        samples: &[Sample],
        norm: &NormStats,
    ) -> Result<Self> {
        Ok(LabeledSet {
            inputs: build_inputs(dual, speeds, samples, norm)?,
            targets: samples.iter().map(|s| s.volume.clone()).collect(),
            nodes: samples.iter().map(|s| s.target).collect(),
            days: samples.iter().map(|s| s.day).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_geh: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best epoch.
    pub model: HdaModel,
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn curve_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut out = String::from("epoch,train_loss,val_loss,val_geh\n");
        for r in &self.curve {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.epoch,
                r.train_loss,
                opt(r.val_loss),
                opt(r.val_geh)
            ));
        }
        out
    }
}

/// Evaluation-mode target profile in veh/h, before clamping.
fn predict_raw(model: &HdaModel, input: &GraphInput, norm: &NormStats) -> Result<Vec<f64>> {
    Ok(model
        .predict_target(input)?
        .into_iter()
        .map(|z| norm.unscale_volume(z))
        .collect())
}

/// Evaluation-mode target profile in veh/h, clamped at zero.
pub fn predict(model: &HdaModel, input: &GraphInput, norm: &NormStats) -> Result<Vec<f64>> {
    Ok(predict_raw(model, input, norm)?
        .into_iter()
        .map(|q| q.max(0.0))
        .collect())
}

/// Mean Huber loss, pooled metrics and the clamped predictions on `set`.
pub fn evaluate(
    model: &HdaModel,
    set: &LabeledSet,
    norm: &NormStats,
    delta: f64,
) -> Result<(f64, MetricsReport, Vec<Vec<f64>>)> {
    let raw: Vec<Vec<f64>> = crate::par::map(&set.inputs, |x| predict_raw(model, x, norm))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut loss = 0.0;
    for (p, q) in raw.iter().zip(&set.targets) {
        loss += huber_profile_loss(p, q, delta)?;
    }
    let preds: Vec<Vec<f64>> = raw
        .into_iter()
        .map(|p| p.into_iter().map(|q| q.max(0.0)).collect())
        .collect();
    let report = metrics(&preds, &set.targets)?;
    Ok((loss / set.len().max(1) as f64, report, preds))
}

fn sample_gradient(
    model: &HdaModel,
    set: &LabeledSet,
    idx: usize,
    norm: &NormStats,
    delta: f64,
    seed: u64,
    epoch: usize,
) -> Result<(f64, Vec<Tensor>)> {
    let rng = substream(seed, "dropout", &[epoch as u64, idx as u64]);
    let mut cx = Ctx::new(model.params(), true, rng);
    let y = model.forward_target(&mut cx, &set.inputs[idx])?;
    let y = cx.tape.scale(y, norm.volume_std)?;
    let loss = cx.tape.huber(y, &set.targets[idx], delta)?;
    cx.tape.backward(loss)?;
    Ok((cx.tape.value(loss).data()[0], cx.gradients()))
}

/// Per-sample losses and the mean gradient over the samples `batch` of
/// `set`. Samples run in parallel; the reduction is in batch order.
pub fn batch_gradient(
    model: &HdaModel,
    set: &LabeledSet,
    batch: &[usize],
    norm: &NormStats,
    delta: f64,
    seed: u64,
    epoch: usize,
) -> Result<(Vec<f64>, Vec<Tensor>)> {
    let parts: Vec<(f64, Vec<Tensor>)> = crate::par::map(batch, |&i| {
        sample_gradient(model, set, i, norm, delta, seed, epoch)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut sum = model.params().zeros_like();
    let mut losses = Vec::with_capacity(parts.len());
    for (loss, grads) in parts {
        losses.push(loss);
        for (s, g) in sum.iter_mut().zip(&grads) {
            for (a, b) in s.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
    }
    let n = batch.len().max(1) as f64;
    for s in &mut sum {
        s.data_mut().iter_mut().for_each(|a| *a /= n);
    }
    Ok((losses, sum))
}

pub fn train(
    model: HdaModel,
    train_set: &LabeledSet,
    val_set: &LabeledSet,
    norm: &NormStats,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    train_observed(
        model,
        train_set,
        val_set,
        norm,
        cfg,
        seed,
        &mut |_, _, _| {},
    )
}

/// [`train`] that passes every batch gradient to `observer` as
/// `(epoch, batch, gradient)` before the update.
pub fn train_observed(
    mut model: HdaModel,
    train_set: &LabeledSet,
    val_set: &LabeledSet,
    norm: &NormStats,
    cfg: &TrainConfig,
    seed: u64,
    observer: &mut dyn FnMut(usize, usize, &[Tensor]),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let mut adam = Adam::new(model.params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    let mut curve = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.params().clone());
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut substream(seed, "shuffle", &[epoch as u64]));
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch).enumerate() {
            let (losses, grads) =
                batch_gradient(&model, train_set, batch, norm, cfg.delta, seed, epoch)?;
            let batch_loss: f64 = losses.iter().sum();
            if !batch_loss.is_finite()
                || grads
                    .iter()
                    .any(|g| g.data().iter().any(|v| !v.is_finite()))
            {
                return Err(Error::Numeric(format!(
                    "training diverged at epoch {epoch}, batch {b} (loss {batch_loss}); lower train.lr"
                )));
            }
            loss_sum += batch_loss;
            observer(epoch, b, &grads);
            adam.step(model.params_mut(), &grads)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_geh) = if val_set.is_empty() {
            (None, None)
        } else {
            let (loss, report, _) = evaluate(&model, val_set, norm, cfg.delta)?;
            (Some(loss), Some(report.geh))
        };
        curve.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_geh,
        });
        log::debug!("epoch {epoch}: train {train_loss:.3} val {val_loss:?} geh {val_geh:?}");
        let score = val_geh.unwrap_or(train_loss);
        if score < best.0 {
            best = (score, epoch, model.params().clone());
        } else if epoch - best.1 >= cfg.patience {
            log::info!("early stop at epoch {epoch}; best epoch {}", best.1);
            break;
        }
    }
    model.params_mut().load_from(&best.2)?;
    Ok(TrainOutcome {
        model,
        curve,
        best_epoch: best.1,
    })
}
