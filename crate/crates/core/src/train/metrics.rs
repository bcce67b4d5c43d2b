use crate::diff::huber_elem;
use crate::error::{Error, Result};

/// Mean element-wise Huber loss of `truth − pred`.
pub fn huber_profile_loss(pred: &[f64], truth: &[f64], delta: f64) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape {
            op: "huber_profile_loss",
            left: vec![pred.len()],
            right: vec![truth.len()],
        });
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("empty profile".into()));
    }
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, q)| huber_elem(q - p, delta))
        .sum::<f64>()
        / pred.len() as f64)
}

/// GEH statistic of an estimated and an observed hourly volume; zero when
/// both are zero.
pub fn geh(estimate: f64, observed: f64) -> f64 {
    let s = estimate + observed;
    if s <= 0.0 {
        return 0.0;
    }
    (2.0 * (estimate - observed).powi(2) / s).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    /// veh/h
    pub rmse: f64,
    /// percent, hours with zero ground truth excluded
    pub mape: f64,
    pub geh: f64,
    /// percent of hourly pairs with GEH above 5
    pub pct_geh_gt5: f64,
}

impl MetricsReport {
    /// Arithmetic mean of several reports.
    pub fn mean(reports: &[MetricsReport]) -> Result<MetricsReport> {
        if reports.is_empty() {
            return Err(Error::InvalidInput("cannot average zero reports".into()));
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Ok(MetricsReport {
            rmse: avg(|r| r.rmse),
            mape: avg(|r| r.mape),
            geh: avg(|r| r.geh),
            pct_geh_gt5: avg(|r| r.pct_geh_gt5),
        })
    }
}

/// Pools every hourly pair of every profile.
pub fn metrics(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<MetricsReport> {
    if pred.len() != truth.len() {
        return Err(Error::Shape {
            op: "metrics",
            left: vec![pred.len()],
            right: vec![truth.len()],
        });
    }
    let (mut n, mut sq, mut geh_sum, mut over) = (0usize, 0.0, 0.0, 0usize);
    let (mut n_ape, mut ape) = (0usize, 0.0);
    for (p, q) in pred.iter().zip(truth) {
        if p.len() != q.len() {
            return Err(Error::Shape {
                op: "metrics profile",
                left: vec![p.len()],
                right: vec![q.len()],
            });
        }
        for (&e, &o) in p.iter().zip(q) {
            n += 1;
            sq += (e - o) * (e - o);
            let g = geh(e, o);
            geh_sum += g;
            if g > 5.0 {
                over += 1;
            }
            if o != 0.0 {
                n_ape += 1;
                ape += ((e - o) / o).abs();
            }
        }
    }
    if n == 0 {
        return Err(Error::InvalidInput("no hourly pairs to evaluate".into()));
    }
    Ok(MetricsReport {
        rmse: (sq / n as f64).sqrt(),
        mape: if n_ape > 0 {
            100.0 * ape / n_ape as f64
        } else {
            0.0
        },
        geh: geh_sum / n as f64,
        pct_geh_gt5: 100.0 * over as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_truth_is_masked_from_mape() {
        let r = metrics(&[vec![10.0, 8.0]], &[vec![0.0, 4.0]]).unwrap();
        assert_eq!(r.mape, 100.0);
        assert!((r.geh - (20f64.sqrt() + (32.0f64 / 12.0).sqrt()) / 2.0).abs() < 1e-12);
    }
}
