use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::diff::Tensor;
use crate::rng::Rng;

/// Uniform in `±1/√fan_in`.
pub fn uniform(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(
        shape,
        (0..n).map(|_| rng.gen_range(-bound..=bound)).collect(),
    )
    .expect("sized")
}

pub fn normal(shape: &[usize], std: f64, rng: &mut Rng) -> Tensor {
    let dist = Normal::new(0.0, std).expect("positive std");
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect()).expect("sized")
}
