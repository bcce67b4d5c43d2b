use super::{init, Ctx};
use crate::diff::{ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Symmetric 1D convolution over time with zero padding `⌊p/2⌋`, stride 1,
/// followed by ReLU. Input rows are `node·T + t`.
#[derive(Debug, Clone)]
pub struct TemporalConv {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub size: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl TemporalConv {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        size: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if size % 2 == 0 || size == 0 {
            return Err(Error::Config(format!(
                "temporal kernel size must be odd, got {size}"
            )));
        }
        let kernel = store.insert(
            format!("{name}.kernel"),
            init::uniform(&[size, in_dim, out_dim], size * in_dim, rng),
        )?;
        let bias = store.insert(format!("{name}.bias"), Tensor::zeros(&[out_dim]))?;
        Ok(TemporalConv {
            kernel,
            bias,
            size,
            in_dim,
            out_dim,
        })
    }

    /// Convolution plus bias, without the activation.
    pub fn linear(&self, cx: &mut Ctx<'_>, x: Var, steps: usize) -> Result<Var> {
        let k = cx.param(self.kernel);
        let b = cx.param(self.bias);
        let y = cx.tape.conv1d_same(x, k, steps)?;
        cx.tape.add_bias(y, b)
    }

    pub fn forward(&self, cx: &mut Ctx<'_>, x: Var, steps: usize) -> Result<Var> {
        let y = self.linear(cx, x, steps)?;
        cx.tape.relu(y)
    }
}
