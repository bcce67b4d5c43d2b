use super::{init, Ctx};
use crate::diff::{ParamId, ParamStore, Tensor, Var};
use crate::error::Result;
use crate::rng::Rng;

/// Affine map `x W + b` applied row-wise.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let weight = store.insert(
            format!("{name}.weight"),
            init::uniform(&[in_dim, out_dim], in_dim, rng),
        )?;
        let bias = store.insert(format!("{name}.bias"), Tensor::zeros(&[out_dim]))?;
        Ok(Dense {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, cx: &mut Ctx<'_>, x: Var) -> Result<Var> {
        let w = cx.param(self.weight);
        let b = cx.param(self.bias);
        let y = cx.tape.matmul(x, w)?;
        cx.tape.add_bias(y, b)
    }
}
