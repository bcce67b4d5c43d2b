//! Layers: dense, same-length temporal convolution, and graph attention
//! (undirected and direction-aware).

mod attention;
mod conv;
mod dense;
pub mod init;

pub use attention::{AttentionEdges, AttentionOut, Dgat, EdgeDir, Gat};
pub use conv::TemporalConv;
pub use dense::Dense;

use crate::diff::{Binder, ParamId, ParamStore, Tape, Var};
use crate::error::Result;
use crate::rng::Rng;

/// Negative slope of the attention LeakyReLU.
pub const ATTENTION_SLOPE: f64 = 0.2;

/// State for one forward pass: the tape, parameter bindings, mode and the
/// dropout stream.
pub struct Ctx<'a> {
    pub tape: Tape,
    pub binder: Binder<'a>,
    pub train: bool,
    pub rng: Rng,
}

impl<'a> Ctx<'a> {
    /// `train` enables dropout and records parameters as trainable leaves.
    pub fn new(store: &'a ParamStore, train: bool, rng: Rng) -> Self {
        Ctx {
            tape: Tape::new(),
            binder: Binder::new(store, true),
            train,
            rng,
        }
    }

    /// Evaluation context: no dropout, parameters are constants.
    pub fn eval(store: &'a ParamStore) -> Self {
        Ctx {
            tape: Tape::new(),
            binder: Binder::new(store, false),
            train: false,
            rng: crate::rng::substream(0, "eval", &[]),
        }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.binder.var(&mut self.tape, id)
    }

    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        self.tape.dropout(x, rate, self.train, &mut self.rng)
    }

    pub fn gradients(&self) -> Vec<crate::diff::Tensor> {
        self.binder.gradients(&self.tape)
    }
}
