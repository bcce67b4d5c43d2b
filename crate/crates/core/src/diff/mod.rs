//! Dense arrays with reverse-mode differentiation.

pub mod checkpoint;
mod gemm;
pub mod gradcheck;
pub mod params;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, grad_check_many, grad_check_params, GradCheckReport};
pub use params::{Binder, ParamId, ParamStore};
pub use tape::{huber_elem, huber_grad, Tape, Var};
pub use tensor::Tensor;
