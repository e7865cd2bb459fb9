//! Differentiable computation core: dense tensors, a reverse-mode tape,
//! named parameter sets, Adam, and finite-difference gradient checking.

mod adam;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, ParamCheck, REL_FLOOR};
pub use params::{accumulate_grads, ParamEntry, ParamId, ParamSet};
pub use tape::{Gradients, SparseMap, Tape, Var, PROB_FLOOR};
pub(crate) use tape::softmax_in_place;
pub use tensor::{dot, Tensor};
