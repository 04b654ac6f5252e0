//! Numeric substrate: tensors, the differentiation tape, Adam, and
//! gradient verification.

pub mod gradcheck;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use optim::{adam_step, clip_global_norm, AdamState, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
