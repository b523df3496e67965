//! Dense tensors, a reverse-mode tape, and the optimizers used for training.

pub mod ops;
pub mod optim;
pub mod param;
pub mod tape;
pub mod tensor;

pub use ops::{dropout, l2_normalize, prelu, sigmoid, softmax, NORM_EPS};
pub use optim::{clip_global_norm, sgd_step, Adam, Optimizer, CLIP_THRESHOLD};
pub use param::{Gradients, ParamId, ParamStore, Parameter};
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
