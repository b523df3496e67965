//! Recurrent Entity Network: a bank of gated memory cells with learned keys,
//! trained end to end by backpropagation through time.

pub mod checkpoint;
pub mod encoding;
pub mod error;
pub mod gradcheck;
pub mod inspect;
pub mod memory;
pub mod numerics;
pub mod model;
pub mod output;
pub mod seeds;
pub mod tasks;
pub mod training;

pub use error::{Error, Result};
