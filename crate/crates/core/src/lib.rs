//! Traffic-speed forecasting with a dual spatial/temporal transformer student
//! distilled from a frozen graph-convolutional teacher.

#![allow(clippy::needless_range_loop)]

pub mod data;
pub mod distill;
pub mod dual;
pub mod error;
pub mod eval;
mod init;
pub mod model;
pub mod teacher;
pub mod tensor;
pub mod transformer;

pub use error::{Error, Result};
pub use model::Forecaster;
pub use tensor::{Binding, ParamId, ParamStore, Tape, Tensor, Var};
