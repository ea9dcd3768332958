//! The interface shared by the teacher and the student.

use crate::error::{Error, Result};
use crate::tensor::{Binding, ParamStore, Tape, Tensor, Var};

/// A parameterized map from an `L×N` input window to `N×H` predictions, both
/// in normalized units.
pub trait Forecaster {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn nodes(&self) -> usize;
    fn horizon(&self) -> usize;

    /// Records the forward pass on `tape` using parameter vars from `b`.
    fn forward(&self, tape: &mut Tape, b: &Binding, window: Var) -> Result<Var>;

    /// Forward pass with every parameter held constant.
    fn predict(&self, window: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let b = self.params().bind_frozen(&mut tape);
        let w = tape.constant(window.clone());
        let out = self.forward(&mut tape, &b, w)?;
        Ok(tape.value(out).clone())
    }
}

pub(crate) fn check_window(window: &Tensor, nodes: usize, what: &str) -> Result<()> {
    if window.shape().len() != 2 || window.cols() != nodes || window.rows() == 0 {
        return Err(Error::Config(format!(
            "{what} expects an L×{nodes} window, got {:?}",
            window.shape()
        )));
    }
    Ok(())
}
