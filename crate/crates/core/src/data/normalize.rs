use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Global min-max scaling fitted on the training rows only.
///
/// Values outside the training range map outside `[0, 1]`; that is expected
/// for validation and test rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxStats {
    pub min: f64,
    pub max: f64,
}

impl MinMaxStats {
    /// Fits on rows `train` of a `T×N` matrix.
    pub fn fit(series: &Tensor, train: Range<usize>) -> Result<Self> {
        if train.is_empty() || train.end > series.rows() {
            return Err(Error::Data(format!(
                "training range {train:?} is empty or exceeds {} rows",
                series.rows()
            )));
        }
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in train {
            for &v in series.row(r) {
                min = min.min(v);
                max = max.max(v);
            }
        }
        if max <= min {
            return Err(Error::Data(format!(
                "training data is constant ({min}); min-max scaling is undefined"
            )));
        }
        Ok(MinMaxStats { min, max })
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn normalize_value(&self, x: f64) -> f64 {
        (x - self.min) / self.span()
    }

    pub fn denormalize_value(&self, x: f64) -> f64 {
        x * self.span() + self.min
    }

    pub fn normalize(&self, t: &Tensor) -> Tensor {
        map(t, |x| self.normalize_value(x))
    }

    pub fn denormalize(&self, t: &Tensor) -> Tensor {
        map(t, |x| self.denormalize_value(x))
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect()).expect("shape preserved")
}
