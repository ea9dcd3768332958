use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};

/// Train / validation / test fractions of the time axis.
pub const DEFAULT_RATIOS: [f64; 3] = [0.7, 0.2, 0.1];

/// Half-open, contiguous, chronologically ordered index ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitIndices {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Splits `[0, steps)` in order: train and validation lengths are rounded
/// down and the remainder goes to test. Never shuffles.
pub fn chronological_split(steps: usize, ratios: [f64; 3]) -> Result<SplitIndices> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::Config(format!(
            "split ratios must be nonnegative, got {ratios:?}"
        )));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios must sum to 1, got {total}")));
    }
    if steps < 10 {
        return Err(Error::Data(format!(
            "need at least 10 time steps to split, got {steps}"
        )));
    }
    // the small slack keeps e.g. 0.7 * 100 from flooring to 69
    let floor = |r: f64| ((r * steps as f64) + 1e-9).floor() as usize;
    let n_train = floor(ratios[0]).min(steps);
    let n_val = floor(ratios[1]).min(steps - n_train);
    Ok(SplitIndices {
        train: 0..n_train,
        val: n_train..n_train + n_val,
        test: n_train + n_val..steps,
    })
}
