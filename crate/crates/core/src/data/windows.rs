use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Lookback `L` and horizon `H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSpec {
    pub lookback: usize,
    pub horizon: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            lookback: 12,
            horizon: 12,
        }
    }
}

impl WindowSpec {
    pub fn total(&self) -> usize {
        self.lookback + self.horizon
    }
}

/// One supervised sample: `L×N` history followed immediately by `H×N` targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastWindow {
    pub start: usize,
    pub input: Tensor,
    pub target: Tensor,
}

/// Every stride-1 window that fits entirely inside `range`.
///
/// Windows never straddle the range boundary. A range shorter than `L + H`
/// yields no windows and logs a warning.
pub fn make_windows(series: &Tensor, range: Range<usize>, spec: WindowSpec) -> Vec<ForecastWindow> {
    let end = range.end.min(series.rows());
    if end < range.start + spec.total() {
        log::warn!(
            "range {range:?} holds fewer than {} steps; no windows produced",
            spec.total()
        );
        return Vec::new();
    }
    (range.start..=end - spec.total())
        .map(|s| ForecastWindow {
            start: s,
            input: series.slice_rows(s, s + spec.lookback),
            target: series.slice_rows(s + spec.lookback, s + spec.total()),
        })
        .collect()
}
