//! Speed matrices, chronological splits, min-max scaling, sliding windows and
//! the synthetic implicit-correlation generator.

mod csvio;
mod normalize;
mod split;
mod synth;
mod windows;

pub use csvio::{load_adjacency_csv, load_speed_csv, write_adjacency_csv, write_classes_csv, write_speed_csv};
pub use normalize::MinMaxStats;
pub use split::{chronological_split, SplitIndices, DEFAULT_RATIOS};
pub use synth::{synth_generate, SynthConfig, SynthOutput};
pub use windows::{make_windows, ForecastWindow, WindowSpec};

use std::ops::Range;

use crate::error::{Error, Result};
use crate::teacher::RoadNetwork;
use crate::tensor::Tensor;

/// Minutes between consecutive rows when no timestamps are supplied.
pub const DEFAULT_INTERVAL_MINUTES: u32 = 5;

/// A `T×N` speed matrix, rows ascending in time.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedDataset {
    speeds: Tensor,
    node_ids: Option<Vec<String>>,
    interval_minutes: u32,
    network: Option<RoadNetwork>,
}

impl SpeedDataset {
    pub fn new(speeds: Tensor) -> Result<Self> {
        if speeds.shape().len() != 2 {
            return Err(Error::Data(format!(
                "speed matrix must be 2-D, got {:?}",
                speeds.shape()
            )));
        }
        if let Some((i, v)) = speeds
            .data()
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            let n = speeds.cols();
            return Err(Error::Data(format!(
                "speed at row {}, column {} is {v}; speeds must be finite and nonnegative",
                i / n,
                i % n
            )));
        }
        Ok(SpeedDataset {
            speeds,
            node_ids: None,
            interval_minutes: DEFAULT_INTERVAL_MINUTES,
            network: None,
        })
    }

    pub fn with_node_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.nodes() {
            return Err(Error::Data(format!(
                "{} node ids for {} columns",
                ids.len(),
                self.nodes()
            )));
        }
        self.node_ids = Some(ids);
        Ok(self)
    }

    pub fn with_network(mut self, network: RoadNetwork) -> Result<Self> {
        if network.nodes() != self.nodes() {
            return Err(Error::Data(format!(
                "adjacency has {} nodes but the speed matrix has {} columns",
                network.nodes(),
                self.nodes()
            )));
        }
        self.network = Some(network);
        Ok(self)
    }

    pub fn speeds(&self) -> &Tensor {
        &self.speeds
    }

    pub fn steps(&self) -> usize {
        self.speeds.rows()
    }

    pub fn nodes(&self) -> usize {
        self.speeds.cols()
    }

    pub fn node_ids(&self) -> Option<&[String]> {
        self.node_ids.as_deref()
    }

    pub fn network(&self) -> Option<&RoadNetwork> {
        self.network.as_ref()
    }

    pub fn interval_minutes(&self) -> u32 {
        self.interval_minutes
    }

    /// Checks `T ≥ L + H`.
    pub fn check_windowable(&self, spec: WindowSpec) -> Result<()> {
        if self.steps() < spec.total() {
            return Err(Error::Data(format!(
                "{} time steps cannot hold one window of lookback {} + horizon {}",
                self.steps(),
                spec.lookback,
                spec.horizon
            )));
        }
        Ok(())
    }
}

/// A dataset ready for training: normalized series, split and windows.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub normalized: Tensor,
    pub stats: MinMaxStats,
    pub split: SplitIndices,
    pub spec: WindowSpec,
    pub train: Vec<ForecastWindow>,
    pub val: Vec<ForecastWindow>,
    pub test: Vec<ForecastWindow>,
}

impl Prepared {
    pub fn new(dataset: &SpeedDataset, spec: WindowSpec, ratios: [f64; 3]) -> Result<Self> {
        dataset.check_windowable(spec)?;
        let split = chronological_split(dataset.steps(), ratios)?;
        let stats = MinMaxStats::fit(dataset.speeds(), split.train.clone())?;
        let normalized = stats.normalize(dataset.speeds());
        let train = make_windows(&normalized, split.train.clone(), spec);
        let val = make_windows(&normalized, split.val.clone(), spec);
        let test = make_windows(&normalized, split.test.clone(), spec);
        if train.is_empty() || val.is_empty() {
            return Err(Error::Data(format!(
                "training ({}) and validation ({}) ranges must each hold at least one window of {} steps",
                split.train.len(),
                split.val.len(),
                spec.total()
            )));
        }
        Ok(Prepared {
            normalized,
            stats,
            split,
            spec,
            train,
            val,
            test,
        })
    }

    pub fn nodes(&self) -> usize {
        self.normalized.cols()
    }

    /// Windows of an arbitrary range of the normalized series.
    pub fn windows_in(&self, range: Range<usize>) -> Vec<ForecastWindow> {
        make_windows(&self.normalized, range, self.spec)
    }
}
