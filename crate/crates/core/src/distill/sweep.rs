use serde::{Deserialize, Serialize};

use super::{check_weights, distill_train, DistillConfig, TrainReport};
use crate::data::Prepared;
use crate::error::{Error, Result};
use crate::model::Forecaster;
use crate::teacher::FrozenTeacher;

/// The five (α, β) pairs of the trade-off study.
pub const DEFAULT_SWEEP_PAIRS: [(f64, f64); 5] = [(0.1, 0.9), (0.3, 0.7), (0.5, 0.5), (0.7, 0.3), (0.9, 0.1)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    /// Test MSE in raw units.
    pub mse: f64,
    /// `mse` divided by the largest `mse` of the sweep.
    pub normalized_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn from_mse(pairs: &[(f64, f64)], mse: &[f64]) -> Self {
        let max = mse.iter().copied().fold(f64::MIN, f64::max);
        SweepTable {
            rows: pairs
                .iter()
                .zip(mse)
                .map(|(&(alpha, beta), &m)| SweepRow {
                    alpha,
                    beta,
                    mse: m,
                    normalized_mse: m / max,
                })
                .collect(),
        }
    }

    /// α of the row with the lowest MSE; the first wins ties.
    pub fn best_alpha(&self) -> Option<f64> {
        self.rows
            .iter()
            .fold(None, |best: Option<&SweepRow>, r| match best {
                Some(b) if b.mse <= r.mse => Some(b),
                _ => Some(r),
            })
            .map(|r| r.alpha)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,beta,mse,normalized_mse\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:?},{:?},{:?},{:?}\n",
                r.alpha, r.beta, r.mse, r.normalized_mse
            ));
        }
        out
    }
}

/// Distills one freshly built student per (α, β) pair. `factory` must return
/// identically initialized students so only the weights differ between rows.
pub fn alpha_sweep<M, F>(
    factory: F,
    teacher: &FrozenTeacher,
    data: &Prepared,
    base: &DistillConfig,
    pairs: &[(f64, f64)],
) -> Result<(SweepTable, Vec<TrainReport>)>
where
    M: Forecaster,
    F: Fn() -> Result<M>,
{
    if pairs.is_empty() {
        return Err(Error::Config("the sweep grid is empty".into()));
    }
    for &(a, b) in pairs {
        check_weights(a, b)?;
    }
    let mut reports = Vec::with_capacity(pairs.len());
    let mut mse = Vec::with_capacity(pairs.len());
    for &(alpha, beta) in pairs {
        let cfg = DistillConfig { alpha, beta, ..*base };
        let mut student = factory()?;
        let rep = distill_train(&mut student, teacher, data, &cfg)?;
        let test = rep
            .test
            .ok_or_else(|| Error::Data("the sweep needs test windows to score each pair".into()))?;
        log::info!("sweep alpha={alpha} beta={beta}: test mse {}", test.mse);
        mse.push(test.mse);
        reports.push(rep);
    }
    Ok((SweepTable::from_mse(pairs, &mse), reports))
}
