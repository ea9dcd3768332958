//! MSE, MAPE and R² on denormalized predictions, whole-split and period-wise.
//!
//! Every sum runs over its terms in ascending order, so the metrics do not
//! depend on the order in which windows are visited.

use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::data::{make_windows, ForecastWindow, MinMaxStats, WindowSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Truth values below this (raw units) are left out of MAPE.
pub const DEFAULT_MAPE_FLOOR: f64 = 1.0;

fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_unstable_by(f64::total_cmp);
    terms.iter().sum()
}

fn check_lengths(op: &'static str, pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::dim(
            op,
            format!("{} predictions, {} targets", pred.len(), truth.len()),
        ));
    }
    if pred.is_empty() {
        return Err(Error::Data(format!("{op}: no values")));
    }
    Ok(())
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths("mse", pred, truth)?;
    let terms = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).collect();
    Ok(sorted_sum(terms) / pred.len() as f64)
}

/// Mean of `|p - t| / t` over the terms with `t ≥ floor`. Returns 0 with a
/// warning when every term falls below the floor.
pub fn mape(pred: &[f64], truth: &[f64], floor: f64) -> Result<f64> {
    check_lengths("mape", pred, truth)?;
    let terms: Vec<f64> = pred
        .iter()
        .zip(truth)
        .filter(|(_, &t)| t >= floor)
        .map(|(p, t)| (p - t).abs() / t)
        .collect();
    if terms.is_empty() {
        log::warn!("every target is below the MAPE floor {floor}; reporting MAPE = 0");
        return Ok(0.0);
    }
    let n = terms.len();
    Ok(sorted_sum(terms) / n as f64)
}

pub fn r2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths("r2", pred, truth)?;
    if truth.len() < 2 {
        return Err(Error::Data("r2 needs at least two values".into()));
    }
    let mean = sorted_sum(truth.to_vec()) / truth.len() as f64;
    let ss_tot = sorted_sum(truth.iter().map(|t| (t - mean) * (t - mean)).collect());
    if ss_tot == 0.0 {
        return Err(Error::Data("r2 is undefined for constant targets".into()));
    }
    let ss_res = sorted_sum(pred.iter().zip(truth).map(|(p, t)| (t - p) * (t - p)).collect());
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub mse: f64,
    pub mape: f64,
    pub r2: f64,
}

impl MetricTriple {
    pub fn compute(pred: &[f64], truth: &[f64], mape_floor: f64) -> Result<Self> {
        Ok(MetricTriple {
            mse: mse(pred, truth)?,
            mape: mape(pred, truth, mape_floor)?,
            r2: r2(pred, truth)?,
        })
    }
}

/// Flattened raw-unit predictions and targets, ordered (window, step, node).
#[derive(Debug, Clone, Default)]
pub struct Collected {
    pub pred: Vec<f64>,
    pub truth: Vec<f64>,
    pub horizon: usize,
    pub nodes: usize,
}

/// Runs `forward` on each window and denormalizes. Predictions are `N×H`
/// while targets are `H×N`, so predictions are read transposed.
pub fn collect<F>(forward: &F, windows: &[ForecastWindow], stats: &MinMaxStats) -> Result<Collected>
where
    F: Fn(&Tensor) -> Result<Tensor> + ?Sized,
{
    let mut out = Collected::default();
    for w in windows {
        let y = forward(&w.input)?;
        let (h, n) = (w.target.rows(), w.target.cols());
        if y.shape() != [n, h] {
            return Err(Error::dim(
                "evaluate",
                format!("model returned {:?}, expected [{n}, {h}]", y.shape()),
            ));
        }
        out.horizon = h;
        out.nodes = n;
        for s in 0..h {
            for i in 0..n {
                out.pred.push(stats.denormalize_value(y.get(i, s)));
                out.truth.push(stats.denormalize_value(w.target.get(s, i)));
            }
        }
    }
    Ok(out)
}

/// Metric triple over every (window, node, step) of `windows`.
pub fn evaluate_windows<F>(
    forward: &F,
    windows: &[ForecastWindow],
    stats: &MinMaxStats,
    mape_floor: f64,
) -> Result<MetricTriple>
where
    F: Fn(&Tensor) -> Result<Tensor> + ?Sized,
{
    if windows.is_empty() {
        return Err(Error::Data("no windows to evaluate".into()));
    }
    let c = collect(forward, windows, stats)?;
    MetricTriple::compute(&c.pred, &c.truth, mape_floor)
}

/// Evaluates on the windows of `range` within the normalized series.
pub fn evaluate_model<F>(
    forward: &F,
    normalized: &Tensor,
    stats: &MinMaxStats,
    range: Range<usize>,
    spec: WindowSpec,
    mape_floor: f64,
) -> Result<MetricTriple>
where
    F: Fn(&Tensor) -> Result<Tensor> + ?Sized,
{
    let windows = make_windows(normalized, range.clone(), spec);
    if windows.is_empty() {
        return Err(Error::Data(format!(
            "range {}..{} holds no window of {} steps",
            range.start,
            range.end,
            spec.total()
        )));
    }
    evaluate_windows(forward, &windows, stats, mape_floor)
}

/// One triple per forecast step.
pub fn evaluate_per_horizon<F>(
    forward: &F,
    windows: &[ForecastWindow],
    stats: &MinMaxStats,
    mape_floor: f64,
) -> Result<Vec<MetricTriple>>
where
    F: Fn(&Tensor) -> Result<Tensor> + ?Sized,
{
    if windows.is_empty() {
        return Err(Error::Data("no windows to evaluate".into()));
    }
    let c = collect(forward, windows, stats)?;
    let block = c.horizon * c.nodes;
    (0..c.horizon)
        .map(|s| {
            let pick = |v: &[f64]| -> Vec<f64> {
                v.chunks(block)
                    .flat_map(|w| w[s * c.nodes..(s + 1) * c.nodes].iter().copied())
                    .collect()
            };
            MetricTriple::compute(&pick(&c.pred), &pick(&c.truth), mape_floor)
        })
        .collect()
}

/// `k` consecutive ranges of `steps / k` rows; the last absorbs the remainder.
pub fn period_ranges(steps: usize, k: usize) -> Result<Vec<Range<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("period count must be ≥ 2, got {k}")));
    }
    if steps < k {
        return Err(Error::Data(format!("{steps} steps cannot form {k} periods")));
    }
    let len = steps / k;
    Ok((0..k)
        .map(|i| {
            let end = if i + 1 == k { steps } else { (i + 1) * len };
            i * len..end
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodResult {
    pub period: usize,
    pub start: usize,
    pub end: usize,
    /// `None` when the period is too short for one window.
    pub metrics: Option<MetricTriple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodReport {
    pub periods: Vec<PeriodResult>,
    /// Population variance of each metric across the non-empty periods.
    pub variance: Option<MetricTriple>,
}

impl PeriodReport {
    pub fn from_results(periods: Vec<PeriodResult>) -> Self {
        let present: Vec<MetricTriple> = periods.iter().filter_map(|p| p.metrics).collect();
        let variance = (!present.is_empty()).then(|| {
            let var = |f: fn(&MetricTriple) -> f64| {
                let vals: Vec<f64> = present.iter().map(f).collect();
                let n = vals.len() as f64;
                let mean = sorted_sum(vals.clone()) / n;
                sorted_sum(vals.iter().map(|v| (v - mean) * (v - mean)).collect()) / n
            };
            MetricTriple {
                mse: var(|m| m.mse),
                mape: var(|m| m.mape),
                r2: var(|m| m.r2),
            }
        });
        PeriodReport { periods, variance }
    }
}

/// Splits the whole time axis into `k` periods and evaluates one model on
/// every window inside each period. Periods are spread over `threads`
/// workers; each period's result does not depend on the worker count.
pub fn periodwise_evaluate<F>(
    forward: &F,
    normalized: &Tensor,
    stats: &MinMaxStats,
    spec: WindowSpec,
    k: usize,
    mape_floor: f64,
    threads: usize,
) -> Result<PeriodReport>
where
    F: Fn(&Tensor) -> Result<Tensor> + Sync,
{
    let ranges = period_ranges(normalized.rows(), k)?;
    let eval_one = |(i, r): (usize, &Range<usize>)| -> Result<PeriodResult> {
        let windows = make_windows(normalized, r.clone(), spec);
        let metrics = if windows.is_empty() {
            None
        } else {
            Some(evaluate_windows(forward, &windows, stats, mape_floor)?)
        };
        Ok(PeriodResult {
            period: i,
            start: r.start,
            end: r.end,
            metrics,
        })
    };
    let threads = threads.clamp(1, k);
    let results: Vec<Result<PeriodResult>> = if threads == 1 {
        ranges.iter().enumerate().map(eval_one).collect()
    } else {
        let mut slots: Vec<Option<Result<PeriodResult>>> = (0..k).map(|_| None).collect();
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|w| {
                    let ranges = &ranges;
                    let eval_one = &eval_one;
                    s.spawn(move || {
                        ranges
                            .iter()
                            .enumerate()
                            .skip(w)
                            .step_by(threads)
                            .map(|p| (p.0, eval_one(p)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("evaluation worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        slots.into_iter().map(|r| r.expect("every period evaluated")).collect()
    };
    Ok(PeriodReport::from_results(results.into_iter().collect::<Result<_>>()?))
}

/// Aligned text table with MSE, MAPE and R² columns. Numbers are printed in
/// shortest round-trip form so they match the JSON output exactly.
pub fn format_table(rows: &[(String, Option<MetricTriple>)]) -> String {
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|(name, m)| match m {
            Some(m) => [name.clone(), m.mse.to_string(), m.mape.to_string(), m.r2.to_string()],
            None => [name.clone(), "-".into(), "-".into(), "-".into()],
        })
        .collect();
    let header = ["model".to_string(), "MSE".into(), "MAPE".into(), "R2".into()];
    let mut widths = header.clone().map(|h| h.len());
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    for row in std::iter::once(&header).chain(&cells) {
        let line: Vec<String> = row
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

/// Parses a table produced by [`format_table`] back into rows.
pub fn parse_table(text: &str) -> Vec<(String, Option<MetricTriple>)> {
    text.lines()
        .skip(1)
        .filter_map(|line| {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return None;
            }
            let nums: Option<Vec<f64>> = f[1..].iter().map(|s| s.parse().ok()).collect();
            Some((
                f[0].to_string(),
                nums.map(|v| MetricTriple {
                    mse: v[0],
                    mape: v[1],
                    r2: v[2],
                }),
            ))
        })
        .collect()
}
