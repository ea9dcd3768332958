use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, total_loss, AdamState, DistillConfig};
use crate::data::{ForecastWindow, Prepared};
use crate::error::{Error, Result};
use crate::eval::{evaluate_windows, MetricTriple};
use crate::model::Forecaster;
use crate::teacher::{FrozenTeacher, Tgcn};
use crate::tensor::{Tape, Tensor};

pub const BASELINE_LABEL: &str = "no-distillation baseline";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training objective over the epoch's windows.
    pub train_loss: f64,
    /// Mean `mse(student, teacher)` over the epoch's windows, when a teacher
    /// is attached.
    pub train_soft_loss: Option<f64>,
    /// Mean ground-truth MSE over the validation windows after the epoch.
    pub val_loss: f64,
    /// Wall-clock time, written to the epoch CSV only so that the JSON report
    /// stays reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub role: String,
    pub label: Option<String>,
    pub alpha: f64,
    pub beta: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub parameter_count: usize,
    pub checkpoint_sha256: String,
    /// Raw-unit metrics on the test windows of the best checkpoint.
    pub test: Option<MetricTriple>,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    /// `epoch,train_loss,val_loss,seconds` rows.
    pub fn write_epoch_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,train_loss,val_loss,seconds\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{:?},{:?},{:.3}\n",
                e.epoch, e.train_loss, e.val_loss, e.seconds
            ));
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }

    pub fn total_seconds(&self) -> f64 {
        self.epochs.iter().map(|e| e.seconds).sum()
    }
}

struct FitOutcome {
    epochs: Vec<EpochRecord>,
    best_epoch: usize,
    best_val_loss: f64,
    stopped_early: bool,
}

fn target_matrix(w: &ForecastWindow) -> Tensor {
    w.target.transpose()
}

fn plain_mse(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64
}

/// Mean ground-truth MSE over `windows`, in normalized units.
pub(crate) fn hard_loss<M: Forecaster>(model: &M, windows: &[ForecastWindow]) -> Result<f64> {
    let mut total = 0.0;
    for w in windows {
        total += plain_mse(&model.predict(&w.input)?, &target_matrix(w));
    }
    Ok(total / windows.len() as f64)
}

/// Mini-batch Adam with per-epoch shuffling and early stopping on validation
/// hard loss. `soft` holds one teacher prediction per training window. The
/// best checkpoint is restored before returning.
fn fit<M: Forecaster>(
    model: &mut M,
    data: &Prepared,
    cfg: &DistillConfig,
    soft: Option<&[Tensor]>,
) -> Result<FitOutcome> {
    cfg.validate()?;
    let train = &data.train;
    if train.is_empty() || data.val.is_empty() {
        return Err(Error::Data(
            "training and validation splits need at least one window each".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model.params());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = model.params().clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut waited = 0;
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let clock = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut soft_sum = 0.0;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            model.params_mut().zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let w = &train[i];
                let mut tape = Tape::new();
                let b = model.params().bind(&mut tape);
                let x = tape.constant(w.input.clone());
                let ys = model.forward(&mut tape, &b, x)?;
                let y = tape.constant(target_matrix(w));
                let loss = match soft {
                    Some(t) => {
                        soft_sum += plain_mse(tape.value(ys), &t[i]);
                        let yt = tape.constant(t[i].clone());
                        total_loss(&mut tape, ys, yt, y, cfg.alpha, cfg.beta)?
                    }
                    None => tape.mse(ys, y)?,
                };
                let value = tape.value(loss).data()[0];
                if !value.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "epoch {epoch}, batch {bi}: training loss is {value}"
                    )));
                }
                loss_sum += value;
                tape.backward(loss)?;
                model.params_mut().accumulate_grads(&tape, &b, scale);
            }
            adam_step(model.params_mut(), &mut adam, cfg.adam())
                .map_err(|e| Error::NonFinite(format!("epoch {epoch}, batch {bi}: {e}")))?;
        }
        let val_loss = hard_loss(model, &data.val)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "epoch {epoch}: validation loss is {val_loss}"
            )));
        }
        let n = train.len() as f64;
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            train_soft_loss: soft.map(|_| soft_sum / n),
            val_loss,
            seconds: clock.elapsed().as_secs_f64(),
        });
        log::debug!("epoch {epoch}: train {:.6} val {val_loss:.6}", loss_sum / n);
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best = model.params().clone();
            waited = 0;
        } else {
            waited += 1;
            if waited >= cfg.patience {
                stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    model.params_mut().copy_values_from(&best)?;
    model.params_mut().zero_grads();
    Ok(FitOutcome {
        epochs,
        best_epoch,
        best_val_loss: best_val,
        stopped_early,
    })
}

fn test_metrics<M: Forecaster>(model: &M, data: &Prepared, cfg: &DistillConfig) -> Result<Option<MetricTriple>> {
    if data.test.is_empty() {
        return Ok(None);
    }
    evaluate_windows(&|x: &Tensor| model.predict(x), &data.test, &data.stats, cfg.mape_floor).map(Some)
}

fn report<M: Forecaster>(
    role: &str,
    label: Option<&str>,
    model: &M,
    data: &Prepared,
    cfg: &DistillConfig,
    fit: FitOutcome,
) -> Result<TrainReport> {
    Ok(TrainReport {
        role: role.to_string(),
        label: label.map(str::to_string),
        alpha: cfg.alpha,
        beta: cfg.beta,
        epochs: fit.epochs,
        best_epoch: fit.best_epoch,
        best_val_loss: fit.best_val_loss,
        stopped_early: fit.stopped_early,
        parameter_count: model.params().num_scalars(),
        checkpoint_sha256: model.params().digest(),
        test: test_metrics(model, data, cfg)?,
    })
}

/// Fits the teacher to ground truth alone and freezes the best checkpoint.
/// The weights in `cfg` are ignored.
pub fn pretrain_teacher(
    mut teacher: Tgcn,
    data: &Prepared,
    cfg: &DistillConfig,
) -> Result<(FrozenTeacher, TrainReport)> {
    let cfg = DistillConfig {
        alpha: 0.0,
        beta: 1.0,
        ..*cfg
    };
    if teacher.nodes() != data.nodes() {
        return Err(Error::Config(format!(
            "teacher graph has {} nodes, data has {}",
            teacher.nodes(),
            data.nodes()
        )));
    }
    let fit = fit(&mut teacher, data, &cfg, None)?;
    let rep = report("teacher", None, &teacher, data, &cfg, fit)?;
    teacher.mark_trained();
    Ok((teacher.freeze(), rep))
}

/// Trains a student on ground truth alone.
pub fn train_baseline<M: Forecaster>(student: &mut M, data: &Prepared, cfg: &DistillConfig) -> Result<TrainReport> {
    let cfg = DistillConfig {
        alpha: 0.0,
        beta: 1.0,
        ..*cfg
    };
    let fit = fit(student, data, &cfg, None)?;
    report("student", Some(BASELINE_LABEL), student, data, &cfg, fit)
}

/// Trains a student against the frozen teacher and ground truth.
///
/// Teacher outputs depend only on the window, so they are computed once up
/// front instead of once per epoch.
pub fn distill_train<M: Forecaster>(
    student: &mut M,
    teacher: &FrozenTeacher,
    data: &Prepared,
    cfg: &DistillConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if teacher.nodes() != student.nodes() || teacher.horizon() != student.horizon() {
        return Err(Error::Config(format!(
            "teacher predicts {}×{} but the student predicts {}×{}",
            teacher.nodes(),
            teacher.horizon(),
            student.nodes(),
            student.horizon()
        )));
    }
    let soft: Vec<Tensor> = data
        .train
        .iter()
        .map(|w| teacher.predict(&w.input))
        .collect::<Result<_>>()?;
    let fit = fit(student, data, cfg, Some(&soft))?;
    let label = cfg.is_baseline().then_some(BASELINE_LABEL);
    report("student", label, student, data, cfg, fit)
}
