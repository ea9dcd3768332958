//! Teacher pretraining and student distillation.
//!
//! The student minimizes `α · MSE(Ŷ_s, Ŷ_t) + β · MSE(Ŷ_s, Y)` with `α + β = 1`,
//! where `Ŷ_t` comes from a frozen teacher. Both terms live in normalized
//! units. Model selection and early stopping watch the validation loss
//! against ground truth only.

mod adam;
mod sweep;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use sweep::{alpha_sweep, SweepRow, SweepTable, DEFAULT_SWEEP_PAIRS};
pub use train::{distill_train, pretrain_teacher, train_baseline, EpochRecord, TrainReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::DEFAULT_MAPE_FLOOR;
use crate::tensor::{Tape, Var};

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    /// Weight of the soft (teacher-matching) loss.
    pub alpha: f64,
    /// Weight of the hard (ground-truth) loss.
    pub beta: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub mape_floor: f64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            alpha: 0.2,
            beta: 0.8,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 128,
            max_epochs: 300,
            patience: 15,
            seed: 0,
            mape_floor: DEFAULT_MAPE_FLOOR,
        }
    }
}

pub fn check_weights(alpha: f64, beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!(
            "alpha ({alpha}) and beta ({beta}) must lie in [0, 1]"
        )));
    }
    if (alpha + beta - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(Error::Config(format!(
            "alpha + beta must equal 1, got {alpha} + {beta}"
        )));
    }
    Ok(())
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        check_weights(self.alpha, self.beta)?;
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config(format!(
                "batch_size ({}), patience ({}) and max_epochs ({}) must be ≥ 1",
                self.batch_size, self.patience, self.max_epochs
            )));
        }
        let positive = [self.learning_rate, self.adam_eps];
        let unit = [self.adam_beta1, self.adam_beta2];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || unit.iter().any(|v| !(0.0..1.0).contains(v)) {
            return Err(Error::Config(format!(
                "invalid optimizer settings: lr {}, betas ({}, {}), eps {}",
                self.learning_rate, self.adam_beta1, self.adam_beta2, self.adam_eps
            )));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    /// True for the `α = 0` run, which ignores the teacher entirely.
    pub fn is_baseline(&self) -> bool {
        self.alpha == 0.0
    }
}

/// `α · mse(y_s, y_t) + β · mse(y_s, y)`. Only `y_student` should carry
/// gradient; pass the teacher output and the truth as constants.
pub fn total_loss(tape: &mut Tape, y_student: Var, y_teacher: Var, y_true: Var, alpha: f64, beta: f64) -> Result<Var> {
    check_weights(alpha, beta)?;
    let soft = tape.mse(y_student, y_teacher)?;
    let hard = tape.mse(y_student, y_true)?;
    let soft = tape.scale(soft, alpha)?;
    let hard = tape.scale(hard, beta)?;
    tape.add(soft, hard)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{gradcheck, Tensor};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn eval_loss(ys: &Tensor, yt: &Tensor, y: &Tensor, a: f64, b: f64) -> Result<f64> {
        let mut tape = Tape::new();
        let (s, t, g) = (
            tape.constant(ys.clone()),
            tape.constant(yt.clone()),
            tape.constant(y.clone()),
        );
        let l = total_loss(&mut tape, s, t, g, a, b)?;
        Ok(tape.value(l).data()[0])
    }

    fn loop_mse(a: &Tensor, b: &Tensor) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn closed_form_cases() {
        let s = Tensor::scalar(2.0);
        assert_eq!(
            eval_loss(&s, &Tensor::scalar(1.0), &Tensor::scalar(0.0), 0.5, 0.5).unwrap(),
            2.5
        );
        assert_eq!(eval_loss(&s, &s, &s, 0.2, 0.8).unwrap(), 0.0);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let s = Tensor::scalar(1.0);
        assert!(matches!(eval_loss(&s, &s, &s, 0.5, 0.6), Err(Error::Config(_))));
        assert!(matches!(eval_loss(&s, &s, &s, -0.1, 1.1), Err(Error::Config(_))));
        assert!(DistillConfig {
            alpha: 0.3,
            beta: 0.3,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![3, 2]);
        assert!(matches!(eval_loss(&a, &b, &a, 0.5, 0.5), Err(Error::Dimension { .. })));
    }

    #[test]
    fn defaults_follow_protocol() {
        let c = DistillConfig::default();
        assert_eq!((c.alpha, c.beta), (0.2, 0.8));
        assert_eq!((c.batch_size, c.max_epochs, c.patience), (128, 300, 15));
        assert_eq!(
            (c.learning_rate, c.adam_beta1, c.adam_beta2, c.adam_eps),
            (1e-3, 0.9, 0.999, 1e-8)
        );
        c.validate().unwrap();
    }

    fn rand_t(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn alpha_zero_is_plain_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (ys, yt, y) = (rand_t(&mut rng, 4, 3), rand_t(&mut rng, 4, 3), rand_t(&mut rng, 4, 3));
        let mut tape = Tape::new();
        let (a, b) = (tape.constant(ys.clone()), tape.constant(y.clone()));
        let m = tape.mse(a, b).unwrap();
        assert_eq!(eval_loss(&ys, &yt, &y, 0.0, 1.0).unwrap(), tape.value(m).data()[0]);
    }

    #[test]
    fn gradient_has_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (n, h) = (5, 4);
        let (ys, yt, y) = (rand_t(&mut rng, n, h), rand_t(&mut rng, n, h), rand_t(&mut rng, n, h));
        let (a, b) = (0.3, 0.7);
        let mut tape = Tape::new();
        let s = tape.leaf(&ys);
        let (t, g) = (tape.constant(yt.clone()), tape.constant(y.clone()));
        let l = total_loss(&mut tape, s, t, g, a, b).unwrap();
        tape.backward(l).unwrap();
        let grad = tape.grad(s).unwrap();
        let k = (n * h) as f64;
        for i in 0..n * h {
            let want = 2.0 * a / k * (ys.data()[i] - yt.data()[i]) + 2.0 * b / k * (ys.data()[i] - y.data()[i]);
            assert!((grad[i] - want).abs() < 1e-10);
        }
        assert!(tape.grad(t).is_none() && tape.grad(g).is_none());
        let res = gradcheck::check(&[ys], 1e-5, |tape, v| {
            let (t, g) = (tape.constant(yt.clone()), tape.constant(y.clone()));
            total_loss(tape, v[0], t, g, a, b)
        })
        .unwrap();
        assert!(res.max_rel_error <= 1e-4);
    }

    proptest! {
        #[test]
        fn weighted_identity(
            vals in prop::collection::vec(-5.0f64..5.0, 18),
            alpha in 0.0f64..=1.0,
        ) {
            let beta = 1.0 - alpha;
            let ys = Tensor::matrix(2, 3, vals[0..6].to_vec()).unwrap();
            let yt = Tensor::matrix(2, 3, vals[6..12].to_vec()).unwrap();
            let y = Tensor::matrix(2, 3, vals[12..18].to_vec()).unwrap();
            let got = eval_loss(&ys, &yt, &y, alpha, beta).unwrap();
            let want = alpha * loop_mse(&ys, &yt) + beta * loop_mse(&ys, &y);
            prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }
}
