//! The graph teacher: graph convolution feeding a GRU, run over the lookback
//! window, with a linear readout to the forecast horizon.
//!
//! ```text
//! [z ‖ r] = σ(Â [x_t ‖ h] W_g + b_g)
//! c       = tanh(Â [x_t ‖ r ⊙ h] W_c + b_c)
//! h       = z ⊙ h + (1 - z) ⊙ c
//! ŷ       = h W_out + b_out
//! ```

mod graph;

pub use graph::{normalize_adjacency, RoadNetwork};

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init;
use crate::model::{check_window, Forecaster};
use crate::tensor::{Binding, ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TgcnConfig {
    pub hidden: usize,
    pub horizon: usize,
}

impl Default for TgcnConfig {
    fn default() -> Self {
        TgcnConfig {
            hidden: 64,
            horizon: 12,
        }
    }
}

impl TgcnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.horizon == 0 {
            return Err(Error::Config(format!(
                "teacher hidden ({}) and horizon ({}) must be ≥ 1",
                self.hidden, self.horizon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TgcnParams {
    /// `(1 + hidden) × 2·hidden`, update gate columns first.
    pub w_gate: ParamId,
    pub b_gate: ParamId,
    pub w_cand: ParamId,
    pub b_cand: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
    pub hidden: usize,
}

impl TgcnParams {
    pub fn register<R: Rng>(store: &mut ParamStore, config: TgcnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        Ok(TgcnParams {
            w_gate: store.add("tgcn.gate.w", init::fan_in_uniform(rng, 1 + h, 2 * h, 1 + h)),
            b_gate: store.add("tgcn.gate.b", init::zeros(2 * h)),
            w_cand: store.add("tgcn.cand.w", init::fan_in_uniform(rng, 1 + h, h, 1 + h)),
            b_cand: store.add("tgcn.cand.b", init::zeros(h)),
            w_out: store.add("tgcn.out.w", init::fan_in_uniform(rng, h, config.horizon, h)),
            b_out: store.add("tgcn.out.b", init::zeros(config.horizon)),
            hidden: h,
        })
    }
}

/// Graph-mixed GRU input `Â [x_t ‖ h] W`, without bias or activation.
pub fn gcn_step(tape: &mut Tape, a_hat: Var, x_t: Var, h: Var, w: Var) -> Result<Var> {
    let xh = tape.concat_cols(x_t, h)?;
    let mixed = tape.matmul(a_hat, xh)?;
    tape.matmul(mixed, w)
}

/// Runs the recurrence over the `L` rows of `window` (`L×N`) from a zero
/// state and returns `N×H` predictions.
pub fn tgcn_forward(tape: &mut Tape, b: &Binding, p: &TgcnParams, a_hat: Var, window: Var) -> Result<Var> {
    let (steps, n) = (tape.value(window).rows(), tape.value(window).cols());
    if tape.value(a_hat).rows() != n {
        return Err(Error::Config(format!(
            "window has {n} nodes, graph has {}",
            tape.value(a_hat).rows()
        )));
    }
    let hid = p.hidden;
    let series = tape.transpose(window)?;
    let mut h = tape.constant(Tensor::zeros(vec![n, hid]));
    for t in 0..steps {
        let x = tape.slice_cols(series, t, 1)?;
        let g = gcn_step(tape, a_hat, x, h, b[p.w_gate])?;
        let g = tape.add_row(g, b[p.b_gate])?;
        let g = tape.sigmoid(g)?;
        let z = tape.slice_cols(g, 0, hid)?;
        let r = tape.slice_cols(g, hid, hid)?;
        let rh = tape.mul(r, h)?;
        let c = gcn_step(tape, a_hat, x, rh, b[p.w_cand])?;
        let c = tape.add_row(c, b[p.b_cand])?;
        let c = tape.tanh(c)?;
        let keep = tape.mul(z, h)?;
        let one_minus_z = tape.affine(z, -1.0, 1.0)?;
        let fresh = tape.mul(one_minus_z, c)?;
        h = tape.add(keep, fresh)?;
    }
    let y = tape.matmul(h, b[p.w_out])?;
    tape.add_row(y, b[p.b_out])
}

/// A trainable graph teacher bound to one road network.
#[derive(Debug, Clone)]
pub struct Tgcn {
    config: TgcnConfig,
    network: RoadNetwork,
    store: ParamStore,
    params: TgcnParams,
    trained: bool,
}

impl Tgcn {
    pub fn new<R: Rng>(config: TgcnConfig, network: RoadNetwork, rng: &mut R) -> Result<Self> {
        let mut store = ParamStore::new();
        let params = TgcnParams::register(&mut store, config, rng)?;
        Ok(Tgcn {
            config,
            network,
            store,
            params,
            trained: false,
        })
    }

    pub fn config(&self) -> TgcnConfig {
        self.config
    }

    pub fn network(&self) -> &RoadNetwork {
        &self.network
    }

    pub fn layout(&self) -> &TgcnParams {
        &self.params
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Marks the weights as fitted, e.g. after training or loading.
    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    pub fn load_checkpoint(&mut self, path: &Path) -> Result<()> {
        self.store.load_into(path)?;
        self.trained = true;
        Ok(())
    }

    /// Hands out a read-only teacher. Freezing weights that were never
    /// trained or loaded is allowed but logged.
    pub fn freeze(self) -> FrozenTeacher {
        if !self.trained {
            log::warn!("freezing a teacher that was never trained or loaded from a checkpoint");
        }
        FrozenTeacher { model: self }
    }
}

impl Forecaster for Tgcn {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn nodes(&self) -> usize {
        self.network.nodes()
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn forward(&self, tape: &mut Tape, b: &Binding, window: Var) -> Result<Var> {
        check_window(tape.value(window), self.nodes(), "teacher")?;
        let a_hat = tape.constant(self.network.normalized().clone());
        tgcn_forward(tape, b, &self.params, a_hat, window)
    }
}

/// A pretrained teacher whose parameters never enter a gradient tape.
#[derive(Debug, Clone)]
pub struct FrozenTeacher {
    model: Tgcn,
}

impl FrozenTeacher {
    pub fn predict(&self, window: &Tensor) -> Result<Tensor> {
        self.model.predict(window)
    }

    pub fn nodes(&self) -> usize {
        self.model.nodes()
    }

    pub fn horizon(&self) -> usize {
        self.model.horizon()
    }

    pub fn params(&self) -> &ParamStore {
        &self.model.store
    }

    pub fn digest(&self) -> String {
        self.model.store.digest()
    }

    pub fn model(&self) -> &Tgcn {
        &self.model
    }
}
