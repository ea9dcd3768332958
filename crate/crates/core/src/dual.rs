//! The student: a spatial transformer over road-segment tokens and a temporal
//! transformer over time-step tokens, joined by one output projection.
//!
//! ```text
//! H_S = encode(X^T P_S + b_S)          N×d
//! H_T = encode(X P_T + b_T)            L×d
//! c   = mean over the rows of H_T      1×d
//! Ŷ   = [H_S ‖ 1_N c] W_H + b_H        N×H
//! ```
//!
//! The temporal encoder yields one row per time step while the spatial one
//! yields one row per node, so the temporal output is pooled into a context
//! vector and broadcast to every node before the concatenation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init;
use crate::model::{check_window, Forecaster};
use crate::tensor::{Binding, ParamId, ParamStore, Tape, Tensor, Var};
use crate::transformer::{encode, EncoderConfig, EncoderParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchMode {
    #[default]
    Dual,
    SpatialOnly,
    TemporalOnly,
}

impl BranchMode {
    pub const ALL: [BranchMode; 3] = [BranchMode::Dual, BranchMode::SpatialOnly, BranchMode::TemporalOnly];

    pub fn spatial(self) -> bool {
        self != BranchMode::TemporalOnly
    }

    pub fn temporal(self) -> bool {
        self != BranchMode::SpatialOnly
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BranchMode::Dual => "dual",
            BranchMode::SpatialOnly => "spatial_only",
            BranchMode::TemporalOnly => "temporal_only",
        }
    }
}

impl fmt::Display for BranchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BranchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BranchMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown branch mode '{s}' (dual, spatial_only, temporal_only)")))
    }
}

/// Learned positional embeddings are off by default; without them both
/// encoders are permutation equivariant over their tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Positional {
    #[default]
    None,
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualConfig {
    pub d_model: usize,
    pub heads: usize,
    pub spatial_layers: usize,
    pub temporal_layers: usize,
    pub d_ff: usize,
    pub branch: BranchMode,
    pub positional: Positional,
}

impl Default for DualConfig {
    fn default() -> Self {
        DualConfig {
            d_model: 64,
            heads: 4,
            spatial_layers: 2,
            temporal_layers: 2,
            d_ff: 256,
            branch: BranchMode::Dual,
            positional: Positional::None,
        }
    }
}

impl DualConfig {
    fn encoder(&self, layers: usize) -> EncoderConfig {
        EncoderConfig {
            d_model: self.d_model,
            heads: self.heads,
            layers,
            d_ff: self.d_ff,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.branch.spatial() {
            self.encoder(self.spatial_layers).validate()?;
        }
        if self.branch.temporal() {
            self.encoder(self.temporal_layers).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Branch {
    proj_w: ParamId,
    proj_b: ParamId,
    pos: Option<ParamId>,
    encoder: EncoderParams,
}

impl Branch {
    #[allow(clippy::too_many_arguments)]
    fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        cfg: &DualConfig,
        layers: usize,
        tokens: usize,
        features: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let d = cfg.d_model;
        let proj_w = store.add(
            format!("{prefix}.proj.w"),
            init::fan_in_uniform(rng, features, d, features),
        );
        let proj_b = store.add(format!("{prefix}.proj.b"), init::zeros(d));
        let pos = match cfg.positional {
            Positional::None => None,
            Positional::Learned => Some(store.add(format!("{prefix}.pos"), init::fan_in_uniform(rng, tokens, d, d))),
        };
        let encoder = EncoderParams::register(store, prefix, cfg.encoder(layers), rng)?;
        Ok(Branch {
            proj_w,
            proj_b,
            pos,
            encoder,
        })
    }

    fn run(&self, tape: &mut Tape, b: &Binding, tokens: Var) -> Result<Var> {
        let z = tape.matmul(tokens, b[self.proj_w])?;
        let mut z = tape.add_row(z, b[self.proj_b])?;
        if let Some(pos) = self.pos {
            z = tape.add(z, b[pos])?;
        }
        encode(tape, b, &self.encoder, z)
    }
}

/// Segment tokens: row `i` is the history of node `i`, an `N×L` matrix.
pub fn spatial_tokens(window: &Tensor) -> Tensor {
    window.transpose()
}

/// Time-step tokens: row `t` is the snapshot of every node at step `t`. The
/// window is already in this orientation.
pub fn temporal_tokens(window: &Tensor) -> Tensor {
    window.clone()
}

#[derive(Debug, Clone)]
pub struct DualTransformer {
    config: DualConfig,
    nodes: usize,
    lookback: usize,
    horizon: usize,
    store: ParamStore,
    spatial: Option<Branch>,
    temporal: Option<Branch>,
    head_w: ParamId,
    head_b: ParamId,
}

impl DualTransformer {
    pub fn new<R: Rng>(config: DualConfig, nodes: usize, lookback: usize, horizon: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if nodes == 0 || lookback == 0 || horizon == 0 {
            return Err(Error::Config(format!(
                "nodes ({nodes}), lookback ({lookback}) and horizon ({horizon}) must be ≥ 1"
            )));
        }
        let mut store = ParamStore::new();
        let spatial = if config.branch.spatial() {
            Some(Branch::register(
                &mut store,
                "spatial",
                &config,
                config.spatial_layers,
                nodes,
                lookback,
                rng,
            )?)
        } else {
            None
        };
        let temporal = if config.branch.temporal() {
            Some(Branch::register(
                &mut store,
                "temporal",
                &config,
                config.temporal_layers,
                lookback,
                nodes,
                rng,
            )?)
        } else {
            None
        };
        let width = config.d_model * usize::from(spatial.is_some()) + config.d_model * usize::from(temporal.is_some());
        let head_w = store.add("head.w", init::fan_in_uniform(rng, width, horizon, width));
        let head_b = store.add("head.b", init::zeros(horizon));
        Ok(DualTransformer {
            config,
            nodes,
            lookback,
            horizon,
            store,
            spatial,
            temporal,
            head_w,
            head_b,
        })
    }

    pub fn config(&self) -> DualConfig {
        self.config
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn parameter_count(&self) -> usize {
        self.store.num_scalars()
    }

    pub fn load_checkpoint(&mut self, path: &Path) -> Result<()> {
        self.store.load_into(path)
    }

    /// Pooled temporal context `1×d`, or `None` in spatial-only mode.
    pub fn temporal_context(&self, tape: &mut Tape, b: &Binding, window: Var) -> Result<Option<Var>> {
        match &self.temporal {
            None => Ok(None),
            Some(br) => {
                let ht = br.run(tape, b, window)?;
                tape.mean_rows(ht).map(Some)
            }
        }
    }
}

impl Forecaster for DualTransformer {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn nodes(&self) -> usize {
        self.nodes
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn forward(&self, tape: &mut Tape, b: &Binding, window: Var) -> Result<Var> {
        let w = tape.value(window);
        check_window(w, self.nodes, "student")?;
        if w.rows() != self.lookback {
            return Err(Error::Config(format!(
                "student expects a lookback of {}, got {}",
                self.lookback,
                w.rows()
            )));
        }
        let hs = match &self.spatial {
            Some(br) => {
                let tokens = tape.transpose(window)?;
                Some(br.run(tape, b, tokens)?)
            }
            None => None,
        };
        let ctx = match self.temporal_context(tape, b, window)? {
            Some(c) => Some(tape.broadcast_rows(c, self.nodes)?),
            None => None,
        };
        let features = match (hs, ctx) {
            (Some(s), Some(c)) => tape.concat_cols(s, c)?,
            (Some(s), None) => s,
            (None, Some(c)) => c,
            (None, None) => unreachable!("at least one branch is always built"),
        };
        let y = tape.matmul(features, b[self.head_w])?;
        tape.add_row(y, b[self.head_b])
    }
}
