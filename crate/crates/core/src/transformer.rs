//! Pre-norm transformer encoder shared by the spatial and temporal branches.
//!
//! ```text
//! z' = MSA(LN(z)) + z
//! z  = MLP(LN(z')) + z'
//! H  = LN(z_last)
//! ```
//!
//! Self-attention uses the tokens as queries, keys and values. Keys and values
//! are visited in a canonical row order (lexicographic on the token values),
//! which makes every reduction over the token axis independent of input row
//! order: permuting the tokens permutes the output rows bit-for-bit.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init;
use crate::tensor::{Binding, ParamId, ParamStore, Tape, Tensor, Var};

pub const LN_EPS: f64 = 1e-5;

/// Encoder hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub d_ff: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "heads ({}) must divide d_model ({})",
                self.heads, self.d_model
            )));
        }
        if self.layers == 0 {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        if self.d_ff < self.d_model {
            return Err(Error::Config(format!(
                "d_ff ({}) must be at least d_model ({})",
                self.d_ff, self.d_model
            )));
        }
        Ok(())
    }

    pub fn d_k(&self) -> usize {
        self.d_model / self.heads
    }

    /// Trainable scalars in one encoder layer.
    pub fn layer_param_count(&self) -> usize {
        let d = self.d_model;
        4 * d * d + 4 * d + 2 * d * self.d_ff + self.d_ff + d
    }
}

/// Query/key/value projections for all heads plus the output projection.
///
/// Head `i` owns columns `[i·d_k, (i+1)·d_k)` of `w_q`, `w_k` and `w_v`;
/// storing the per-head matrices side by side is equivalent to separate
/// `d_model×d_k` matrices.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub w_o: ParamId,
    pub heads: usize,
    pub d_k: usize,
}

#[derive(Debug, Clone)]
pub struct LayerParams {
    pub attn: AttentionParams,
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
    pub mlp_w1: ParamId,
    pub mlp_b1: ParamId,
    pub mlp_w2: ParamId,
    pub mlp_b2: ParamId,
}

#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub layers: Vec<LayerParams>,
    pub final_gain: ParamId,
    pub final_bias: ParamId,
}

impl EncoderParams {
    /// Registers a freshly initialized encoder under `prefix`.
    pub fn register<R: Rng>(store: &mut ParamStore, prefix: &str, config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let ff = config.d_ff;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = format!("{prefix}.layer{l}");
            let attn = AttentionParams {
                w_q: store.add(format!("{p}.attn.w_q"), init::fan_in_uniform(rng, d, d, d)),
                w_k: store.add(format!("{p}.attn.w_k"), init::fan_in_uniform(rng, d, d, d)),
                w_v: store.add(format!("{p}.attn.w_v"), init::fan_in_uniform(rng, d, d, d)),
                w_o: store.add(format!("{p}.attn.w_o"), init::fan_in_uniform(rng, d, d, d)),
                heads: config.heads,
                d_k: config.d_k(),
            };
            layers.push(LayerParams {
                attn,
                ln1_gain: store.add(format!("{p}.ln1.gain"), init::ones(d)),
                ln1_bias: store.add(format!("{p}.ln1.bias"), init::zeros(d)),
                ln2_gain: store.add(format!("{p}.ln2.gain"), init::ones(d)),
                ln2_bias: store.add(format!("{p}.ln2.bias"), init::zeros(d)),
                mlp_w1: store.add(format!("{p}.mlp.w1"), init::fan_in_uniform(rng, d, ff, d)),
                mlp_b1: store.add(format!("{p}.mlp.b1"), init::zeros(ff)),
                mlp_w2: store.add(format!("{p}.mlp.w2"), init::fan_in_uniform(rng, ff, d, ff)),
                mlp_b2: store.add(format!("{p}.mlp.b2"), init::zeros(d)),
            });
        }
        Ok(EncoderParams {
            config,
            layers,
            final_gain: store.add(format!("{prefix}.final_ln.gain"), init::ones(d)),
            final_bias: store.add(format!("{prefix}.final_ln.bias"), init::zeros(d)),
        })
    }
}

/// Row indices sorted lexicographically by row contents.
pub fn canonical_row_order(t: &Tensor) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..t.rows()).collect();
    idx.sort_by(|&a, &b| {
        t.row(a)
            .iter()
            .zip(t.row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    idx
}

/// Multi-head self-attention over `n` tokens of width `d_model`.
pub fn multi_head_self_attention(tape: &mut Tape, b: &Binding, p: &AttentionParams, x: Var) -> Result<Var> {
    attention_with_weights(tape, b, p, x).map(|(out, _)| out)
}

/// Like [`multi_head_self_attention`], also returning each head's attention
/// matrix. Column `j` of a weight matrix refers to key
/// `canonical_row_order(x)[j]`.
pub fn attention_with_weights(tape: &mut Tape, b: &Binding, p: &AttentionParams, x: Var) -> Result<(Var, Vec<Var>)> {
    let d_model = p.heads * p.d_k;
    let width = tape.value(x).cols();
    if width != d_model {
        return Err(Error::dim(
            "multi_head_self_attention",
            format!("token width {width}, attention expects {d_model}"),
        ));
    }
    let order = canonical_row_order(tape.value(x));
    let kv_src = tape.gather_rows(x, &order)?;
    let q = tape.matmul(x, b[p.w_q])?;
    let k = tape.matmul(kv_src, b[p.w_k])?;
    let v = tape.matmul(kv_src, b[p.w_v])?;
    let scale = 1.0 / (p.d_k as f64).sqrt();

    let mut heads_out: Option<Var> = None;
    let mut weights = Vec::with_capacity(p.heads);
    for h in 0..p.heads {
        let start = h * p.d_k;
        let qh = tape.slice_cols(q, start, p.d_k)?;
        let kh = tape.slice_cols(k, start, p.d_k)?;
        let vh = tape.slice_cols(v, start, p.d_k)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, scale)?;
        let attn = tape.softmax_rows(scores)?;
        weights.push(attn);
        let head = tape.matmul(attn, vh)?;
        heads_out = Some(match heads_out {
            None => head,
            Some(acc) => tape.concat_cols(acc, head)?,
        });
    }
    let concat = heads_out.expect("at least one head");
    let out = tape.matmul(concat, b[p.w_o])?;
    Ok((out, weights))
}

fn mlp(tape: &mut Tape, b: &Binding, p: &LayerParams, x: Var) -> Result<Var> {
    let h = tape.matmul(x, b[p.mlp_w1])?;
    let h = tape.add_row(h, b[p.mlp_b1])?;
    let h = tape.relu(h)?;
    let o = tape.matmul(h, b[p.mlp_w2])?;
    tape.add_row(o, b[p.mlp_b2])
}

/// One pre-norm layer: `z' = MSA(LN(z)) + z`, then `MLP(LN(z')) + z'`.
pub fn encoder_layer(tape: &mut Tape, b: &Binding, p: &LayerParams, z: Var) -> Result<Var> {
    let n1 = tape.layer_norm(z, b[p.ln1_gain], b[p.ln1_bias], LN_EPS)?;
    let a = multi_head_self_attention(tape, b, &p.attn, n1)?;
    let z1 = tape.add(a, z)?;
    let n2 = tape.layer_norm(z1, b[p.ln2_gain], b[p.ln2_bias], LN_EPS)?;
    let m = mlp(tape, b, p, n2)?;
    tape.add(m, z1)
}

/// Applies every layer in order followed by the final layer norm.
pub fn encode(tape: &mut Tape, b: &Binding, p: &EncoderParams, z0: Var) -> Result<Var> {
    let mut z = z0;
    for layer in &p.layers {
        z = encoder_layer(tape, b, layer, z)?;
    }
    tape.layer_norm(z, b[p.final_gain], b[p.final_bias], LN_EPS)
}
