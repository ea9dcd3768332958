use super::kernels::{matmul_acc, matmul_nt_acc, matmul_tn_acc, transpose_into};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Affine(usize, f64),
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    ConcatCols(usize, usize),
    SliceCols(usize, usize),
    Transpose(usize),
    GatherRows(usize, Vec<usize>),
    MeanRows(usize),
    BroadcastRows(usize),
    SoftmaxRows(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Sum(usize),
    Mse(usize, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Affine(..) => "affine",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceCols(..) => "slice_cols",
            Op::Transpose(_) => "transpose",
            Op::GatherRows(..) => "gather_rows",
            Op::MeanRows(_) => "mean_rows",
            Op::BroadcastRows(_) => "broadcast_rows",
            Op::SoftmaxRows(_) => "softmax_rows",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Sum(_) => "sum",
            Op::Mse(..) => "mse",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run record of a forward computation.
///
/// Nodes are appended in execution order, so inputs always precede the
/// operations that consume them. [`Tape::backward`] accumulates into per-leaf
/// gradient buffers; calling it twice without [`Tape::zero_grads`] doubles them.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a trainable leaf. Gradients are collected for it.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.record(t.clone().strip_grad(), Op::Leaf, true)
    }

    /// Registers a value that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.record(t.strip_grad(), Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if backward reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.leaf_grads[v.0].as_deref()
    }

    pub fn zero_grads(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    fn record(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op.name().to_string()));
        }
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        Ok(self.record(value, op, requires_grad))
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.dims(a), self.dims(b));
        if sa != sb {
            return Err(Error::dim(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::dim("matmul", format!("[{m}x{k}] x [{k2}x{n}]")));
        }
        let mut out = vec![0.0; m * n];
        matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a.0, b.0), &[a.0, b.0])
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(op.name(), a, b)?;
        let ta = self.value(a);
        let data = ta
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(t, op, &[a.0, b.0])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Add(a.0, b.0), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Sub(a.0, b.0), |x, y| x - y)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Mul(a.0, b.0), |x, y| x * y)
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        let tb = self.value(bias);
        if tb.len() != n {
            return Err(Error::dim(
                "add_row",
                format!("bias of {} values for {n} columns", tb.len()),
            ));
        }
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(n) {
            row.iter_mut().zip(tb.data()).for_each(|(x, b)| *x += b);
        }
        self.push(Tensor::matrix(m, n, data)?, Op::AddRow(a.0, bias.0), &[a.0, bias.0])
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        let t = self.value(a);
        let data = t.data().iter().map(|x| scale * x + shift).collect();
        let t = Tensor::new(t.shape().to_vec(), data)?;
        self.push(t, Op::Affine(a.0, scale), &[a.0])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.affine(a, c, 0.0)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| f(x)).collect();
        let t = Tensor::new(t.shape().to_vec(), data)?;
        self.push(t, op, &[a.0])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Relu(a.0), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Sigmoid(a.0), |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Tanh(a.0), f64::tanh)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, na) = self.dims(a);
        let (mb, nb) = self.dims(b);
        if ma != mb {
            return Err(Error::dim("concat_cols", format!("{ma} rows vs {mb} rows")));
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let mut data = Vec::with_capacity(ma * (na + nb));
        for i in 0..ma {
            data.extend_from_slice(ta.row(i));
            data.extend_from_slice(tb.row(i));
        }
        self.push(
            Tensor::matrix(ma, na + nb, data)?,
            Op::ConcatCols(a.0, b.0),
            &[a.0, b.0],
        )
    }

    /// Columns `[start, start + width)`.
    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let (m, n) = self.dims(a);
        if start + width > n {
            return Err(Error::dim(
                "slice_cols",
                format!("[{start}, {}) out of {n} columns", start + width),
            ));
        }
        let t = self.value(a);
        let mut data = Vec::with_capacity(m * width);
        for i in 0..m {
            data.extend_from_slice(&t.row(i)[start..start + width]);
        }
        self.push(Tensor::matrix(m, width, data)?, Op::SliceCols(a.0, start), &[a.0])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).transpose();
        self.push(t, Op::Transpose(a.0), &[a.0])
    }

    /// Output row `r` is input row `idx[r]`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let m = self.dims(a).0;
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(Error::dim("gather_rows", format!("row {bad} of {m}")));
        }
        let t = self.value(a).select_rows(idx);
        self.push(t, Op::GatherRows(a.0, idx.to_vec()), &[a.0])
    }

    /// Column means: `m×n -> 1×n`. Each column is summed in ascending value
    /// order, so the result does not depend on row order.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        if m == 0 {
            return Err(Error::dim("mean_rows", "no rows"));
        }
        let t = self.value(a);
        let mut out = vec![0.0; n];
        let mut col = vec![0.0; m];
        for (j, o) in out.iter_mut().enumerate() {
            for (i, c) in col.iter_mut().enumerate() {
                *c = t.get(i, j);
            }
            col.sort_unstable_by(f64::total_cmp);
            *o = col.iter().sum::<f64>() / m as f64;
        }
        self.push(Tensor::matrix(1, n, out)?, Op::MeanRows(a.0), &[a.0])
    }

    /// Repeats a single row `m` times.
    pub fn broadcast_rows(&mut self, a: Var, m: usize) -> Result<Var> {
        let (r, n) = self.dims(a);
        if r != 1 {
            return Err(Error::dim("broadcast_rows", format!("expected one row, got {r}")));
        }
        let row = self.value(a).data();
        let data = row.repeat(m);
        self.push(Tensor::matrix(m, n, data)?, Op::BroadcastRows(a.0), &[a.0])
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        let t = self.value(a);
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(n.max(1)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            let inv = 1.0 / total;
            row.iter_mut().for_each(|x| *x *= inv);
        }
        self.push(Tensor::matrix(m, n, data)?, Op::SoftmaxRows(a.0), &[a.0])
    }

    /// Per-row normalization with population variance, then `gain * x̂ + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (m, d) = self.dims(x);
        if d == 0 {
            return Err(Error::dim("layer_norm", "zero-width rows"));
        }
        let (tg, tb) = (self.value(gain), self.value(bias));
        if tg.len() != d || tb.len() != d {
            return Err(Error::dim(
                "layer_norm",
                format!("gain {} / bias {} for width {d}", tg.len(), tb.len()),
            ));
        }
        let tx = self.value(x);
        let mut xhat = vec![0.0; m * d];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * d];
        for i in 0..m {
            let row = tx.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let s = 1.0 / (var + eps).sqrt();
            inv_std[i] = s;
            for j in 0..d {
                let h = (row[j] - mean) * s;
                xhat[i * d + j] = h;
                out[i * d + j] = h * tg.data()[j] + tb.data()[j];
            }
        }
        let op = Op::LayerNorm {
            x: x.0,
            gain: gain.0,
            bias: bias.0,
            xhat,
            inv_std,
        };
        self.push(Tensor::matrix(m, d, out)?, op, &[x.0, gain.0, bias.0])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a.0), &[a.0])
    }

    /// Mean of squared elementwise differences, as a scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let n = ta.len();
        if n == 0 {
            return Err(Error::dim("mse", "empty operands"));
        }
        let s: f64 = ta.data().iter().zip(tb.data()).map(|(x, y)| (x - y) * (x - y)).sum();
        self.push(Tensor::scalar(s / n as f64), Op::Mse(a.0, b.0), &[a.0, b.0])
    }

    /// Reverse pass from a scalar. Every record is visited at most once, in
    /// reverse recording order; leaf gradients accumulate across calls.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if !g.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {}", node.op.name())));
            }
            let nodes = &self.nodes;
            let needs = |j: usize| nodes[j].requires_grad;
            let dims = |j: usize| (nodes[j].value.rows(), nodes[j].value.cols());
            let val = |j: usize| nodes[j].value.data();

            match &node.op {
                Op::Leaf => {
                    let acc = self.leaf_grads[i].get_or_insert_with(|| vec![0.0; g.len()]);
                    acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                Op::Constant => {}
                &Op::MatMul(a, b) => {
                    let (m, k) = dims(a);
                    let n = dims(b).1;
                    if needs(a) {
                        matmul_nt_acc(&g, val(b), slot(&mut adj, a, m * k), m, n, k);
                    }
                    if needs(b) {
                        matmul_tn_acc(val(a), &g, slot(&mut adj, b, k * n), m, k, n);
                    }
                }
                &Op::Add(a, b) => {
                    for p in [a, b] {
                        if needs(p) {
                            add_into(slot(&mut adj, p, g.len()), &g);
                        }
                    }
                }
                &Op::Sub(a, b) => {
                    if needs(a) {
                        add_into(slot(&mut adj, a, g.len()), &g);
                    }
                    if needs(b) {
                        let s = slot(&mut adj, b, g.len());
                        s.iter_mut().zip(&g).for_each(|(x, y)| *x -= y);
                    }
                }
                &Op::Mul(a, b) => {
                    if needs(a) {
                        let s = slot(&mut adj, a, g.len());
                        for ((x, gy), bv) in s.iter_mut().zip(&g).zip(val(b)) {
                            *x += gy * bv;
                        }
                    }
                    if needs(b) {
                        let s = slot(&mut adj, b, g.len());
                        for ((x, gy), av) in s.iter_mut().zip(&g).zip(val(a)) {
                            *x += gy * av;
                        }
                    }
                }
                &Op::AddRow(a, bias) => {
                    if needs(a) {
                        add_into(slot(&mut adj, a, g.len()), &g);
                    }
                    if needs(bias) {
                        let n = dims(a).1;
                        let s = slot(&mut adj, bias, n);
                        for row in g.chunks(n) {
                            add_into(s, row);
                        }
                    }
                }
                &Op::Affine(a, c) => {
                    let s = slot(&mut adj, a, g.len());
                    s.iter_mut().zip(&g).for_each(|(x, y)| *x += c * y);
                }
                &Op::Relu(a) => {
                    let s = slot(&mut adj, a, g.len());
                    for ((x, gy), av) in s.iter_mut().zip(&g).zip(val(a)) {
                        if *av > 0.0 {
                            *x += gy;
                        }
                    }
                }
                &Op::Sigmoid(a) => {
                    let s = slot(&mut adj, a, g.len());
                    for ((x, gy), y) in s.iter_mut().zip(&g).zip(node.value.data()) {
                        *x += gy * y * (1.0 - y);
                    }
                }
                &Op::Tanh(a) => {
                    let s = slot(&mut adj, a, g.len());
                    for ((x, gy), y) in s.iter_mut().zip(&g).zip(node.value.data()) {
                        *x += gy * (1.0 - y * y);
                    }
                }
                &Op::ConcatCols(a, b) => {
                    let (m, na) = dims(a);
                    let nb = dims(b).1;
                    let w = na + nb;
                    if needs(a) {
                        let s = slot(&mut adj, a, m * na);
                        for r in 0..m {
                            add_into(&mut s[r * na..(r + 1) * na], &g[r * w..r * w + na]);
                        }
                    }
                    if needs(b) {
                        let s = slot(&mut adj, b, m * nb);
                        for r in 0..m {
                            add_into(&mut s[r * nb..(r + 1) * nb], &g[r * w + na..(r + 1) * w]);
                        }
                    }
                }
                &Op::SliceCols(a, start) => {
                    let (m, n) = dims(a);
                    let width = node.value.cols();
                    let s = slot(&mut adj, a, m * n);
                    for r in 0..m {
                        add_into(
                            &mut s[r * n + start..r * n + start + width],
                            &g[r * width..(r + 1) * width],
                        );
                    }
                }
                &Op::Transpose(a) => {
                    let (m, n) = dims(a);
                    let mut t = vec![0.0; m * n];
                    // g is n×m
                    transpose_into(&g, n, m, &mut t);
                    add_into(slot(&mut adj, a, m * n), &t);
                }
                Op::GatherRows(a, idx) => {
                    let (m, n) = dims(*a);
                    let s = slot(&mut adj, *a, m * n);
                    for (r, &src) in idx.iter().enumerate() {
                        add_into(&mut s[src * n..(src + 1) * n], &g[r * n..(r + 1) * n]);
                    }
                }
                &Op::MeanRows(a) => {
                    let (m, n) = dims(a);
                    let inv = 1.0 / m as f64;
                    let s = slot(&mut adj, a, m * n);
                    for row in s.chunks_mut(n) {
                        row.iter_mut().zip(&g).for_each(|(x, y)| *x += y * inv);
                    }
                }
                &Op::BroadcastRows(a) => {
                    let n = dims(a).1;
                    let s = slot(&mut adj, a, n);
                    for row in g.chunks(n) {
                        add_into(s, row);
                    }
                }
                &Op::SoftmaxRows(a) => {
                    let n = dims(a).1;
                    let y = node.value.data();
                    let s = slot(&mut adj, a, g.len());
                    for ((srow, grow), yrow) in s.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(p, q)| p * q).sum();
                        for ((x, gy), yv) in srow.iter_mut().zip(grow).zip(yrow) {
                            *x += yv * (gy - dot);
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let (x, gain, bias) = (*x, *gain, *bias);
                    let (m, d) = dims(x);
                    if needs(gain) {
                        let s = slot(&mut adj, gain, d);
                        for (grow, hrow) in g.chunks(d).zip(xhat.chunks(d)) {
                            for ((sv, gy), h) in s.iter_mut().zip(grow).zip(hrow) {
                                *sv += gy * h;
                            }
                        }
                    }
                    if needs(bias) {
                        let s = slot(&mut adj, bias, d);
                        for grow in g.chunks(d) {
                            add_into(s, grow);
                        }
                    }
                    if needs(x) {
                        let gv = val(gain);
                        let s = slot(&mut adj, x, m * d);
                        let mut dxhat = vec![0.0; d];
                        for r in 0..m {
                            let grow = &g[r * d..(r + 1) * d];
                            let hrow = &xhat[r * d..(r + 1) * d];
                            for j in 0..d {
                                dxhat[j] = grow[j] * gv[j];
                            }
                            let mean_d = dxhat.iter().sum::<f64>() / d as f64;
                            let mean_dh = dxhat.iter().zip(hrow).map(|(p, q)| p * q).sum::<f64>() / d as f64;
                            let srow = &mut s[r * d..(r + 1) * d];
                            for j in 0..d {
                                srow[j] += inv_std[r] * (dxhat[j] - mean_d - hrow[j] * mean_dh);
                            }
                        }
                    }
                }
                &Op::Sum(a) => {
                    let s = slot(&mut adj, a, val(a).len());
                    s.iter_mut().for_each(|x| *x += g[0]);
                }
                &Op::Mse(a, b) => {
                    let (av, bv) = (val(a), val(b));
                    let c = 2.0 * g[0] / av.len() as f64;
                    if needs(a) {
                        let s = slot(&mut adj, a, av.len());
                        for ((x, p), q) in s.iter_mut().zip(av).zip(bv) {
                            *x += c * (p - q);
                        }
                    }
                    if needs(b) {
                        let s = slot(&mut adj, b, av.len());
                        for ((x, p), q) in s.iter_mut().zip(av).zip(bv) {
                            *x -= c * (p - q);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn slot(adj: &mut [Option<Vec<f64>>], i: usize, len: usize) -> &mut Vec<f64> {
    adj[i].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}
