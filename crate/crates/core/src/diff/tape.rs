//! Reverse-mode differentiation on a linear tape.
//!
//! Every operation appends a node holding its forward value and the handles
//! of its operands. Nodes are appended in evaluation order, so walking the
//! tape backwards from the loss visits each node after all of its consumers.

use std::sync::Arc;

use rand::Rng as _;

use super::gemm::gemm;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    GatherRows {
        x: Var,
        idx: Arc<[usize]>,
    },
    ScatterAddRows {
        x: Var,
        idx: Arc<[usize]>,
    },
    RepeatCols {
        x: Var,
        times: usize,
    },
    RepeatRows {
        x: Var,
        times: usize,
    },
    Reshape(Var),
    Transpose(Var),
    HeadDot {
        x: Var,
        a: Var,
    },
    SoftmaxGroups {
        x: Var,
        groups: Arc<[usize]>,
        n_groups: usize,
    },
    LeakyRelu(Var, f64),
    Relu(Var),
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    Conv1d {
        x: Var,
        k: Var,
        steps: usize,
    },
    Mean {
        x: Var,
        axis: Option<usize>,
    },
    Sum(Var),
    Huber {
        pred: Var,
        target: Vec<f64>,
        delta: f64,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddBias(..) => "add_bias",
            Op::Scale(..) => "scale",
            Op::Concat { .. } => "concat",
            Op::SliceRows { .. } => "slice_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::GatherRows { .. } => "gather_rows",
            Op::ScatterAddRows { .. } => "scatter_add_rows",
            Op::RepeatCols { .. } => "repeat_cols",
            Op::RepeatRows { .. } => "repeat_rows",
            Op::Reshape(..) => "reshape",
            Op::Transpose(..) => "transpose",
            Op::HeadDot { .. } => "head_dot",
            Op::SoftmaxGroups { .. } => "softmax_over_groups",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Relu(..) => "relu",
            Op::Dropout { .. } => "dropout",
            Op::Conv1d { .. } => "conv1d_same",
            Op::Mean { .. } => "mean",
            Op::Sum(..) => "sum",
            Op::Huber { .. } => "huber",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradient tape. One tape records one forward pass; call [`Tape::reset`]
/// before recording another.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads.clear();
        self.backward_done = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward pass with respect to `v`, if `v` is a
    /// trainable leaf reachable from the loss.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if let Some(bad) = value.data().iter().find(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "{} produced a non-finite value ({bad})",
                op.name()
            )));
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        Ok(self.push_unchecked(value, op, needs_grad))
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dims2()
    }

    fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes[v.0].value.shape().to_vec()
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::Shape {
            op,
            left: self.shape(a),
            right: self.shape(b),
        }
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(self.shape_err("matmul", a, b));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.data(a),
            false,
            self.data(b),
            false,
            0.0,
            &mut out,
        );
        self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), &[a, b])
    }

    fn zip_same(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Vec<f64>> {
        if self.shape(a) != self.shape(b) {
            return Err(self.shape_err(op, a, b));
        }
        Ok(self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        let shape = self.shape(a);
        self.push(Tensor::new(&shape, out)?, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        let shape = self.shape(a);
        self.push(Tensor::new(&shape, out)?, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        let shape = self.shape(a);
        self.push(Tensor::new(&shape, out)?, Op::Mul(a, b), &[a, b])
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.dims(x);
        if self.nodes[bias.0].value.len() != n {
            return Err(self.shape_err("add_bias", x, bias));
        }
        let b = self.data(bias);
        let mut out = self.data(x).to_vec();
        for row in out.chunks_mut(n.max(1)).take(m) {
            for (o, bj) in row.iter_mut().zip(b) {
                *o += bj;
            }
        }
        let shape = self.shape(x);
        self.push(Tensor::new(&shape, out)?, Op::AddBias(x, bias), &[x, bias])
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let out = self.data(x).iter().map(|v| v * s).collect();
        let shape = self.shape(x);
        self.push(Tensor::new(&shape, out)?, Op::Scale(x, s), &[x])
    }

    /// Concatenates matrices along rows (`axis = 0`) or columns (`axis = 1`).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::InvalidInput("concat of zero tensors".into()));
        }
        let dims: Vec<(usize, usize)> = parts.iter().map(|&p| self.dims(p)).collect();
        let out = match axis {
            0 => {
                let cols = dims[0].1;
                if let Some(i) = dims.iter().position(|d| d.1 != cols) {
                    return Err(self.shape_err("concat", parts[0], parts[i]));
                }
                let rows: usize = dims.iter().map(|d| d.0).sum();
                let mut out = Vec::with_capacity(rows * cols);
                for &p in parts {
                    out.extend_from_slice(self.data(p));
                }
                Tensor::new(&[rows, cols], out)?
            }
            1 => {
                let rows = dims[0].0;
                if let Some(i) = dims.iter().position(|d| d.0 != rows) {
                    return Err(self.shape_err("concat", parts[0], parts[i]));
                }
                let cols: usize = dims.iter().map(|d| d.1).sum();
                let mut out = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for (&p, &(_, c)) in parts.iter().zip(&dims) {
                        out.extend_from_slice(&self.data(p)[r * c..(r + 1) * c]);
                    }
                }
                Tensor::new(&[rows, cols], out)?
            }
            _ => {
                return Err(Error::InvalidInput(format!(
                    "concat axis {axis} unsupported"
                )))
            }
        };
        self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            parts,
        )
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.dims(x);
        if start > end || end > m {
            return Err(Error::Shape {
                op: "slice_rows",
                left: self.shape(x),
                right: vec![start, end],
            });
        }
        let out = self.data(x)[start * n..end * n].to_vec();
        self.push(
            Tensor::new(&[end - start, n], out)?,
            Op::SliceRows { x, start },
            &[x],
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.dims(x);
        if start > end || end > n {
            return Err(Error::Shape {
                op: "slice_cols",
                left: self.shape(x),
                right: vec![start, end],
            });
        }
        let w = end - start;
        let src = self.data(x);
        let mut out = Vec::with_capacity(m * w);
        for r in 0..m {
            out.extend_from_slice(&src[r * n + start..r * n + end]);
        }
        self.push(Tensor::new(&[m, w], out)?, Op::SliceCols { x, start }, &[x])
    }

    /// `out[i] = x[idx[i]]` row-wise.
    pub fn gather_rows(&mut self, x: Var, idx: &Arc<[usize]>) -> Result<Var> {
        let (m, n) = self.dims(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(Error::InvalidInput(format!(
                "gather index {bad} out of range for {m} rows"
            )));
        }
        let src = self.data(x);
        let mut out = Vec::with_capacity(idx.len() * n);
        for &i in idx.iter() {
            out.extend_from_slice(&src[i * n..(i + 1) * n]);
        }
        self.push(
            Tensor::new(&[idx.len(), n], out)?,
            Op::GatherRows {
                x,
                idx: idx.clone(),
            },
            &[x],
        )
    }

    /// `out[idx[i]] += x[i]` into `rows` output rows.
    pub fn scatter_add_rows(&mut self, x: Var, idx: &Arc<[usize]>, rows: usize) -> Result<Var> {
        let (m, n) = self.dims(x);
        if idx.len() != m {
            return Err(Error::Shape {
                op: "scatter_add_rows",
                left: self.shape(x),
                right: vec![idx.len()],
            });
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::InvalidInput(format!(
                "scatter index {bad} out of range for {rows} rows"
            )));
        }
        let src = self.data(x);
        let mut out = vec![0.0; rows * n];
        for (e, &i) in idx.iter().enumerate() {
            for (o, s) in out[i * n..(i + 1) * n]
                .iter_mut()
                .zip(&src[e * n..(e + 1) * n])
            {
                *o += s;
            }
        }
        self.push(
            Tensor::new(&[rows, n], out)?,
            Op::ScatterAddRows {
                x,
                idx: idx.clone(),
            },
            &[x],
        )
    }

    /// Repeats every column `times` times in place: `[r, h] -> [r, h*times + j]`.
    pub fn repeat_cols(&mut self, x: Var, times: usize) -> Result<Var> {
        let (m, n) = self.dims(x);
        let src = self.data(x);
        let mut out = Vec::with_capacity(m * n * times);
        for &v in src {
            out.extend(std::iter::repeat(v).take(times));
        }
        self.push(
            Tensor::new(&[m, n * times], out)?,
            Op::RepeatCols { x, times },
            &[x],
        )
    }

    /// Repeats every row `times` times consecutively: `[r] -> [r*times + t]`.
    pub fn repeat_rows(&mut self, x: Var, times: usize) -> Result<Var> {
        let (m, n) = self.dims(x);
        let src = self.data(x);
        let mut out = Vec::with_capacity(m * n * times);
        for r in 0..m {
            for _ in 0..times {
                out.extend_from_slice(&src[r * n..(r + 1) * n]);
            }
        }
        self.push(
            Tensor::new(&[m * times, n], out)?,
            Op::RepeatRows { x, times },
            &[x],
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.nodes[x.0].value.clone().reshaped(shape)?;
        self.push(t, Op::Reshape(x), &[x])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.dims(x);
        let src = self.data(x);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        self.push(Tensor::new(&[n, m], out)?, Op::Transpose(x), &[x])
    }

    /// Per-head dot products: `x` is `R×(H·c)`, `a` is `H×c`, output `R×H`
    /// with `out[r, h] = Σ_j x[r, h·c + j] · a[h, j]`.
    pub fn head_dot(&mut self, x: Var, a: Var) -> Result<Var> {
        let (r, w) = self.dims(x);
        let (h, c) = self.dims(a);
        if h * c != w {
            return Err(self.shape_err("head_dot", x, a));
        }
        let xs = self.data(x);
        let av = self.data(a);
        let mut out = vec![0.0; r * h];
        for i in 0..r {
            let row = &xs[i * w..(i + 1) * w];
            for hh in 0..h {
                out[i * h + hh] = row[hh * c..(hh + 1) * c]
                    .iter()
                    .zip(&av[hh * c..(hh + 1) * c])
                    .map(|(p, q)| p * q)
                    .sum();
            }
        }
        self.push(Tensor::new(&[r, h], out)?, Op::HeadDot { x, a }, &[x, a])
    }

    /// Softmax over the rows sharing a group id, independently per column.
    pub fn softmax_over_groups(
        &mut self,
        x: Var,
        groups: &Arc<[usize]>,
        n_groups: usize,
    ) -> Result<Var> {
        let (m, n) = self.dims(x);
        if groups.len() != m {
            return Err(Error::Shape {
                op: "softmax_over_groups",
                left: self.shape(x),
                right: vec![groups.len()],
            });
        }
        if let Some(&bad) = groups.iter().find(|&&g| g >= n_groups) {
            return Err(Error::InvalidInput(format!("group id {bad} >= {n_groups}")));
        }
        let xs = self.data(x);
        let mut maxv = vec![f64::NEG_INFINITY; n_groups * n];
        for (e, &g) in groups.iter().enumerate() {
            for j in 0..n {
                let s = &mut maxv[g * n + j];
                *s = s.max(xs[e * n + j]);
            }
        }
        let mut out = vec![0.0; m * n];
        let mut denom = vec![0.0; n_groups * n];
        for (e, &g) in groups.iter().enumerate() {
            for j in 0..n {
                let v = (xs[e * n + j] - maxv[g * n + j]).exp();
                out[e * n + j] = v;
                denom[g * n + j] += v;
            }
        }
        for (e, &g) in groups.iter().enumerate() {
            for j in 0..n {
                out[e * n + j] /= denom[g * n + j];
            }
        }
        let shape = self.shape(x);
        self.push(
            Tensor::new(&shape, out)?,
            Op::SoftmaxGroups {
                x,
                groups: groups.clone(),
                n_groups,
            },
            &[x],
        )
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let out = self
            .data(x)
            .iter()
            .map(|&v| if v > 0.0 { v } else { slope * v })
            .collect();
        let shape = self.shape(x);
        self.push(Tensor::new(&shape, out)?, Op::LeakyRelu(x, slope), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.data(x).iter().map(|&v| v.max(0.0)).collect();
        let shape = self.shape(x);
        self.push(Tensor::new(&shape, out)?, Op::Relu(x), &[x])
    }

    /// Inverted dropout. Identity when `train` is false or `rate` is zero.
    pub fn dropout(&mut self, x: Var, rate: f64, train: bool, rng: &mut Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidInput(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if !train || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.nodes[x.0].value.len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let out = self.data(x).iter().zip(&mask).map(|(v, k)| v * k).collect();
        let shape = self.shape(x);
        self.push(Tensor::new(&shape, out)?, Op::Dropout { x, mask }, &[x])
    }

    /// Same-length 1D convolution along time with zero padding `⌊p/2⌋`.
    ///
    /// `x` is `(N·T)×C_in` with rows ordered node-major (`row = n·T + t`),
    /// `kernel` is `p×C_in×C_out` (tap-major). Output is `(N·T)×C_out`.
    pub fn conv1d_same(&mut self, x: Var, kernel: Var, steps: usize) -> Result<Var> {
        let (rows, cin) = self.dims(x);
        let kshape = self.shape(kernel);
        if kshape.len() != 3 || kshape[1] != cin {
            return Err(self.shape_err("conv1d_same", x, kernel));
        }
        let (p, cout) = (kshape[0], kshape[2]);
        if p % 2 == 0 {
            return Err(Error::Config(format!(
                "conv1d_same needs an odd kernel, got {p}"
            )));
        }
        if steps == 0 || rows % steps != 0 {
            return Err(Error::Shape {
                op: "conv1d_same",
                left: self.shape(x),
                right: vec![steps],
            });
        }
        let cols = im2col(self.data(x), rows / steps, steps, cin, p);
        let mut out = vec![0.0; rows * cout];
        gemm(
            rows,
            p * cin,
            cout,
            &cols,
            false,
            self.data(kernel),
            false,
            0.0,
            &mut out,
        );
        self.push(
            Tensor::new(&[rows, cout], out)?,
            Op::Conv1d {
                x,
                k: kernel,
                steps,
            },
            &[x, kernel],
        )
    }

    /// Mean over all elements (`None`) or along axis 0/1 of a matrix.
    pub fn mean(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        let (m, n) = self.dims(x);
        let src = self.data(x);
        let out = match axis {
            None => Tensor::scalar(src.iter().sum::<f64>() / src.len().max(1) as f64),
            Some(0) => {
                let mut acc = vec![0.0; n];
                for r in 0..m {
                    for j in 0..n {
                        acc[j] += src[r * n + j];
                    }
                }
                acc.iter_mut().for_each(|v| *v /= m as f64);
                Tensor::from_vec(acc)
            }
            Some(1) => Tensor::new(
                &[m],
                (0..m)
                    .map(|r| src[r * n..(r + 1) * n].iter().sum::<f64>() / n as f64)
                    .collect(),
            )?,
            Some(a) => return Err(Error::InvalidInput(format!("mean axis {a} unsupported"))),
        };
        self.push(out, Op::Mean { x, axis }, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.data(x).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Mean of element-wise Huber losses between `pred` and a fixed `target`.
    pub fn huber(&mut self, pred: Var, target: &[f64], delta: f64) -> Result<Var> {
        if delta <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "huber delta must be > 0, got {delta}"
            )));
        }
        if self.nodes[pred.0].value.len() != target.len() {
            return Err(Error::Shape {
                op: "huber",
                left: self.shape(pred),
                right: vec![target.len()],
            });
        }
        let n = target.len().max(1) as f64;
        let s: f64 = self
            .data(pred)
            .iter()
            .zip(target)
            .map(|(p, q)| huber_elem(q - p, delta))
            .sum();
        self.push(
            Tensor::scalar(s / n),
            Op::Huber {
                pred,
                target: target.to_vec(),
                delta,
            },
            &[pred],
        )
    }

    /// Propagates d`loss`/d(·) to every trainable leaf reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::State(
                "backward already ran on this tape; reset it first".into(),
            ));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                left: self.shape(loss),
                right: vec![],
            });
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
        }
        // Only leaves keep their gradients.
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !matches!(node.op, Op::Leaf) {
                *g = None;
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        macro_rules! with_grad {
            ($v:expr, |$d:ident| $body:block) => {
                if let Some($d) = grad_slot(&self.nodes, grads, $v) {
                    $body
                }
            };
        }
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let (_, n) = self.dims(*b);
                with_grad!(*a, |da| {
                    gemm(m, n, k, g, false, self.data(*b), true, 1.0, da);
                });
                with_grad!(*b, |db| {
                    gemm(k, m, n, self.data(*a), true, g, false, 1.0, db);
                });
            }
            Op::Add(a, b) => {
                with_grad!(*a, |da| {
                    axpy(da, g, 1.0);
                });
                with_grad!(*b, |db| {
                    axpy(db, g, 1.0);
                });
            }
            Op::Sub(a, b) => {
                with_grad!(*a, |da| {
                    axpy(da, g, 1.0);
                });
                with_grad!(*b, |db| {
                    axpy(db, g, -1.0);
                });
            }
            Op::Mul(a, b) => {
                with_grad!(*a, |da| {
                    for ((d, gi), bi) in da.iter_mut().zip(g).zip(self.data(*b)) {
                        *d += gi * bi;
                    }
                });
                with_grad!(*b, |db| {
                    for ((d, gi), ai) in db.iter_mut().zip(g).zip(self.data(*a)) {
                        *d += gi * ai;
                    }
                });
            }
            Op::AddBias(x, b) => {
                let (_, n) = self.dims(*x);
                with_grad!(*x, |dx| {
                    axpy(dx, g, 1.0);
                });
                with_grad!(*b, |db| {
                    for row in g.chunks(n.max(1)) {
                        for (d, gi) in db.iter_mut().zip(row) {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Scale(x, s) => {
                with_grad!(*x, |dx| {
                    axpy(dx, g, *s);
                });
            }
            Op::Concat { parts, axis } => {
                let total_cols = node.value.dims2().1;
                let mut offset = 0;
                for &p in parts {
                    let (m, n) = self.dims(p);
                    with_grad!(p, |dp| {
                        if *axis == 0 {
                            axpy(dp, &g[offset * n..(offset + m) * n], 1.0);
                        } else {
                            for r in 0..m {
                                let src = &g[r * total_cols + offset..r * total_cols + offset + n];
                                axpy(&mut dp[r * n..(r + 1) * n], src, 1.0);
                            }
                        }
                    });
                    offset += if *axis == 0 { m } else { n };
                }
            }
            Op::SliceRows { x, start } => {
                let (_, n) = self.dims(*x);
                with_grad!(*x, |dx| {
                    axpy(&mut dx[start * n..start * n + g.len()], g, 1.0);
                });
            }
            Op::SliceCols { x, start } => {
                let (m, n) = self.dims(*x);
                let w = node.value.dims2().1;
                with_grad!(*x, |dx| {
                    for r in 0..m {
                        axpy(
                            &mut dx[r * n + start..r * n + start + w],
                            &g[r * w..(r + 1) * w],
                            1.0,
                        );
                    }
                });
            }
            Op::GatherRows { x, idx } => {
                let (_, n) = self.dims(*x);
                with_grad!(*x, |dx| {
                    for (e, &r) in idx.iter().enumerate() {
                        axpy(&mut dx[r * n..(r + 1) * n], &g[e * n..(e + 1) * n], 1.0);
                    }
                });
            }
            Op::ScatterAddRows { x, idx } => {
                let (_, n) = self.dims(*x);
                with_grad!(*x, |dx| {
                    for (e, &r) in idx.iter().enumerate() {
                        axpy(&mut dx[e * n..(e + 1) * n], &g[r * n..(r + 1) * n], 1.0);
                    }
                });
            }
            Op::RepeatCols { x, times } => {
                with_grad!(*x, |dx| {
                    for (d, chunk) in dx.iter_mut().zip(g.chunks(*times)) {
                        *d += chunk.iter().sum::<f64>();
                    }
                });
            }
            Op::RepeatRows { x, times } => {
                let (m, n) = self.dims(*x);
                with_grad!(*x, |dx| {
                    for r in 0..m {
                        for t in 0..*times {
                            let src = &g[(r * times + t) * n..(r * times + t + 1) * n];
                            axpy(&mut dx[r * n..(r + 1) * n], src, 1.0);
                        }
                    }
                });
            }
            Op::Reshape(x) => {
                with_grad!(*x, |dx| {
                    axpy(dx, g, 1.0);
                });
            }
            Op::Transpose(x) => {
                let (m, n) = self.dims(*x);
                with_grad!(*x, |dx| {
                    for i in 0..m {
                        for j in 0..n {
                            dx[i * n + j] += g[j * m + i];
                        }
                    }
                });
            }
            Op::HeadDot { x, a } => {
                let (r, w) = self.dims(*x);
                let (h, c) = self.dims(*a);
                let xs = self.data(*x);
                let av = self.data(*a);
                with_grad!(*x, |dx| {
                    for i in 0..r {
                        for hh in 0..h {
                            let gi = g[i * h + hh];
                            if gi != 0.0 {
                                axpy(
                                    &mut dx[i * w + hh * c..i * w + (hh + 1) * c],
                                    &av[hh * c..(hh + 1) * c],
                                    gi,
                                );
                            }
                        }
                    }
                });
                with_grad!(*a, |da| {
                    for i in 0..r {
                        for hh in 0..h {
                            let gi = g[i * h + hh];
                            if gi != 0.0 {
                                axpy(
                                    &mut da[hh * c..(hh + 1) * c],
                                    &xs[i * w + hh * c..i * w + (hh + 1) * c],
                                    gi,
                                );
                            }
                        }
                    }
                });
            }
            Op::SoftmaxGroups {
                x,
                groups,
                n_groups,
            } => {
                let (_, n) = self.dims(*x);
                let y = node.value.data();
                let mut dots = vec![0.0; n_groups * n];
                for (e, &grp) in groups.iter().enumerate() {
                    for j in 0..n {
                        dots[grp * n + j] += y[e * n + j] * g[e * n + j];
                    }
                }
                with_grad!(*x, |dx| {
                    for (e, &grp) in groups.iter().enumerate() {
                        for j in 0..n {
                            let k = e * n + j;
                            dx[k] += y[k] * (g[k] - dots[grp * n + j]);
                        }
                    }
                });
            }
            Op::LeakyRelu(x, slope) => {
                with_grad!(*x, |dx| {
                    for ((d, gi), xi) in dx.iter_mut().zip(g).zip(self.data(*x)) {
                        *d += if *xi > 0.0 { *gi } else { slope * gi };
                    }
                });
            }
            Op::Relu(x) => {
                with_grad!(*x, |dx| {
                    for ((d, gi), xi) in dx.iter_mut().zip(g).zip(self.data(*x)) {
                        if *xi > 0.0 {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => {
                with_grad!(*x, |dx| {
                    for ((d, gi), mi) in dx.iter_mut().zip(g).zip(mask) {
                        *d += gi * mi;
                    }
                });
            }
            Op::Conv1d { x, k, steps } => {
                let (rows, cin) = self.dims(*x);
                let kshape = self.shape(*k);
                let (p, cout) = (kshape[0], kshape[2]);
                let nodes = rows / steps;
                with_grad!(*k, |dk| {
                    let cols = im2col(self.data(*x), nodes, *steps, cin, p);
                    gemm(p * cin, rows, cout, &cols, true, g, false, 1.0, dk);
                });
                with_grad!(*x, |dx| {
                    let mut dcols = vec![0.0; rows * p * cin];
                    gemm(
                        rows,
                        cout,
                        p * cin,
                        g,
                        false,
                        self.data(*k),
                        true,
                        0.0,
                        &mut dcols,
                    );
                    col2im_add(&dcols, dx, nodes, *steps, cin, p);
                });
            }
            Op::Mean { x, axis } => {
                let (m, n) = self.dims(*x);
                with_grad!(*x, |dx| {
                    match axis {
                        None => {
                            let s = g[0] / dx.len().max(1) as f64;
                            dx.iter_mut().for_each(|d| *d += s);
                        }
                        Some(0) => {
                            for r in 0..m {
                                for j in 0..n {
                                    dx[r * n + j] += g[j] / m as f64;
                                }
                            }
                        }
                        _ => {
                            for r in 0..m {
                                for j in 0..n {
                                    dx[r * n + j] += g[r] / n as f64;
                                }
                            }
                        }
                    }
                });
            }
            Op::Sum(x) => {
                with_grad!(*x, |dx| {
                    dx.iter_mut().for_each(|d| *d += g[0]);
                });
            }
            Op::Huber {
                pred,
                target,
                delta,
            } => {
                let n = target.len().max(1) as f64;
                with_grad!(*pred, |dp| {
                    for ((d, p), q) in dp.iter_mut().zip(self.data(*pred)).zip(target) {
                        // d/dpred of huber(q - pred) = -huber'(a)
                        *d -= g[0] * huber_grad(q - p, *delta) / n;
                    }
                });
            }
        }
    }
}

fn grad_slot<'a>(
    nodes: &[Node],
    grads: &'a mut [Option<Vec<f64>>],
    v: Var,
) -> Option<&'a mut Vec<f64>> {
    let node = &nodes[v.0];
    if !node.needs_grad {
        return None;
    }
    let len = node.value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
}

fn axpy(dst: &mut [f64], src: &[f64], alpha: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}

/// Element-wise Huber loss: `½a²` if `|a| ≤ δ`, else `δ(|a| − ½δ)`.
pub fn huber_elem(a: f64, delta: f64) -> f64 {
    if a.abs() <= delta {
        0.5 * a * a
    } else {
        delta * (a.abs() - 0.5 * delta)
    }
}

/// Derivative of [`huber_elem`] with respect to `a`.
pub fn huber_grad(a: f64, delta: f64) -> f64 {
    if a.abs() <= delta {
        a
    } else {
        delta * a.signum()
    }
}

fn im2col(x: &[f64], nodes: usize, steps: usize, cin: usize, p: usize) -> Vec<f64> {
    let half = p / 2;
    let w = p * cin;
    let mut cols = vec![0.0; nodes * steps * w];
    for n in 0..nodes {
        for t in 0..steps {
            let row = &mut cols[(n * steps + t) * w..(n * steps + t + 1) * w];
            for i in 0..p {
                let src_t = t as isize + i as isize - half as isize;
                if src_t < 0 || src_t >= steps as isize {
                    continue;
                }
                let src = (n * steps + src_t as usize) * cin;
                row[i * cin..(i + 1) * cin].copy_from_slice(&x[src..src + cin]);
            }
        }
    }
    cols
}

fn col2im_add(cols: &[f64], dx: &mut [f64], nodes: usize, steps: usize, cin: usize, p: usize) {
    let half = p / 2;
    let w = p * cin;
    for n in 0..nodes {
        for t in 0..steps {
            let row = &cols[(n * steps + t) * w..(n * steps + t + 1) * w];
            for i in 0..p {
                let src_t = t as isize + i as isize - half as isize;
                if src_t < 0 || src_t >= steps as isize {
                    continue;
                }
                let dst = (n * steps + src_t as usize) * cin;
                axpy(&mut dx[dst..dst + cin], &row[i * cin..(i + 1) * cin], 1.0);
            }
        }
    }
}
