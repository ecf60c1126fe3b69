use crate::error::Error;
use crate::Result;

use super::tensor::{ParamId, ParamStore, Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    /// (m,n) + (1,n) broadcast over rows.
    AddRow(Var, Var),
    /// (m,n) * (1,n) broadcast over rows.
    MulRow(Var, Var),
    Scale(Var, T),
    AddScalar(Var, T),
    MatMul(Var, Var),
    Transpose(Var),
    Exp(Var),
    Log(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        inv_std: Vec<T>,
        normalized: Tensor<T>,
    },
    SoftmaxRows(Var),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    MaxRows {
        x: Var,
        argmax: Vec<usize>,
    },
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    GatherRows {
        x: Var,
        idx: Vec<usize>,
    },
    BroadcastRow {
        x: Var,
        rows: usize,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Append-only record of forward operations; node order is topological by
/// construction, so backward visits each node exactly once in reverse.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    layer_norm_eps: T,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `var`, if it participated.
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads[var.0].as_ref()
    }
}

/// Parameters bound onto a tape as gradient-tracked leaves.
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            layer_norm_eps: Scalar::from_f64(1e-5),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    /// Record an input tensor. Gradients flow into it iff `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Record a constant (no gradient tracking).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn scalar_constant(&mut self, v: T) -> Var {
        self.constant(Tensor::scalar(v))
    }

    /// Bind every parameter in `store` as a gradient-tracked leaf.
    pub fn bind(&mut self, store: &ParamStore<T>) -> BoundParams {
        let vars = store
            .ids()
            .map(|id| self.leaf(store.get(id).clone(), true))
            .collect();
        BoundParams { vars }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(
                "operation produced a non-finite value".into(),
            ));
        }
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip(self.value(b), |x, y| x + y)?;
        self.push(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip(self.value(b), |x, y| x - y)?;
        self.push(v, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip(self.value(b), |x, y| x * y)?;
        self.push(v, Op::Mul(a, b), &[a, b])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip(self.value(b), |x, y| x / y)?;
        self.push(v, Op::Div(a, b), &[a, b])
    }

    /// `(m,n) + (1,n)`: add a row vector to every row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(Error::Shape(format!(
                "add_row {:?} + {:?}",
                av.shape(),
                rv.shape()
            )));
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                *out.at_mut(r, c) += rv.at(0, c);
            }
        }
        self.push(out, Op::AddRow(a, row), &[a, row])
    }

    /// `(m,n) * (1,n)`: scale every row elementwise by a row vector.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(Error::Shape(format!(
                "mul_row {:?} * {:?}",
                av.shape(),
                rv.shape()
            )));
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                *out.at_mut(r, c) *= rv.at(0, c);
            }
        }
        self.push(out, Op::MulRow(a, row), &[a, row])
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Result<Var> {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a, c), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -T::one())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(v, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).transposed();
        self.push(v, Op::Transpose(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| x.exp());
        self.push(v, Op::Exp(a), &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| x.ln());
        self.push(v, Op::Log(a), &[a])
    }

    /// Tanh-approximation GELU.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(gelu_value);
        self.push(v, Op::Gelu(a), &[a])
    }

    /// Layer normalization over the last axis (per row), no affine part.
    pub fn layer_norm(&mut self, a: Var) -> Result<Var> {
        let eps = self.layer_norm_eps;
        let x = self.value(a);
        let (m, n) = (x.rows(), x.cols());
        let nf = Scalar::from_f64(n as f64);
        let mut out = Tensor::zeros(m, n);
        let mut inv_std = Vec::with_capacity(m);
        for r in 0..m {
            let row = x.row(r);
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row
                .iter()
                .map(|&v| (v - mean) * (v - mean))
                .sum::<T>()
                / nf;
            let is = (var + eps).sqrt().recip();
            inv_std.push(is);
            for c in 0..n {
                *out.at_mut(r, c) = (row[c] - mean) * is;
            }
        }
        let normalized = out.clone();
        self.push(
            out,
            Op::LayerNorm {
                x: a,
                inv_std,
                normalized,
            },
            &[a],
        )
    }

    /// Numerically stabilized softmax over the last axis (per row).
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (m, n) = (x.rows(), x.cols());
        let mut out = Tensor::zeros(m, n);
        for r in 0..m {
            let row = x.row(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut denom = T::zero();
            for c in 0..n {
                let e = (row[c] - max).exp();
                *out.at_mut(r, c) = e;
                denom += e;
            }
            for c in 0..n {
                *out.at_mut(r, c) = out.at(r, c) / denom;
            }
        }
        self.push(out, Op::SoftmaxRows(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let nf = Scalar::from_f64(x.len() as f64);
        let s = x.data().iter().copied().sum::<T>() / nf;
        self.push(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Column means: `(m,n) -> (1,n)`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (m, n) = (x.rows(), x.cols());
        let mf = Scalar::from_f64(m as f64);
        let mut out = Tensor::zeros(1, n);
        for r in 0..m {
            for c in 0..n {
                *out.at_mut(0, c) += x.at(r, c);
            }
        }
        for c in 0..n {
            *out.at_mut(0, c) = out.at(0, c) / mf;
        }
        self.push(out, Op::MeanRows(a), &[a])
    }

    /// Column-wise max over rows: `(m,n) -> (1,n)`; gradient routes to the
    /// first maximizing row.
    pub fn max_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (m, n) = (x.rows(), x.cols());
        if m == 0 {
            return Err(Error::Shape("max_rows on empty tensor".into()));
        }
        let mut out = Tensor::zeros(1, n);
        let mut argmax = vec![0usize; n];
        for c in 0..n {
            let mut best = x.at(0, c);
            let mut best_r = 0;
            for r in 1..m {
                if x.at(r, c) > best {
                    best = x.at(r, c);
                    best_r = r;
                }
            }
            *out.at_mut(0, c) = best;
            argmax[c] = best_r;
        }
        self.push(out, Op::MaxRows { x: a, argmax }, &[a])
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(Error::Shape(format!(
                "concat_cols {:?} | {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let (m, na, nb) = (av.rows(), av.cols(), bv.cols());
        let mut out = Tensor::zeros(m, na + nb);
        for r in 0..m {
            for c in 0..na {
                *out.at_mut(r, c) = av.at(r, c);
            }
            for c in 0..nb {
                *out.at_mut(r, na + c) = bv.at(r, c);
            }
        }
        self.push(out, Op::ConcatCols(a, b), &[a, b])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Shape("concat_rows of zero tensors".into()));
        }
        let n = self.value(parts[0]).cols();
        let total: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut data = Vec::with_capacity(total * n);
        for &p in parts {
            let v = self.value(p);
            if v.cols() != n {
                return Err(Error::Shape("concat_rows with mixed widths".into()));
            }
            data.extend_from_slice(v.data());
        }
        let out = Tensor::new(total, n, data)?;
        self.push(out, Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let x = self.value(a);
        if end > x.cols() || start >= end {
            return Err(Error::Shape(format!(
                "slice_cols {}..{} of width {}",
                start,
                end,
                x.cols()
            )));
        }
        let m = x.rows();
        let w = end - start;
        let mut out = Tensor::zeros(m, w);
        for r in 0..m {
            for c in 0..w {
                *out.at_mut(r, c) = x.at(r, start + c);
            }
        }
        self.push(out, Op::SliceCols { x: a, start }, &[a])
    }

    /// Select rows by index (repeats allowed); gradient scatter-adds.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let x = self.value(a);
        let n = x.cols();
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            if i >= x.rows() {
                return Err(Error::Shape(format!(
                    "gather_rows index {} out of {} rows",
                    i,
                    x.rows()
                )));
            }
            data.extend_from_slice(x.row(i));
        }
        let out = Tensor::new(idx.len(), n, data)?;
        self.push(
            out,
            Op::GatherRows {
                x: a,
                idx: idx.to_vec(),
            },
            &[a],
        )
    }

    /// `(1,n) -> (m,n)` by repetition; gradient sums over rows.
    pub fn broadcast_row(&mut self, a: Var, rows: usize) -> Result<Var> {
        let x = self.value(a);
        if x.rows() != 1 {
            return Err(Error::Shape(format!(
                "broadcast_row on {:?}",
                x.shape()
            )));
        }
        let n = x.cols();
        let mut data = Vec::with_capacity(rows * n);
        for _ in 0..rows {
            data.extend_from_slice(x.row(0));
        }
        let out = Tensor::new(rows, n, data)?;
        self.push(out, Op::BroadcastRow { x: a, rows }, &[a])
    }

    /// Reverse sweep from a scalar loss. Returns gradients for every node
    /// that required them.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.shape() != [1, 1] {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate_parents(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accum(&self, grads: &mut [Option<Tensor<T>>], var: Var, delta: Tensor<T>) {
        if !self.nodes[var.0].needs_grad {
            return;
        }
        match &mut grads[var.0] {
            Some(existing) => existing.add_assign(&delta),
            slot => *slot = Some(delta),
        }
    }

    #[allow(clippy::too_many_lines)]
    fn accumulate_parents(
        &self,
        node: usize,
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        match &self.nodes[node].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let ga = g.zip(self.value(*b), |gv, bv| gv * bv)?;
                let gb = g.zip(self.value(*a), |gv, av| gv * av)?;
                self.accum(grads, *a, ga);
                self.accum(grads, *b, gb);
            }
            Op::Div(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = g.zip(bv, |gv, b| gv / b)?;
                let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                for i in 0..gb.len() {
                    gb.data_mut()[i] =
                        -g.data()[i] * av.data()[i] / (bv.data()[i] * bv.data()[i]);
                }
                self.accum(grads, *a, ga);
                self.accum(grads, *b, gb);
            }
            Op::AddRow(a, row) => {
                self.accum(grads, *a, g.clone());
                let mut gr = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        *gr.at_mut(0, c) += g.at(r, c);
                    }
                }
                self.accum(grads, *row, gr);
            }
            Op::MulRow(a, row) => {
                let (av, rv) = (self.value(*a), self.value(*row));
                let mut ga = Tensor::zeros(g.rows(), g.cols());
                let mut gr = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        *ga.at_mut(r, c) = g.at(r, c) * rv.at(0, c);
                        *gr.at_mut(0, c) += g.at(r, c) * av.at(r, c);
                    }
                }
                self.accum(grads, *a, ga);
                self.accum(grads, *row, gr);
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.accum(grads, *a, g.map(|v| v * c));
            }
            Op::AddScalar(a, _) => {
                self.accum(grads, *a, g.clone());
            }
            Op::MatMul(a, b) => {
                let ga = g.matmul(&self.value(*b).transposed())?;
                let gb = self.value(*a).transposed().matmul(g)?;
                self.accum(grads, *a, ga);
                self.accum(grads, *b, gb);
            }
            Op::Transpose(a) => {
                self.accum(grads, *a, g.transposed());
            }
            Op::Exp(a) => {
                let out = &self.nodes[node].value;
                self.accum(grads, *a, g.zip(out, |gv, o| gv * o)?);
            }
            Op::Log(a) => {
                self.accum(grads, *a, g.zip(self.value(*a), |gv, x| gv / x)?);
            }
            Op::Gelu(a) => {
                self.accum(grads, *a, g.zip(self.value(*a), |gv, x| gv * gelu_deriv(x))?);
            }
            Op::LayerNorm {
                x,
                inv_std,
                normalized,
            } => {
                let (m, n) = (g.rows(), g.cols());
                let nf = Scalar::from_f64(n as f64);
                let mut gx = Tensor::zeros(m, n);
                for r in 0..m {
                    let mut mean_g = T::zero();
                    let mut mean_gx = T::zero();
                    for c in 0..n {
                        mean_g += g.at(r, c);
                        mean_gx += g.at(r, c) * normalized.at(r, c);
                    }
                    mean_g = mean_g / nf;
                    mean_gx = mean_gx / nf;
                    for c in 0..n {
                        *gx.at_mut(r, c) = inv_std[r]
                            * (g.at(r, c) - mean_g - normalized.at(r, c) * mean_gx);
                    }
                }
                self.accum(grads, *x, gx);
            }
            Op::SoftmaxRows(a) => {
                let s = &self.nodes[node].value;
                let (m, n) = (g.rows(), g.cols());
                let mut gx = Tensor::zeros(m, n);
                for r in 0..m {
                    let mut dot = T::zero();
                    for c in 0..n {
                        dot += g.at(r, c) * s.at(r, c);
                    }
                    for c in 0..n {
                        *gx.at_mut(r, c) = s.at(r, c) * (g.at(r, c) - dot);
                    }
                }
                self.accum(grads, *a, gx);
            }
            Op::Sum(a) => {
                let gv = g.scalar_value()?;
                let x = self.value(*a);
                self.accum(grads, *a, Tensor::full(x.rows(), x.cols(), gv));
            }
            Op::Mean(a) => {
                let x = self.value(*a);
                let gv = g.scalar_value()? / Scalar::from_f64(x.len() as f64);
                self.accum(grads, *a, Tensor::full(x.rows(), x.cols(), gv));
            }
            Op::MeanRows(a) => {
                let x = self.value(*a);
                let (m, n) = (x.rows(), x.cols());
                let mf = Scalar::from_f64(m as f64);
                let mut gx = Tensor::zeros(m, n);
                for r in 0..m {
                    for c in 0..n {
                        *gx.at_mut(r, c) = g.at(0, c) / mf;
                    }
                }
                self.accum(grads, *a, gx);
            }
            Op::MaxRows { x, argmax } => {
                let xv = self.value(*x);
                let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                for (c, &r) in argmax.iter().enumerate() {
                    *gx.at_mut(r, c) = g.at(0, c);
                }
                self.accum(grads, *x, gx);
            }
            Op::ConcatCols(a, b) => {
                let na = self.value(*a).cols();
                let (m, n) = (g.rows(), g.cols());
                let mut ga = Tensor::zeros(m, na);
                let mut gb = Tensor::zeros(m, n - na);
                for r in 0..m {
                    for c in 0..na {
                        *ga.at_mut(r, c) = g.at(r, c);
                    }
                    for c in na..n {
                        *gb.at_mut(r, c - na) = g.at(r, c);
                    }
                }
                self.accum(grads, *a, ga);
                self.accum(grads, *b, gb);
            }
            Op::ConcatRows(parts) => {
                let parts = parts.clone();
                let mut offset = 0;
                for p in parts {
                    let rows = self.value(p).rows();
                    let n = g.cols();
                    let mut gp = Tensor::zeros(rows, n);
                    for r in 0..rows {
                        for c in 0..n {
                            *gp.at_mut(r, c) = g.at(offset + r, c);
                        }
                    }
                    offset += rows;
                    self.accum(grads, p, gp);
                }
            }
            Op::SliceCols { x, start } => {
                let xv = self.value(*x);
                let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        *gx.at_mut(r, start + c) = g.at(r, c);
                    }
                }
                self.accum(grads, *x, gx);
            }
            Op::GatherRows { x, idx } => {
                let xv = self.value(*x);
                let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                for (out_r, &src_r) in idx.iter().enumerate() {
                    for c in 0..g.cols() {
                        *gx.at_mut(src_r, c) += g.at(out_r, c);
                    }
                }
                self.accum(grads, *x, gx);
            }
            Op::BroadcastRow { x, rows } => {
                let mut gx = Tensor::zeros(1, g.cols());
                for r in 0..*rows {
                    for c in 0..g.cols() {
                        *gx.at_mut(0, c) += g.at(r, c);
                    }
                }
                self.accum(grads, *x, gx);
            }
        }
        Ok(())
    }

    /// Gradients per parameter of `store`, zeros where a parameter did not
    /// participate in the loss.
    pub fn param_grads(
        &self,
        store: &ParamStore<T>,
        bound: &BoundParams,
        grads: &Gradients<T>,
    ) -> Vec<Tensor<T>> {
        store
            .ids()
            .map(|id| {
                let v = bound.var(id);
                grads.get(v).cloned().unwrap_or_else(|| {
                    let t = store.get(id);
                    Tensor::zeros(t.rows(), t.cols())
                })
            })
            .collect()
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn gelu_value<T: Scalar>(x: T) -> T {
    let half: T = Scalar::from_f64(0.5);
    let c: T = Scalar::from_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
    let k: T = Scalar::from_f64(0.044_715);
    let u = c * (x + k * x * x * x);
    half * x * (T::one() + u.tanh())
}

fn gelu_deriv<T: Scalar>(x: T) -> T {
    let half: T = Scalar::from_f64(0.5);
    let c: T = Scalar::from_f64(0.797_884_560_802_865_4);
    let k: T = Scalar::from_f64(0.044_715);
    let three: T = Scalar::from_f64(3.0);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let sech2 = T::one() - t * t;
    half * (T::one() + t) + half * x * sech2 * c * (T::one() + three * k * x * x)
}
