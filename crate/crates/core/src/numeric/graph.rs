//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every primitive checks its operand shapes when it is recorded, so a graph
//! that was built successfully can always be differentiated. Operations are
//! two-dimensional: the last axis is "columns", everything before it is
//! flattened into "rows".

use super::tensor::{dot, matmul_nn, matmul_nt, matmul_tn, Tensor};
use crate::error::{CertError, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow { x: Var, bias: Var },
    MulRow { x: Var, scale: Var },
    Scale(Var, f64),
    Softmax(Var),
    LayerNorm(Var),
    Gather { table: Var, indices: Vec<usize> },
    Gelu(Var),
    Tanh(Var),
    CrossEntropy { logits: Var, targets: Vec<usize> },
    L2Normalize(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Block { x: Var, row0: usize, col0: usize },
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// Per-op saved values (e.g. reciprocal standard deviations for layer norm).
    saved: Vec<f64>,
}

/// A tape of tensor operations supporting one reverse sweep per root.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

const LAYER_NORM_EPS: f64 = 1e-12;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, saved: Vec<f64>) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            saved,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true, Vec::new())
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false, Vec::new())
    }

    fn shape_of(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn dims2(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(CertError::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape_of(a),
                self.shape_of(b)
            )));
        }
        Ok(())
    }

    fn matrix_dims(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        let shape = self.shape_of(v);
        if shape.len() != 2 {
            return Err(CertError::Shape(format!(
                "{what} expects a matrix, got shape {shape:?}"
            )));
        }
        Ok((shape[0], shape[1]))
    }

    /// `a · b`, or `a · bᵀ` when `trans_b` is set.
    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul lhs")?;
        let (br, bc) = self.matrix_dims(b, "matmul rhs")?;
        let (bk, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != bk {
            return Err(CertError::Shape(format!(
                "matmul inner dimensions differ: [{m}x{k}] by [{bk}x{n}]"
            )));
        }
        let mut out = vec![0.0; m * n];
        {
            let av = self.nodes[a.0].value.data();
            let bv = self.nodes[b.0].value.data();
            if trans_b {
                matmul_nt(av, bv, &mut out, m, k, n);
            } else {
                matmul_nn(av, bv, &mut out, m, k, n);
            }
        }
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(
            Tensor::new(vec![m, n], out)?,
            Op::MatMul { a, b, trans_b },
            rg,
            Vec::new(),
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` without materialising the transpose.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "transpose")?;
        let xv = self.nodes[x.0].value.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = xv[i * n + j];
            }
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::Transpose(x), rg, Vec::new()))
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(a, b, "elementwise operands differ")?;
        let out: Vec<f64> = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape_of(a).to_vec();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(shape, out)?, op, rg, Vec::new()))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    fn row_vector_len(&self, v: Var, cols: usize, what: &str) -> Result<()> {
        let shape = self.shape_of(v);
        if shape.len() != 1 || shape[0] != cols {
            return Err(CertError::Shape(format!(
                "{what}: expected a vector of length {cols}, got {shape:?}"
            )));
        }
        Ok(())
    }

    /// Adds a length-`cols` vector to every row.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, cols) = self.dims2(x);
        self.row_vector_len(bias, cols, "add_row bias")?;
        let b = self.nodes[bias.0].value.data().to_vec();
        let mut out = self.nodes[x.0].value.data().to_vec();
        for row in out.chunks_mut(cols) {
            for (o, bv) in row.iter_mut().zip(&b) {
                *o += bv;
            }
        }
        let shape = self.shape_of(x).to_vec();
        let rg = self.any_grad(&[x, bias]);
        Ok(self.push(Tensor::new(shape, out)?, Op::AddRow { x, bias }, rg, Vec::new()))
    }

    /// Multiplies every row elementwise by a length-`cols` vector.
    pub fn mul_row(&mut self, x: Var, scale: Var) -> Result<Var> {
        let (_, cols) = self.dims2(x);
        self.row_vector_len(scale, cols, "mul_row scale")?;
        let s = self.nodes[scale.0].value.data().to_vec();
        let mut out = self.nodes[x.0].value.data().to_vec();
        for row in out.chunks_mut(cols) {
            for (o, sv) in row.iter_mut().zip(&s) {
                *o *= sv;
            }
        }
        let shape = self.shape_of(x).to_vec();
        let rg = self.any_grad(&[x, scale]);
        Ok(self.push(Tensor::new(shape, out)?, Op::MulRow { x, scale }, rg, Vec::new()))
    }

    fn map(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let out: Vec<f64> = self.nodes[x.0].value.data().iter().map(|&v| f(v)).collect();
        let shape = self.shape_of(x).to_vec();
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(shape, out)?, op, rg, Vec::new()))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.map(x, Op::Scale(x, factor), |v| v * factor)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.map(x, Op::Gelu(x), |v| {
            0.5 * v * (1.0 + (GELU_C * (v + GELU_A * v * v * v)).tanh())
        })
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.map(x, Op::Tanh(x), f64::tanh)
    }

    /// Row-wise softmax with max subtraction. Entries equal to `-inf` get
    /// probability zero; a row that is entirely `-inf` becomes all zeros.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let (_, cols) = self.dims2(x);
        let mut out = self.nodes[x.0].value.data().to_vec();
        for row in out.chunks_mut(cols) {
            softmax_in_place(row);
        }
        let shape = self.shape_of(x).to_vec();
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(shape, out)?, Op::Softmax(x), rg, Vec::new()))
    }

    /// Row-wise standardisation to zero mean and unit variance (no affine).
    pub fn layer_norm(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.dims2(x);
        let mut out = self.nodes[x.0].value.data().to_vec();
        let mut inv_std = Vec::with_capacity(rows);
        for row in out.chunks_mut(cols) {
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * r;
            }
            inv_std.push(r);
        }
        let shape = self.shape_of(x).to_vec();
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(shape, out)?, Op::LayerNorm(x), rg, inv_std))
    }

    /// Selects rows of `table` (an embedding lookup when `table` is a leaf).
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (rows, cols) = self.matrix_dims(table, "gather_rows")?;
        if indices.is_empty() {
            return Err(CertError::Shape("gather_rows with no indices".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(CertError::Shape(format!(
                "gather_rows index {bad} out of range for {rows} rows"
            )));
        }
        let tv = self.nodes[table.0].value.data();
        let mut out = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            out.extend_from_slice(&tv[i * cols..(i + 1) * cols]);
        }
        let rg = self.any_grad(&[table]);
        Ok(self.push(
            Tensor::new(vec![indices.len(), cols], out)?,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
            rg,
            Vec::new(),
        ))
    }

    /// Mean softmax cross-entropy of each logit row against its target class.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (rows, cols) = self.dims2(logits);
        if targets.len() != rows {
            return Err(CertError::Shape(format!(
                "cross_entropy: {rows} logit rows but {} targets",
                targets.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= cols) {
            return Err(CertError::Shape(format!(
                "cross_entropy target {bad} out of range for {cols} classes"
            )));
        }
        let lv = self.nodes[logits.0].value.data();
        let mut total = 0.0;
        for (row, &t) in lv.chunks(cols).zip(targets) {
            total += super::tensor::log_sum_exp(row) - row[t];
        }
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            Tensor::scalar(total / rows as f64),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
            rg,
            Vec::new(),
        ))
    }

    /// Row-wise `x / sqrt(‖x‖² + eps²)`; a zero row maps to zero.
    pub fn l2_normalize(&mut self, x: Var, eps: f64) -> Result<Var> {
        let (_, cols) = self.dims2(x);
        let mut out = self.nodes[x.0].value.data().to_vec();
        let mut denoms = Vec::new();
        for row in out.chunks_mut(cols) {
            let d = (dot(row, row) + eps * eps).sqrt();
            for v in row.iter_mut() {
                *v /= d;
            }
            denoms.push(d);
        }
        let shape = self.shape_of(x).to_vec();
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(shape, out)?, Op::L2Normalize(x), rg, denoms))
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| CertError::Shape("concat_rows of nothing".into()))?;
        let (_, cols) = self.matrix_dims(first, "concat_rows")?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.matrix_dims(p, "concat_rows")?;
            if c != cols {
                return Err(CertError::Shape(format!("concat_rows column mismatch: {cols} vs {c}")));
            }
            rows += r;
            out.extend_from_slice(self.nodes[p.0].value.data());
        }
        let rg = self.any_grad(parts);
        Ok(self.push(
            Tensor::new(vec![rows, cols], out)?,
            Op::ConcatRows(parts.to_vec()),
            rg,
            Vec::new(),
        ))
    }

    /// Places matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| CertError::Shape("concat_cols of nothing".into()))?;
        let (rows, _) = self.matrix_dims(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.matrix_dims(p, "concat_cols")?;
            if r != rows {
                return Err(CertError::Shape(format!("concat_cols row mismatch: {rows} vs {r}")));
            }
            widths.push(c);
        }
        let cols: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * cols];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let pv = self.nodes[p.0].value.data();
            for i in 0..rows {
                out[i * cols + offset..i * cols + offset + w].copy_from_slice(&pv[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        let rg = self.any_grad(parts);
        Ok(self.push(
            Tensor::new(vec![rows, cols], out)?,
            Op::ConcatCols(parts.to_vec()),
            rg,
            Vec::new(),
        ))
    }

    /// Extracts the `rows × cols` sub-matrix starting at `(row0, col0)`.
    pub fn block(&mut self, x: Var, row0: usize, rows: usize, col0: usize, cols: usize) -> Result<Var> {
        let (xr, xc) = self.matrix_dims(x, "block")?;
        if rows == 0 || cols == 0 || row0 + rows > xr || col0 + cols > xc {
            return Err(CertError::Shape(format!(
                "block [{row0}+{rows}, {col0}+{cols}] outside [{xr}x{xc}]"
            )));
        }
        let xv = self.nodes[x.0].value.data();
        let mut out = Vec::with_capacity(rows * cols);
        for i in row0..row0 + rows {
            out.extend_from_slice(&xv[i * xc + col0..i * xc + col0 + cols]);
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(
            Tensor::new(vec![rows, cols], out)?,
            Op::Block { x, row0, col0 },
            rg,
            Vec::new(),
        ))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.nodes[x.0].value.data().iter().sum();
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::scalar(s), Op::Sum(x), rg, Vec::new()))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let m = t.data().iter().sum::<f64>() / t.numel() as f64;
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::scalar(m), Op::Mean(x), rg, Vec::new()))
    }

    /// Reverse sweep from a scalar `root`.
    ///
    /// Returns gradients for every trainable leaf reachable from `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if !self.nodes[root.0].value.is_scalar() {
            return Err(CertError::Shape(format!(
                "backward needs a scalar root, got shape {:?}",
                self.nodes[root.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
        }

        let mut out = Vec::new();
        for (idx, g) in grads.into_iter().enumerate() {
            let node = &self.nodes[idx];
            if let (Op::Leaf, true, Some(g)) = (&node.op, node.requires_grad, g) {
                out.push((Var(idx), Tensor::new(node.value.shape().to_vec(), g)?));
            }
        }
        Ok(Gradients { entries: out })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
        f(slot);
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, trans_b } => {
                let (m, k) = self.dims2(*a);
                let n = node.value.cols();
                let av = self.nodes[a.0].value.data();
                let bv = self.nodes[b.0].value.data();
                if *trans_b {
                    // y = a·bᵀ, b is [n×k]
                    self.accumulate(grads, *a, |ga| matmul_nn(g, bv, ga, m, n, k));
                    self.accumulate(grads, *b, |gb| matmul_tn(g, av, gb, m, n, k));
                } else {
                    // y = a·b, b is [k×n]
                    self.accumulate(grads, *a, |ga| matmul_nt(g, bv, ga, m, n, k));
                    self.accumulate(grads, *b, |gb| matmul_tn(av, g, gb, m, k, n));
                }
            }
            Op::Transpose(x) => {
                let (m, n) = self.dims2(*x);
                self.accumulate(grads, *x, |gx| {
                    for i in 0..m {
                        for j in 0..n {
                            gx[i * n + j] += g[j * m + i];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |ga| add_into(ga, g));
                self.accumulate(grads, *b, |gb| add_into(gb, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |ga| add_into(ga, g));
                self.accumulate(grads, *b, |gb| {
                    for (o, &v) in gb.iter_mut().zip(g) {
                        *o -= v;
                    }
                });
            }
            Op::Mul(a, b) => {
                let av = self.nodes[a.0].value.data();
                let bv = self.nodes[b.0].value.data();
                self.accumulate(grads, *a, |ga| {
                    for ((o, &gi), &bi) in ga.iter_mut().zip(g).zip(bv) {
                        *o += gi * bi;
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for ((o, &gi), &ai) in gb.iter_mut().zip(g).zip(av) {
                        *o += gi * ai;
                    }
                });
            }
            Op::AddRow { x, bias } => {
                let cols = node.value.cols();
                self.accumulate(grads, *x, |gx| add_into(gx, g));
                self.accumulate(grads, *bias, |gb| {
                    for row in g.chunks(cols) {
                        add_into(gb, row);
                    }
                });
            }
            Op::MulRow { x, scale } => {
                let cols = node.value.cols();
                let xv = self.nodes[x.0].value.data();
                let sv = self.nodes[scale.0].value.data();
                self.accumulate(grads, *x, |gx| {
                    for (grow, gxrow) in g.chunks(cols).zip(gx.chunks_mut(cols)) {
                        for ((o, &gi), &si) in gxrow.iter_mut().zip(grow).zip(sv) {
                            *o += gi * si;
                        }
                    }
                });
                self.accumulate(grads, *scale, |gs| {
                    for (grow, xrow) in g.chunks(cols).zip(xv.chunks(cols)) {
                        for ((o, &gi), &xi) in gs.iter_mut().zip(grow).zip(xrow) {
                            *o += gi * xi;
                        }
                    }
                });
            }
            Op::Scale(x, factor) => {
                self.accumulate(grads, *x, |gx| {
                    for (o, &gi) in gx.iter_mut().zip(g) {
                        *o += gi * factor;
                    }
                });
            }
            Op::Softmax(x) => {
                let cols = node.value.cols();
                self.accumulate(grads, *x, |gx| {
                    for ((grow, yrow), gxrow) in g.chunks(cols).zip(y.chunks(cols)).zip(gx.chunks_mut(cols)) {
                        let s = dot(grow, yrow);
                        for ((o, &gi), &yi) in gxrow.iter_mut().zip(grow).zip(yrow) {
                            *o += yi * (gi - s);
                        }
                    }
                });
            }
            Op::LayerNorm(x) => {
                let cols = node.value.cols();
                let inv_std = &node.saved;
                self.accumulate(grads, *x, |gx| {
                    for (((grow, yrow), gxrow), &r) in
                        g.chunks(cols).zip(y.chunks(cols)).zip(gx.chunks_mut(cols)).zip(inv_std)
                    {
                        let mean_g = grow.iter().sum::<f64>() / cols as f64;
                        let mean_gy = dot(grow, yrow) / cols as f64;
                        for ((o, &gi), &yi) in gxrow.iter_mut().zip(grow).zip(yrow) {
                            *o += r * (gi - mean_g - yi * mean_gy);
                        }
                    }
                });
            }
            Op::Gather { table, indices } => {
                let cols = node.value.cols();
                self.accumulate(grads, *table, |gt| {
                    for (grow, &i) in g.chunks(cols).zip(indices) {
                        add_into(&mut gt[i * cols..(i + 1) * cols], grow);
                    }
                });
            }
            Op::Gelu(x) => {
                let xv = self.nodes[x.0].value.data();
                self.accumulate(grads, *x, |gx| {
                    for ((o, &gi), &v) in gx.iter_mut().zip(g).zip(xv) {
                        let t = (GELU_C * (v + GELU_A * v * v * v)).tanh();
                        let d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * v * v);
                        *o += gi * d;
                    }
                });
            }
            Op::Tanh(x) => {
                self.accumulate(grads, *x, |gx| {
                    for ((o, &gi), &yi) in gx.iter_mut().zip(g).zip(y) {
                        *o += gi * (1.0 - yi * yi);
                    }
                });
            }
            Op::CrossEntropy { logits, targets } => {
                let (rows, cols) = self.dims2(*logits);
                let lv = self.nodes[logits.0].value.data();
                let scale = g[0] / rows as f64;
                self.accumulate(grads, *logits, |gl| {
                    let mut p = vec![0.0; cols];
                    for ((lrow, glrow), &t) in lv.chunks(cols).zip(gl.chunks_mut(cols)).zip(targets) {
                        p.copy_from_slice(lrow);
                        softmax_in_place(&mut p);
                        for (j, (o, &pj)) in glrow.iter_mut().zip(&p).enumerate() {
                            let target = if j == t { 1.0 } else { 0.0 };
                            *o += scale * (pj - target);
                        }
                    }
                });
            }
            Op::L2Normalize(x) => {
                let cols = node.value.cols();
                let denoms = &node.saved;
                // y = x/d, d = sqrt(|x|² + eps²) => dx = (g - y (y·g)) / d
                self.accumulate(grads, *x, |gx| {
                    for (((grow, yrow), gxrow), &d) in
                        g.chunks(cols).zip(y.chunks(cols)).zip(gx.chunks_mut(cols)).zip(denoms)
                    {
                        let yg = dot(yrow, grow);
                        for ((o, &gi), &yi) in gxrow.iter_mut().zip(grow).zip(yrow) {
                            *o += (gi - yi * yg) / d;
                        }
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p.0].value.numel();
                    self.accumulate(grads, p, |gp| add_into(gp, &g[offset..offset + n]));
                    offset += n;
                }
            }
            Op::ConcatCols(parts) => {
                let cols = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let (rows, w) = self.dims2(p);
                    self.accumulate(grads, p, |gp| {
                        for i in 0..rows {
                            add_into(
                                &mut gp[i * w..(i + 1) * w],
                                &g[i * cols + offset..i * cols + offset + w],
                            );
                        }
                    });
                    offset += w;
                }
            }
            Op::Block { x, row0, col0 } => {
                let (rows, cols) = self.dims2(Var(idx));
                let xc = self.nodes[x.0].value.cols();
                self.accumulate(grads, *x, |gx| {
                    for i in 0..rows {
                        let dst = (row0 + i) * xc + col0;
                        add_into(&mut gx[dst..dst + cols], &g[i * cols..(i + 1) * cols]);
                    }
                });
            }
            Op::Sum(x) => {
                self.accumulate(grads, *x, |gx| {
                    for o in gx.iter_mut() {
                        *o += g[0];
                    }
                });
            }
            Op::Mean(x) => {
                let n = self.nodes[x.0].value.numel() as f64;
                self.accumulate(grads, *x, |gx| {
                    for o in gx.iter_mut() {
                        *o += g[0] / n;
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        row.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Gradients of a scalar with respect to the trainable leaves of a graph.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    entries: Vec<(Var, Tensor)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.entries
            .binary_search_by_key(&v, |(k, _)| *k)
            .ok()
            .map(|i| &self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Tensor)> {
        self.entries.iter().map(|(v, t)| (*v, t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
