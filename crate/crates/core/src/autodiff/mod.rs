//! Reverse-mode automatic differentiation over dense row-major matrices.
//!
//! A [`Graph`] is an append-only tape: every op pushes a node holding its
//! value and enough context to run its adjoint. Nodes are created in
//! topological order, so [`Graph::backward`] is a single reverse sweep.

pub mod checkpoint;
pub mod nn;
pub mod optim;

use crate::error::{Error, Result};

pub use checkpoint::Checkpoint;
pub use nn::{
    positional_encoding, Activation, Linear, Mlp, MlpSpec, OutputActivation, ParamId, ParamStore,
    stack_clouds, PointEncoder,
};
pub use optim::{adam_step, AdamConfig, AdamState};

/// Dense real array. Graph ops treat rank-1 tensors as a single row.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeError(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn row(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![1, data.len()],
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(rows, cols)` view: rank 0 and 1 are one row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.len() {
            0 => (1, 1),
            1 => (1, self.shape[0]),
            _ => {
                let cols = *self.shape.last().unwrap_or(&1);
                (self.data.len() / cols.max(1), cols)
            }
        }
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let (_, c) = self.dims2();
        &self.data[r * c..(r + 1) * c]
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Gelu(Var),
    Sigmoid(Var),
    Mse(Var, Vec<f64>),
    Bce(Var, Vec<f64>),
    BceLogits(Var, Vec<f64>),
    Sum(Var),
    SegmentMax { input: Var, argmax: Vec<usize> },
    Concat(Vec<Var>),
    GatherRows { input: Var, index: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    rows: usize,
    cols: usize,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    op: Op,
}

/// Counters of work done by a graph, used for cost instrumentation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub matmuls: usize,
    pub matmul_flops: usize,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bound: Vec<((u64, ParamId), Var)>,
    counts: OpCounts,
    no_grad: bool,
}

const BCE_CLAMP: f64 = 1e-12;

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// A graph that records values only; nothing in it requires a gradient.
    pub fn inference() -> Self {
        Graph {
            no_grad: true,
            ..Graph::default()
        }
    }

    pub fn counts(&self) -> OpCounts {
        self.counts
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        let (rows, cols) = value.dims2();
        self.nodes.push(Node {
            value,
            rows,
            cols,
            requires_grad: requires_grad && !self.no_grad,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        (self.nodes[v.0].rows, self.nodes[v.0].cols)
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Leaf that receives a gradient.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, true, Op::Leaf)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, false, Op::Leaf)
    }

    /// Binds a stored parameter (once per graph); frozen stores bind as constants.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let key = (store.uid(), id);
        if let Some(&(_, v)) = self.bound.iter().find(|(p, _)| *p == key) {
            return v;
        }
        let v = self.push(store.get(id).clone(), store.trainable(), Op::Leaf);
        self.bound.push((key, v));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::ShapeError(format!("matmul {m}x{k} by {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            &self.nodes[a.0].value.data,
            (k as isize, 1),
            &self.nodes[b.0].value.data,
            (n as isize, 1),
            &mut out,
            0.0,
        );
        self.counts.matmuls += 1;
        self.counts.matmul_flops += 2 * m * k * n;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, rg, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.dims(a) != self.dims(b) {
            return Err(Error::ShapeError(format!("add {:?} and {:?}", self.dims(a), self.dims(b))));
        }
        let data = zip_map(&self.nodes[a.0].value.data, &self.nodes[b.0].value.data, |x, y| x + y);
        let shape = self.nodes[a.0].value.shape.clone();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor { shape, data }, rg, Op::Add(a, b)))
    }

    /// Adds a `1 x cols` row to every row of `a` (bias broadcast).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        if self.dims(row) != (1, n) {
            return Err(Error::ShapeError(format!("bias {:?} for {m}x{n}", self.dims(row))));
        }
        let b = &self.nodes[row.0].value.data;
        let mut data = self.nodes[a.0].value.data.clone();
        for r in data.chunks_exact_mut(n) {
            for (x, y) in r.iter_mut().zip(b) {
                *x += y;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(Tensor::matrix(m, n, data)?, rg, Op::AddRow(a, row)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.dims(a) != self.dims(b) {
            return Err(Error::ShapeError(format!("mul {:?} and {:?}", self.dims(a), self.dims(b))));
        }
        let data = zip_map(&self.nodes[a.0].value.data, &self.nodes[b.0].value.data, |x, y| x * y);
        let shape = self.nodes[a.0].value.shape.clone();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor { shape, data }, rg, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(a, gelu, Op::Gelu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = &self.nodes[a.0].value;
        let out = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|&x| f(x)).collect(),
        };
        let rg = self.rg(a);
        self.push(out, rg, op)
    }

    fn check_target(&self, a: Var, target: &Tensor, what: &str) -> Result<()> {
        if self.nodes[a.0].value.data.len() != target.data.len() {
            return Err(Error::ShapeError(format!(
                "{what}: prediction has {} values, target {}",
                self.nodes[a.0].value.data.len(),
                target.data.len()
            )));
        }
        Ok(())
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        self.check_target(pred, target, "mse")?;
        let p = &self.nodes[pred.0].value.data;
        let loss = p.iter().zip(&target.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64;
        let rg = self.rg(pred);
        Ok(self.push(Tensor::scalar(loss), rg, Op::Mse(pred, target.data.clone())))
    }

    /// Mean binary cross entropy of probabilities against 0/1 targets.
    pub fn bce(&mut self, prob: Var, target: &Tensor) -> Result<Var> {
        self.check_target(prob, target, "bce")?;
        let p = &self.nodes[prob.0].value.data;
        let loss = p
            .iter()
            .zip(&target.data)
            .map(|(&p, &y)| {
                let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / p.len() as f64;
        let rg = self.rg(prob);
        Ok(self.push(Tensor::scalar(loss), rg, Op::Bce(prob, target.data.clone())))
    }

    /// `bce(sigmoid(logits), target)` computed stably.
    pub fn bce_logits(&mut self, logits: Var, target: &Tensor) -> Result<Var> {
        self.check_target(logits, target, "bce_logits")?;
        let z = &self.nodes[logits.0].value.data;
        let loss = z
            .iter()
            .zip(&target.data)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / z.len() as f64;
        let rg = self.rg(logits);
        Ok(self.push(Tensor::scalar(loss), rg, Op::BceLogits(logits, target.data.clone())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data.iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), rg, Op::Sum(a))
    }

    /// Column-wise max over contiguous row segments `[start, end)`; one
    /// output row per segment. Ties resolve to the first row.
    pub fn segment_max(&mut self, a: Var, segments: &[(usize, usize)]) -> Result<Var> {
        let (m, n) = self.dims(a);
        let x = &self.nodes[a.0].value.data;
        let mut out = Vec::with_capacity(segments.len() * n);
        let mut argmax = Vec::with_capacity(segments.len() * n);
        for &(s, e) in segments {
            if s >= e || e > m {
                return Err(Error::ShapeError(format!("segment {s}..{e} of {m} rows")));
            }
            for c in 0..n {
                let mut best = s;
                for r in s + 1..e {
                    if x[r * n + c] > x[best * n + c] {
                        best = r;
                    }
                }
                out.push(x[best * n + c]);
                argmax.push(best * n + c);
            }
        }
        let rg = self.rg(a);
        let t = Tensor::matrix(segments.len(), n, out)?;
        Ok(self.push(t, rg, Op::SegmentMax { input: a, argmax }))
    }

    /// Max over all rows (a single segment).
    pub fn maxpool_over_points(&mut self, a: Var) -> Result<Var> {
        let (m, _) = self.dims(a);
        self.segment_max(a, &[(0, m)])
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&p| self.dims(p).0)
            .ok_or_else(|| Error::ShapeError("concat of nothing".into()))?;
        if parts.iter().any(|&p| self.dims(p).0 != rows) {
            return Err(Error::ShapeError("concat row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let (_, c) = self.dims(p);
                data.extend_from_slice(&self.nodes[p.0].value.data[r * c..(r + 1) * c]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::matrix(rows, cols, data)?, rg, Op::Concat(parts.to_vec())))
    }

    /// Row `i` of the output is row `index[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let (m, n) = self.dims(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= m) {
            return Err(Error::ShapeError(format!("row {bad} of {m}")));
        }
        let x = &self.nodes[a.0].value.data;
        let mut data = Vec::with_capacity(index.len() * n);
        for &i in index {
            data.extend_from_slice(&x[i * n..(i + 1) * n]);
        }
        let rg = self.rg(a);
        let t = Tensor::matrix(index.len(), n, data)?;
        Ok(self.push(t, rg, Op::GatherRows { input: a, index: index.to_vec() }))
    }

    /// Accumulates d(output)/d(node) for every node that requires a gradient.
    /// `output` must be a scalar.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.nodes[output.0].value.data.len() != 1 {
            return Err(Error::ShapeError("backward needs a scalar output".into()));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[output.0].grad = Some(vec![1.0]);
        for i in (0..=output.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            self.backprop_node(i, &g);
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: &[f64]) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(g) => {
                for (a, b) in g.iter_mut().zip(delta) {
                    *a += b;
                }
            }
            None => node.grad = Some(delta.to_vec()),
        }
    }

    fn backprop_node(&mut self, i: usize, g: &[f64]) {
        let (rows, cols) = (self.nodes[i].rows, self.nodes[i].cols);
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = self.dims(a);
                let n = cols;
                if self.rg(a) {
                    // dA = G B^T
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g, (n as isize, 1), &self.nodes[b.0].value.data, (1, n as isize), &mut da, 0.0);
                    self.accumulate(a, &da);
                }
                if self.rg(b) {
                    // dB = A^T G
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, &self.nodes[a.0].value.data, (1, k as isize), g, (n as isize, 1), &mut db, 0.0);
                    self.accumulate(b, &db);
                }
            }
            &Op::Add(a, b) => {
                self.accumulate(a, g);
                self.accumulate(b, g);
            }
            &Op::AddRow(a, row) => {
                self.accumulate(a, g);
                if self.rg(row) {
                    let mut db = vec![0.0; cols];
                    for r in g.chunks_exact(cols) {
                        for (d, x) in db.iter_mut().zip(r) {
                            *d += x;
                        }
                    }
                    self.accumulate(row, &db);
                }
            }
            &Op::Mul(a, b) => {
                let da = zip_map(g, &self.nodes[b.0].value.data, |g, y| g * y);
                let db = zip_map(g, &self.nodes[a.0].value.data, |g, x| g * x);
                self.accumulate(a, &da);
                self.accumulate(b, &db);
            }
            &Op::Scale(a, s) => {
                let d: Vec<f64> = g.iter().map(|x| x * s).collect();
                self.accumulate(a, &d);
            }
            &Op::Relu(a) => {
                let d = zip_map(g, &self.nodes[a.0].value.data, |g, x| if x > 0.0 { g } else { 0.0 });
                self.accumulate(a, &d);
            }
            &Op::Gelu(a) => {
                let d = zip_map(g, &self.nodes[a.0].value.data, |g, x| g * gelu_grad(x));
                self.accumulate(a, &d);
            }
            &Op::Sigmoid(a) => {
                let d = zip_map(g, &self.nodes[i].value.data, |g, s| g * s * (1.0 - s));
                self.accumulate(a, &d);
            }
            Op::Mse(a, target) => {
                let a = *a;
                let p = &self.nodes[a.0].value.data;
                let scale = 2.0 * g[0] / p.len() as f64;
                let d = zip_map(p, target, |p, y| scale * (p - y));
                self.accumulate(a, &d);
            }
            Op::Bce(a, target) => {
                let a = *a;
                let p = &self.nodes[a.0].value.data;
                let scale = g[0] / p.len() as f64;
                let d = zip_map(p, target, |p, y| {
                    if p <= BCE_CLAMP || p >= 1.0 - BCE_CLAMP {
                        0.0
                    } else {
                        scale * (p - y) / (p * (1.0 - p))
                    }
                });
                self.accumulate(a, &d);
            }
            Op::BceLogits(a, target) => {
                let a = *a;
                let z = &self.nodes[a.0].value.data;
                let scale = g[0] / z.len() as f64;
                let d = zip_map(z, target, |z, y| scale * (sigmoid(z) - y));
                self.accumulate(a, &d);
            }
            &Op::Sum(a) => {
                let n = self.nodes[a.0].value.data.len();
                self.accumulate(a, &vec![g[0]; n]);
            }
            Op::SegmentMax { input, argmax } => {
                let input = *input;
                let mut d = vec![0.0; self.nodes[input.0].value.data.len()];
                for (&src, gv) in argmax.iter().zip(g) {
                    d[src] += gv;
                }
                self.accumulate(input, &d);
            }
            Op::Concat(parts) => {
                let parts = parts.clone();
                let mut offset = 0;
                for p in parts {
                    let (_, c) = self.dims(p);
                    if self.rg(p) {
                        let mut d = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            d.extend_from_slice(&g[r * cols + offset..r * cols + offset + c]);
                        }
                        self.accumulate(p, &d);
                    }
                    offset += c;
                }
            }
            Op::GatherRows { input, index } => {
                let input = *input;
                let mut d = vec![0.0; self.nodes[input.0].value.data.len()];
                for (r, &src) in index.iter().enumerate() {
                    for c in 0..cols {
                        d[src * cols + c] += g[r * cols + c];
                    }
                }
                self.accumulate(input, &d);
            }
        }
    }

    /// Gradients of every bound parameter of `store`, in store order.
    /// Parameters that did not take part in the graph get zeros.
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Vec<f64>> {
        store
            .ids()
            .map(|id| {
                self.bound
                    .iter()
                    .find(|(p, _)| *p == (store.uid(), id))
                    .and_then(|&(_, v)| self.grad(v).map(<[f64]>::to_vec))
                    .unwrap_or_else(|| vec![0.0; store.get(id).len()])
            })
            .collect()
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// `c = a * b (+ beta * c)` for an `m x k` by `k x n` product with explicit
/// (row, column) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], sa: (isize, isize), b: &[f64], sb: (isize, isize), c: &mut [f64], beta: f64) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    // SAFETY: the slices cover every element addressed by the given
    // dimensions and strides, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.0,
            sa.1,
            b.as_ptr(),
            sb.0,
            sb.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let th = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du
}
