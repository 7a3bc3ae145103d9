//! Dense reverse-mode differentiation over a fixed catalog of operations.
//!
//! Values live on a [`Tape`] and are addressed through copyable [`Var`]
//! handles. Every operation appends one node whose parents precede it, so the
//! node order is already a topological order and [`Tape::backward`] simply
//! walks it in reverse.
//!
//! Shapes are `(rows, cols)`; vectors are column matrices `(len, 1)` and
//! scalars are `(1, 1)`. There is no broadcasting.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar root, got {rows}x{cols}")]
    NonScalarRoot { rows: usize, cols: usize },
    #[error("backward already ran on this tape; call zero_grads first")]
    DoubleBackward,
    #[error("softmax over an empty active set")]
    EmptyActiveSet,
    #[error("index {index} out of range for length {len} in {op}")]
    Index {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("gradient check: {0}")]
    GradCheck(String),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Row-major dense matrix of 64-bit reals.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(AutodiffError::Shape {
                op: "from_vec",
                detail: format!("{} values for a {rows}x{cols} matrix", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Column vector.
    pub fn column(data: Vec<f64>) -> Self {
        Self {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::column(vec![value])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Scalar value of a 1x1 matrix.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    fn add_assign(&mut self, other: &Matrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{}) [", self.rows, self.cols)?;
        for r in 0..self.rows {
            if r > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Concat(Vec<Var>),
    Hadamard(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Mean(Var),
    RowSelect(Var, usize),
    Scale(Var, Var),
    SoftmaxMasked { scores: Var, active: Vec<usize> },
    CrossEntropy { logits: Var, label: usize },
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Operation whose backward rule can be deliberately broken, used as a
/// negative control for the gradient checker.
#[cfg(feature = "fault-injection")]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackwardFault {
    Sigmoid,
    Tanh,
    MatMul,
}

/// Recorded computation from leaves to a scalar loss.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
    backward_done: bool,
    #[cfg(feature = "fault-injection")]
    fault: Option<BackwardFault>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax of `scores` restricted to `active`, in the order of `active`.
pub fn softmax_masked(scores: &[f64], active: &[usize]) -> Result<Vec<f64>> {
    if active.is_empty() {
        return Err(AutodiffError::EmptyActiveSet);
    }
    for &a in active {
        if a >= scores.len() {
            return Err(AutodiffError::Index {
                op: "softmax_masked",
                index: a,
                len: scores.len(),
            });
        }
    }
    let max = active
        .iter()
        .map(|&a| scores[a])
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = active.iter().map(|&a| (scores[a] - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let out: Vec<f64> = exps.into_iter().map(|e| e / sum).collect();
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(AutodiffError::NonFinite {
            op: "softmax_masked",
        })
    }
}

/// `log(sum(exp(x)))` with max subtraction.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn matmul_values(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let a_row = a.row(i);
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
            #[cfg(feature = "fault-injection")]
            fault: None,
        }
    }

    #[cfg(feature = "fault-injection")]
    pub fn inject_fault(&mut self, fault: BackwardFault) {
        self.fault = Some(fault);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Differentiable leaf (a parameter).
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that receives no gradient (an input).
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated on `v` by the last backward pass (zero if `v`
    /// was not reached).
    pub fn grad(&self, v: Var) -> Matrix {
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.nodes[v.0].value.shape();
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn zero_grads(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_checked(&mut self, name: &'static str, value: Matrix, op: Op, parents: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op: name });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push(value, op, requires_grad))
    }

    fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> AutodiffError {
        AutodiffError::Shape {
            op,
            detail: format!("{}x{} vs {}x{}", a.rows, a.cols, b.rows, b.cols),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols != vb.rows {
            return Err(Self::shape_err("matmul", va, vb));
        }
        let out = matmul_values(va, vb);
        self.push_checked("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Self::shape_err("add", va, vb));
        }
        let mut out = va.clone();
        out.add_assign(vb);
        self.push_checked("add", out, Op::Add(a, b), &[a, b])
    }

    /// Sum of several same-shaped values, left to right.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let (first, rest) = terms.split_first().ok_or(AutodiffError::Shape {
            op: "add",
            detail: "no terms".into(),
        })?;
        let mut acc = *first;
        for &t in rest {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    /// Vertical concatenation of column vectors, in order.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(AutodiffError::Shape {
                op: "concat",
                detail: "no parts".into(),
            });
        }
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.cols != 1 {
                return Err(AutodiffError::Shape {
                    op: "concat",
                    detail: format!("part is {}x{}, expected a column vector", v.rows, v.cols),
                });
            }
            data.extend_from_slice(&v.data);
        }
        self.push_checked("concat", Matrix::column(data), Op::Concat(parts.to_vec()), parts)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Self::shape_err("hadamard", va, vb));
        }
        let data = va.data.iter().zip(&vb.data).map(|(x, y)| x * y).collect();
        let out = Matrix {
            rows: va.rows,
            cols: va.cols,
            data,
        };
        self.push_checked("hadamard", out, Op::Hadamard(a, b), &[a, b])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        let out = Matrix {
            rows: va.rows,
            cols: va.cols,
            data: va.data.iter().map(|&x| sigmoid(x)).collect(),
        };
        self.push_checked("sigmoid", out, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        let out = Matrix {
            rows: va.rows,
            cols: va.cols,
            data: va.data.iter().map(|x| x.tanh()).collect(),
        };
        self.push_checked("tanh", out, Op::Tanh(a), &[a])
    }

    /// Mean of all entries, as a scalar.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.is_empty() {
            return Err(AutodiffError::Shape {
                op: "mean",
                detail: "empty input".into(),
            });
        }
        let m = va.data.iter().sum::<f64>() / va.len() as f64;
        self.push_checked("mean", Matrix::scalar(m), Op::Mean(a), &[a])
    }

    /// Row `index` of `a` as a column vector (a scalar when `a` is a vector).
    pub fn row_select(&mut self, a: Var, index: usize) -> Result<Var> {
        let va = self.value(a);
        if index >= va.rows {
            return Err(AutodiffError::Index {
                op: "row_select",
                index,
                len: va.rows,
            });
        }
        let out = Matrix::column(va.row(index).to_vec());
        self.push_checked("row_select", out, Op::RowSelect(a, index), &[a])
    }

    /// `scalar * a` where `scalar` is 1x1.
    pub fn scale(&mut self, scalar: Var, a: Var) -> Result<Var> {
        let (vs, va) = (self.value(scalar), self.value(a));
        if vs.shape() != (1, 1) {
            return Err(Self::shape_err("scale", vs, va));
        }
        let s = vs.item();
        let out = Matrix {
            rows: va.rows,
            cols: va.cols,
            data: va.data.iter().map(|x| s * x).collect(),
        };
        self.push_checked("scale", out, Op::Scale(scalar, a), &[scalar, a])
    }

    /// Softmax of a score vector over the `active` positions; the output has
    /// one entry per active index, in the order given.
    pub fn softmax_masked(&mut self, scores: Var, active: &[usize]) -> Result<Var> {
        let vs = self.value(scores);
        if vs.cols != 1 {
            return Err(AutodiffError::Shape {
                op: "softmax_masked",
                detail: format!("scores are {}x{}", vs.rows, vs.cols),
            });
        }
        let out = softmax_masked(&vs.data, active)?;
        self.push_checked(
            "softmax_masked",
            Matrix::column(out),
            Op::SoftmaxMasked {
                scores,
                active: active.to_vec(),
            },
            &[scores],
        )
    }

    /// Negative log-softmax of `logits` at `label`, as a scalar.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let vl = self.value(logits);
        if vl.cols != 1 {
            return Err(AutodiffError::Shape {
                op: "cross_entropy",
                detail: format!("logits are {}x{}", vl.rows, vl.cols),
            });
        }
        if label >= vl.rows {
            return Err(AutodiffError::Index {
                op: "cross_entropy",
                index: label,
                len: vl.rows,
            });
        }
        let loss = log_sum_exp(&vl.data) - vl.data[label];
        self.push_checked(
            "cross_entropy",
            Matrix::scalar(loss),
            Op::CrossEntropy { logits, label },
            &[logits],
        )
    }

    /// Populate gradients of the scalar `root` with respect to every node.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.backward_done {
            return Err(AutodiffError::DoubleBackward);
        }
        let (rows, cols) = self.value(root).shape();
        if (rows, cols) != (1, 1) {
            return Err(AutodiffError::NonScalarRoot { rows, cols });
        }
        self.backward_done = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[root.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=root.0).rev() {
            let Some(upstream) = self.grads[idx].take() else {
                continue;
            };
            if self.nodes[idx].requires_grad {
                self.propagate(idx, &upstream);
            }
            self.grads[idx] = Some(upstream);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Matrix) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&mut self, idx: usize, up: &Matrix) {
        let op = self.nodes[idx].op.clone();
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                // dA = up * B^T, dB = A^T * up
                let mut da = Matrix::zeros(va.rows, va.cols);
                for i in 0..va.rows {
                    for k in 0..va.cols {
                        let mut s = 0.0;
                        for j in 0..vb.cols {
                            s += up.get(i, j) * vb.get(k, j);
                        }
                        da.data[i * va.cols + k] = s;
                    }
                }
                let mut db = Matrix::zeros(vb.rows, vb.cols);
                for i in 0..va.rows {
                    for k in 0..va.cols {
                        let aik = va.get(i, k);
                        for j in 0..vb.cols {
                            db.data[k * vb.cols + j] += aik * up.get(i, j);
                        }
                    }
                }
                #[cfg(feature = "fault-injection")]
                if self.fault == Some(BackwardFault::MatMul) {
                    for v in da.data.iter_mut() {
                        *v *= 1.01;
                    }
                }
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Op::Add(a, b) => {
                self.accumulate(a, up.clone());
                self.accumulate(b, up.clone());
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.nodes[p.0].value.rows;
                    let g = Matrix::column(up.data[offset..offset + len].to_vec());
                    offset += len;
                    self.accumulate(p, g);
                }
            }
            Op::Hadamard(a, b) => {
                let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let da = Matrix {
                    rows: up.rows,
                    cols: up.cols,
                    data: up.data.iter().zip(&vb.data).map(|(g, y)| g * y).collect(),
                };
                let db = Matrix {
                    rows: up.rows,
                    cols: up.cols,
                    data: up.data.iter().zip(&va.data).map(|(g, x)| g * x).collect(),
                };
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[idx].value;
                #[allow(unused_mut)]
                let mut data: Vec<f64> = up.data.iter().zip(&y.data).map(|(g, s)| g * s * (1.0 - s)).collect();
                #[cfg(feature = "fault-injection")]
                if self.fault == Some(BackwardFault::Sigmoid) {
                    data = up.data.iter().zip(&y.data).map(|(g, s)| g * s).collect();
                }
                let g = Matrix {
                    rows: up.rows,
                    cols: up.cols,
                    data,
                };
                self.accumulate(a, g);
            }
            Op::Tanh(a) => {
                let y = &self.nodes[idx].value;
                #[allow(unused_mut)]
                let mut data: Vec<f64> = up.data.iter().zip(&y.data).map(|(g, t)| g * (1.0 - t * t)).collect();
                #[cfg(feature = "fault-injection")]
                if self.fault == Some(BackwardFault::Tanh) {
                    data = up.data.iter().zip(&y.data).map(|(g, t)| g * (1.0 - t)).collect();
                }
                let g = Matrix {
                    rows: up.rows,
                    cols: up.cols,
                    data,
                };
                self.accumulate(a, g);
            }
            Op::Mean(a) => {
                let va = &self.nodes[a.0].value;
                let g = Matrix::filled(va.rows, va.cols, up.item() / va.len() as f64);
                self.accumulate(a, g);
            }
            Op::RowSelect(a, row) => {
                let va = &self.nodes[a.0].value;
                let mut g = Matrix::zeros(va.rows, va.cols);
                g.data[row * va.cols..(row + 1) * va.cols].copy_from_slice(&up.data);
                self.accumulate(a, g);
            }
            Op::Scale(s, a) => {
                let (vs, va) = (self.nodes[s.0].value.item(), &self.nodes[a.0].value);
                let ds: f64 = up.data.iter().zip(&va.data).map(|(g, x)| g * x).sum();
                let da = Matrix {
                    rows: up.rows,
                    cols: up.cols,
                    data: up.data.iter().map(|g| g * vs).collect(),
                };
                self.accumulate(s, Matrix::scalar(ds));
                self.accumulate(a, da);
            }
            Op::SoftmaxMasked { scores, active } => {
                let y = &self.nodes[idx].value.data;
                let dot: f64 = y.iter().zip(&up.data).map(|(a, b)| a * b).sum();
                let mut g = Matrix::zeros(self.nodes[scores.0].value.rows, 1);
                for (k, &a) in active.iter().enumerate() {
                    g.data[a] += y[k] * (up.data[k] - dot);
                }
                self.accumulate(scores, g);
            }
            Op::CrossEntropy { logits, label } => {
                let x = &self.nodes[logits.0].value.data;
                let lse = log_sum_exp(x);
                let u = up.item();
                let mut data: Vec<f64> = x.iter().map(|v| u * (v - lse).exp()).collect();
                data[label] -= u;
                self.accumulate(logits, Matrix::column(data));
            }
        }
    }
}

/// Outcome of comparing analytic gradients against central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat coordinate where the maximum occurred.
    pub worst_coordinate: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Relative error `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compare the tape gradient of a scalar function against central finite
/// differences on every coordinate of `params`.
///
/// `build` records the function on a fresh tape: it receives the flat
/// parameter vector and returns the scalar root together with the leaves that
/// hold those parameters, in flat order.
pub fn grad_check<F>(mut build: F, params: &[f64], eps: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &[f64]) -> Result<(Var, Vec<Var>)>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(AutodiffError::GradCheck(format!("eps must be positive, got {eps}")));
    }
    let mut tape = Tape::new();
    let (root, leaves) = build(&mut tape, params)?;
    tape.backward(root)?;
    let mut analytic = Vec::with_capacity(params.len());
    for &leaf in &leaves {
        analytic.extend_from_slice(tape.grad(leaf).data());
    }
    if analytic.len() != params.len() {
        return Err(AutodiffError::GradCheck(format!(
            "leaves cover {} coordinates, parameters have {}",
            analytic.len(),
            params.len()
        )));
    }

    let mut eval = |p: &[f64]| -> Result<f64> {
        let mut t = Tape::new();
        let (r, _) = build(&mut t, p)?;
        let v = t.value(r).item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(AutodiffError::NonFinite { op: "grad_check" })
        }
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_coordinate: 0,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: params.len(),
    };
    let mut probe = params.to_vec();
    for i in 0..params.len() {
        probe[i] = params[i] + eps;
        let plus = eval(&probe)?;
        probe[i] = params[i] - eps;
        let minus = eval(&probe)?;
        probe[i] = params[i];
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_relative_error || i == 0 {
            report = GradCheckReport {
                max_relative_error: err,
                worst_coordinate: i,
                analytic: analytic[i],
                numeric,
                coordinates: params.len(),
            };
        }
    }
    Ok(report)
}
