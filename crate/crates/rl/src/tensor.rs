//! Dense 2-D tensors and a tape for reverse-mode differentiation.
//!
//! Every forward computation is recorded on a [`Tape`] as a list of nodes;
//! [`Tape::backward`] walks the list in reverse and returns the gradient of a
//! scalar loss with respect to every node. Leaves created with
//! [`Tape::param`] remember which parameter they came from so gradients can
//! be routed back to a parameter store.

use std::cell::{Cell, RefCell};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no computation graph recorded")]
    NoGraphRecorded,
    #[error("loss must be a 1x1 tensor, got {0}x{1}")]
    NonScalarLoss(usize, usize),
}

/// Row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{}, {:?})", self.rows, self.cols, self.data)
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Self { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match {rows}x{cols}");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self { rows: rows.len(), cols, data: rows.concat() }
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_vec(1, 1, vec![v])
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

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.shape(), (1, 1));
        self.data[0]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul {:?} x {:?}", self.shape(), other.shape());
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let o = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in o.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self^T * other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows);
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let b = other.row(k);
            for i in 0..self.cols {
                let a = self.data[k * self.cols + i];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out.data[i * other.cols..(i + 1) * other.cols].iter_mut().zip(b) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * other^T`.
    pub fn matmul_t(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols);
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = a.iter().zip(other.row(j)).map(|(x, y)| x * y).sum();
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(self.shape(), other.shape(), "elementwise shapes differ");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Masked entries are set to this value before a softmax.
pub const MASK_VALUE: f64 = -1e30;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Elu(usize),
    LeakyRelu(usize, f64),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    Transpose(usize),
    SelectRows(usize, Vec<usize>),
    ConcatCols(Vec<usize>),
    MeanRows(usize),
    RepeatRows(usize),
    Sum(usize),
    Mean(usize),
    MaskFill(usize, Arc<Vec<bool>>),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    GatherCols(usize, Vec<usize>),
    Minimum(usize, usize),
    Clamp(usize, f64, f64),
    OuterAdd(usize, usize),
}

struct Node {
    value: Arc<Matrix>,
    op: Op,
    param: Option<usize>,
}

/// Recording of one forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.value())
    }
}

/// Gradients of a loss with respect to every node on a tape.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    params: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Matrix {
        match &self.grads[v.id] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = v.shape();
                Matrix::zeros(r, c)
            }
        }
    }

    /// `(parameter index, gradient)` for every parameter leaf reached.
    pub fn params(&self) -> impl Iterator<Item = (usize, &Matrix)> + '_ {
        self.params
            .iter()
            .filter_map(|&(p, node)| self.grads[node].as_ref().map(|g| (p, g)))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, value: Matrix, op: Op) -> Var<'_> {
        self.push_arc(Arc::new(value), op, None)
    }

    fn push_arc(&self, value: Arc<Matrix>, op: Op, param: Option<usize>) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, param });
        Var { tape: self, id: nodes.len() - 1 }
    }

    /// A constant leaf.
    pub fn constant(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    /// A leaf whose gradient is reported under parameter index `index`.
    pub fn param(&self, index: usize, value: Arc<Matrix>) -> Var<'_> {
        self.push_arc(value, Op::Leaf, Some(index))
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn value(&self, id: usize) -> Arc<Matrix> {
        self.nodes.borrow()[id].value.clone()
    }

    /// Gradient of the 1x1 `loss` with respect to every recorded node. The
    /// tape is consumed; calling again returns `NoGraphRecorded`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        if self.consumed.get() || self.is_empty() {
            return Err(TensorError::NoGraphRecorded);
        }
        let (r, c) = loss.shape();
        if (r, c) != (1, 1) {
            return Err(TensorError::NonScalarLoss(r, c));
        }
        self.consumed.set(true);
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Matrix>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Matrix::scalar(1.0));
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let val = |i: usize| &*nodes[i].value;
            let mut acc = |i: usize, d: Matrix| match &mut grads[i] {
                Some(e) => e.add_assign(&d),
                slot @ None => *slot = Some(d),
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    acc(*a, g.matmul_t(val(*b)));
                    acc(*b, val(*a).t_matmul(&g));
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    acc(*a, g.zip_map(val(*b), |g, y| g * y));
                    acc(*b, g.zip_map(val(*a), |g, x| g * x));
                }
                Op::AddRow(a, b) => {
                    let mut db = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (d, v) in db.data.iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    acc(*a, g.clone());
                    acc(*b, db);
                }
                Op::Scale(a, s) => acc(*a, g.map(|v| v * s)),
                Op::AddScalar(a) => acc(*a, g.clone()),
                Op::Elu(a) => acc(*a, g.zip_map(val(*a), |g, x| if x > 0.0 { g } else { g * x.exp() })),
                Op::LeakyRelu(a, slope) => {
                    acc(*a, g.zip_map(val(*a), |g, x| if x > 0.0 { g } else { g * slope }))
                }
                Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |g, y| g * (1.0 - y * y))),
                Op::Exp(a) => acc(*a, g.zip_map(&node.value, |g, y| g * y)),
                Op::Log(a) => acc(*a, g.zip_map(val(*a), |g, x| g / x)),
                Op::Square(a) => acc(*a, g.zip_map(val(*a), |g, x| 2.0 * g * x)),
                Op::Transpose(a) => acc(*a, g.transpose()),
                Op::SelectRows(a, idx) => {
                    let src = val(*a);
                    let mut d = Matrix::zeros(src.rows, src.cols);
                    for (k, &r) in idx.iter().enumerate() {
                        for (o, v) in d.row_mut(r).iter_mut().zip(g.row(k)) {
                            *o += v;
                        }
                    }
                    acc(*a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = val(p).cols;
                        let mut d = Matrix::zeros(g.rows, w);
                        for r in 0..g.rows {
                            d.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                        }
                        off += w;
                        acc(p, d);
                    }
                }
                Op::MeanRows(a) => {
                    let src = val(*a);
                    let inv = 1.0 / src.rows as f64;
                    let mut d = Matrix::zeros(src.rows, src.cols);
                    for r in 0..src.rows {
                        for (o, v) in d.row_mut(r).iter_mut().zip(g.row(0)) {
                            *o = v * inv;
                        }
                    }
                    acc(*a, d);
                }
                Op::RepeatRows(a) => {
                    let mut d = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (o, v) in d.data.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(*a, d);
                }
                Op::Sum(a) => {
                    let (r, c) = val(*a).shape();
                    acc(*a, Matrix::filled(r, c, g.item()));
                }
                Op::Mean(a) => {
                    let (r, c) = val(*a).shape();
                    acc(*a, Matrix::filled(r, c, g.item() / (r * c) as f64));
                }
                Op::MaskFill(a, keep) => {
                    let mut d = g.clone();
                    for (v, &k) in d.data.iter_mut().zip(keep.iter()) {
                        if !k {
                            *v = 0.0;
                        }
                    }
                    acc(*a, d);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut d = Matrix::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(g, y)| g * y).sum();
                        for ((o, gv), yv) in d.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *o = yv * (gv - dot);
                        }
                    }
                    acc(*a, d);
                }
                Op::LogSoftmaxRows(a) => {
                    let y = &node.value;
                    let mut d = Matrix::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let total: f64 = g.row(r).iter().sum();
                        for ((o, gv), yv) in d.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *o = gv - yv.exp() * total;
                        }
                    }
                    acc(*a, d);
                }
                Op::GatherCols(a, idx) => {
                    let src = val(*a);
                    let mut d = Matrix::zeros(src.rows, src.cols);
                    for (r, &c) in idx.iter().enumerate() {
                        d.set(r, c, g.get(r, 0));
                    }
                    acc(*a, d);
                }
                Op::Minimum(a, b) => {
                    // ties send the gradient to the first argument
                    let (x, y) = (val(*a), val(*b));
                    let mut da = Matrix::zeros(x.rows, x.cols);
                    let mut db = Matrix::zeros(x.rows, x.cols);
                    for i in 0..g.data.len() {
                        if x.data[i] <= y.data[i] {
                            da.data[i] = g.data[i];
                        } else {
                            db.data[i] = g.data[i];
                        }
                    }
                    acc(*a, da);
                    acc(*b, db);
                }
                Op::Clamp(a, lo, hi) => {
                    acc(*a, g.zip_map(val(*a), |g, x| if x < *lo || x > *hi { 0.0 } else { g }))
                }
                Op::OuterAdd(a, b) => {
                    let mut da = Matrix::zeros(g.rows, 1);
                    let mut db = Matrix::zeros(g.cols, 1);
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            let v = g.get(r, c);
                            da.data[r] += v;
                            db.data[c] += v;
                        }
                    }
                    acc(*a, da);
                    acc(*b, db);
                }
            }
            grads[id] = Some(g);
        }
        let params = nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|p| (p, i)))
            .collect();
        Ok(Gradients { grads, params })
    }
}

fn row_softmax(x: &Matrix, log: bool) -> Matrix {
    let mut out = Matrix::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        let row = x.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        for (o, v) in out.row_mut(r).iter_mut().zip(row) {
            *o = if log { v - lse } else { (v - max).exp() / sum };
        }
    }
    out
}

pub fn softmax_rows(x: &Matrix) -> Matrix {
    row_softmax(x, false)
}

pub fn log_softmax_rows(x: &Matrix) -> Matrix {
    row_softmax(x, true)
}

pub fn elu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        v.exp_m1()
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Arc<Matrix> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value().shape()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    fn unary(self, op: Op, f: impl FnOnce(&Matrix) -> Matrix) -> Var<'t> {
        let v = f(&self.value());
        self.tape.push(v, op)
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        let v = self.value().matmul(&other.value());
        self.tape.push(v, Op::MatMul(self.id, other.id))
    }

    pub fn add(self, other: Var<'t>) -> Var<'t> {
        let v = self.value().zip_map(&other.value(), |a, b| a + b);
        self.tape.push(v, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'t>) -> Var<'t> {
        let v = self.value().zip_map(&other.value(), |a, b| a - b);
        self.tape.push(v, Op::Sub(self.id, other.id))
    }

    pub fn mul(self, other: Var<'t>) -> Var<'t> {
        let v = self.value().zip_map(&other.value(), |a, b| a * b);
        self.tape.push(v, Op::Mul(self.id, other.id))
    }

    /// Add the `1 x c` row `bias` to every row.
    pub fn add_row(self, bias: Var<'t>) -> Var<'t> {
        let (x, b) = (self.value(), bias.value());
        assert_eq!((1, x.cols), b.shape(), "bias shape");
        let mut v = (*x).clone();
        for r in 0..v.rows {
            for (o, b) in v.row_mut(r).iter_mut().zip(&b.data) {
                *o += b;
            }
        }
        self.tape.push(v, Op::AddRow(self.id, bias.id))
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, s), |x| x.map(|v| v * s))
    }

    pub fn add_scalar(self, s: f64) -> Var<'t> {
        self.unary(Op::AddScalar(self.id), |x| x.map(|v| v + s))
    }

    pub fn elu(self) -> Var<'t> {
        self.unary(Op::Elu(self.id), |x| x.map(elu))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        self.unary(Op::LeakyRelu(self.id, slope), |x| x.map(|v| if v > 0.0 { v } else { slope * v }))
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), |x| x.map(f64::tanh))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp(self.id), |x| x.map(f64::exp))
    }

    pub fn log(self) -> Var<'t> {
        self.unary(Op::Log(self.id), |x| x.map(f64::ln))
    }

    pub fn square(self) -> Var<'t> {
        self.unary(Op::Square(self.id), |x| x.map(|v| v * v))
    }

    pub fn transpose(self) -> Var<'t> {
        self.unary(Op::Transpose(self.id), Matrix::transpose)
    }

    pub fn select_rows(self, idx: &[usize]) -> Var<'t> {
        let x = self.value();
        let mut v = Matrix::zeros(idx.len(), x.cols);
        for (k, &r) in idx.iter().enumerate() {
            v.row_mut(k).copy_from_slice(x.row(r));
        }
        self.tape.push(v, Op::SelectRows(self.id, idx.to_vec()))
    }

    pub fn concat_cols(parts: &[Var<'t>]) -> Var<'t> {
        let tape = parts[0].tape;
        let vals: Vec<Arc<Matrix>> = parts.iter().map(|p| p.value()).collect();
        let rows = vals[0].rows;
        assert!(vals.iter().all(|v| v.rows == rows), "concat_cols row mismatch");
        let cols: usize = vals.iter().map(|v| v.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for v in &vals {
                out.row_mut(r)[off..off + v.cols].copy_from_slice(v.row(r));
                off += v.cols;
            }
        }
        tape.push(out, Op::ConcatCols(parts.iter().map(|p| p.id).collect()))
    }

    /// `1 x c` column means.
    pub fn mean_rows(self) -> Var<'t> {
        self.unary(Op::MeanRows(self.id), |x| {
            let mut v = Matrix::zeros(1, x.cols);
            for r in 0..x.rows {
                for (o, a) in v.data.iter_mut().zip(x.row(r)) {
                    *o += a;
                }
            }
            v.map(|s| s / x.rows as f64)
        })
    }

    /// Stack `n` copies of a `1 x c` row.
    pub fn repeat_rows(self, n: usize) -> Var<'t> {
        self.unary(Op::RepeatRows(self.id), |x| {
            assert_eq!(x.rows, 1, "repeat_rows expects a single row");
            Matrix::from_vec(n, x.cols, x.data.repeat(n))
        })
    }

    pub fn sum(self) -> Var<'t> {
        self.unary(Op::Sum(self.id), |x| Matrix::scalar(x.sum()))
    }

    pub fn mean(self) -> Var<'t> {
        self.unary(Op::Mean(self.id), |x| Matrix::scalar(x.sum() / x.len() as f64))
    }

    /// Replace entries where `keep` is false by `fill`; no gradient flows
    /// through replaced entries.
    pub fn mask_fill(self, keep: Arc<Vec<bool>>, fill: f64) -> Var<'t> {
        let x = self.value();
        assert_eq!(keep.len(), x.len(), "mask length");
        let mut v = (*x).clone();
        for (o, &k) in v.data.iter_mut().zip(keep.iter()) {
            if !k {
                *o = fill;
            }
        }
        self.tape.push(v, Op::MaskFill(self.id, keep))
    }

    pub fn softmax_rows(self) -> Var<'t> {
        self.unary(Op::SoftmaxRows(self.id), softmax_rows)
    }

    pub fn log_softmax_rows(self) -> Var<'t> {
        self.unary(Op::LogSoftmaxRows(self.id), log_softmax_rows)
    }

    /// `r x 1` column with `self[r, idx[r]]`.
    pub fn gather_cols(self, idx: &[usize]) -> Var<'t> {
        let x = self.value();
        assert_eq!(idx.len(), x.rows, "one index per row");
        let v = Matrix::from_vec(x.rows, 1, idx.iter().enumerate().map(|(r, &c)| x.get(r, c)).collect());
        self.tape.push(v, Op::GatherCols(self.id, idx.to_vec()))
    }

    pub fn minimum(self, other: Var<'t>) -> Var<'t> {
        let v = self.value().zip_map(&other.value(), f64::min);
        self.tape.push(v, Op::Minimum(self.id, other.id))
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        self.unary(Op::Clamp(self.id, lo, hi), |x| x.map(|v| v.clamp(lo, hi)))
    }

    /// `out[i, j] = self[i] + other[j]` for column vectors.
    pub fn outer_add(self, other: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), other.value());
        assert!(a.cols == 1 && b.cols == 1, "outer_add expects column vectors");
        let mut v = Matrix::zeros(a.rows, b.rows);
        for i in 0..a.rows {
            for j in 0..b.rows {
                v.set(i, j, a.data[i] + b.data[j]);
            }
        }
        self.tape.push(v, Op::OuterAdd(self.id, other.id))
    }
}
