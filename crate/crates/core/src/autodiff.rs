//! Batched reverse-mode automatic differentiation.
//!
//! Nodes are whole batch-major matrices rather than scalars, so one network
//! layer on a batch of `Np` points is a single node and one training
//! iteration costs `O(Np (dN + LN^2))` flops. Trainable leaves are windows
//! into one flat parameter slice; [`Tape::backward`] returns a gradient of
//! the same length as that slice.
//!
//! Only first derivatives with respect to parameters are supported. Input
//! space derivatives are built from finite-difference stencils in
//! [`crate::residual`], which are linear combinations of recorded network
//! evaluations and therefore differentiate exactly.

use crate::error::{Error, Result};

/// Row-major `rows x cols` matrix of 64-bit floats. Row `i` is sample `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl BatchMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::config(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

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

    pub fn scalar(value: f64) -> Self {
        Self::filled(1, 1, value)
    }

    /// A `n x 1` column.
    pub fn column(values: Vec<f64>) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values,
        }
    }

    /// Build from a list of equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::config("ragged rows"));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), cols, data)
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Value of a `1 x 1` matrix.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Row-wise map producing a column: `out[i] = f(row_i)`.
    pub fn map_rows(&self, f: impl Fn(&[f64]) -> f64) -> Self {
        Self::column((0..self.rows).map(|r| f(self.row(r))).collect())
    }

    /// Copy with `delta` added to column `col` of every row.
    pub fn shifted(&self, col: usize, delta: f64) -> Self {
        let mut out = self.clone();
        for r in 0..self.rows {
            out.data[r * self.cols + col] += delta;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A window `offset .. offset + rows*cols` of the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamId {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// `max(0, x^3)`
    ReluCubed,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::ReluCubed => {
                if x > 0.0 {
                    x * x * x
                } else {
                    0.0
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::ReluCubed => {
                if x > 0.0 {
                    3.0 * x * x
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unary {
    Scale(f64),
    AddScalar(f64),
    PowConst(f64),
    Exp,
    Sin,
    Cos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduce {
    MeanSquare,
    Sum,
    Mean,
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    Affine { w: Var, b: Option<Var>, x: Var },
    Activation { kind: Activation, x: Var },
    Binary { kind: Binary, a: Var, b: Var },
    Unary { kind: Unary, x: Var },
    RowNorm { x: Var },
    LinComb { terms: Vec<(Var, f64)> },
    Reduce { kind: Reduce, x: Var },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: BatchMatrix,
    needs_grad: bool,
}

/// Gradient of a scalar root with respect to the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    flat: Vec<f64>,
}

impl Gradients {
    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.flat
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.flat[id.range()]
    }
}

/// Operation recorder over a borrowed flat parameter vector.
///
/// Inputs of every node precede it, so the reverse sweep is a plain
/// backwards walk. Each recording supports one backward pass.
#[derive(Debug)]
pub struct Tape<'p> {
    params: &'p [f64],
    nodes: Vec<Node>,
    consumed: bool,
}

fn same_or_scalar(a: (usize, usize), b: (usize, usize)) -> Option<(usize, usize)> {
    if a == b || b == (1, 1) {
        Some(a)
    } else if a == (1, 1) {
        Some(b)
    } else {
        None
    }
}

#[inline]
fn bcast(m: &BatchMatrix, i: usize) -> f64 {
    if m.data.len() == 1 {
        m.data[0]
    } else {
        m.data[i]
    }
}

/// Fold a full-shape adjoint back onto an operand that may have been broadcast.
fn unbroadcast(full: Vec<f64>, target: (usize, usize), shape: (usize, usize)) -> BatchMatrix {
    if target == (1, 1) && shape != (1, 1) {
        BatchMatrix::scalar(full.iter().sum())
    } else {
        BatchMatrix {
            rows: target.0,
            cols: target.1,
            data: full,
        }
    }
}

/// `c (m x n) = a (m x k) * b (k x n)` with arbitrary strides, overwriting `c`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: all strides describe in-bounds row/column-major views of
    // slices whose lengths were checked against the shapes by the caller.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [f64]) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn params(&self) -> &'p [f64] {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &BatchMatrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, op: Op, value: BatchMatrix, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_flag(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: BatchMatrix) -> Var {
        self.push(Op::Constant, value, false)
    }

    pub fn constant_scalar(&mut self, value: f64) -> Var {
        self.constant(BatchMatrix::scalar(value))
    }

    /// Trainable leaf viewing `rows*cols` parameters starting at `offset`.
    pub fn param(&mut self, id: ParamId) -> Result<Var> {
        if id.offset + id.len() > self.params.len() {
            return Err(Error::config(format!(
                "parameter window {:?} exceeds parameter vector of length {}",
                id,
                self.params.len()
            )));
        }
        let value = BatchMatrix {
            rows: id.rows,
            cols: id.cols,
            data: self.params[id.range()].to_vec(),
        };
        Ok(self.push(Op::Param(id), value, true))
    }

    /// `x W^T + b`, with `W: out x in`, `b: 1 x out`, `x: batch x in`.
    pub fn affine(&mut self, w: Var, b: Option<Var>, x: Var) -> Result<Var> {
        let (n_out, n_in) = self.shape(w);
        let (batch, x_cols) = self.shape(x);
        if x_cols != n_in {
            return Err(Error::config(format!(
                "affine: weight is {n_out}x{n_in} but input has {x_cols} columns"
            )));
        }
        if let Some(b) = b {
            if self.shape(b) != (1, n_out) {
                return Err(Error::config(format!(
                    "affine: bias shape {:?} does not match output width {n_out}",
                    self.shape(b)
                )));
            }
        }
        let mut out = vec![0.0; batch * n_out];
        gemm(
            batch,
            n_in,
            n_out,
            &self.value(x).data,
            n_in as isize,
            1,
            &self.value(w).data,
            1,
            n_in as isize,
            &mut out,
        );
        if let Some(b) = b {
            let bias = &self.value(b).data;
            for row in out.chunks_mut(n_out) {
                for (o, bv) in row.iter_mut().zip(bias) {
                    *o += bv;
                }
            }
        }
        let needs = self.grad_flag(w) || self.grad_flag(x) || b.is_some_and(|b| self.grad_flag(b));
        let value = BatchMatrix {
            rows: batch,
            cols: n_out,
            data: out,
        };
        Ok(self.push(Op::Affine { w, b, x }, value, needs))
    }

    pub fn activation(&mut self, kind: Activation, x: Var) -> Var {
        let value = self.value(x).map(|v| kind.apply(v));
        let needs = self.grad_flag(x);
        self.push(Op::Activation { kind, x }, value, needs)
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let shape = same_or_scalar(sa, sb).ok_or_else(|| {
            Error::config(format!("{kind:?}: incompatible shapes {sa:?} and {sb:?}"))
        })?;
        let (va, vb) = (self.value(a), self.value(b));
        let n = shape.0 * shape.1;
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let (x, y) = (bcast(va, i), bcast(vb, i));
            data.push(match kind {
                Binary::Add => x + y,
                Binary::Sub => x - y,
                Binary::Mul => x * y,
                Binary::Div => {
                    if y == 0.0 {
                        return Err(Error::domain(format!("division by zero at entry {i}")));
                    }
                    x / y
                }
            });
        }
        let needs = self.grad_flag(a) || self.grad_flag(b);
        let value = BatchMatrix {
            rows: shape.0,
            cols: shape.1,
            data,
        };
        Ok(self.push(Op::Binary { kind, a, b }, value, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    fn unary(&mut self, kind: Unary, x: Var) -> Result<Var> {
        let input = self.value(x);
        if let Unary::PowConst(p) = kind {
            let fractional = p.fract() != 0.0;
            for (i, &v) in input.data.iter().enumerate() {
                if fractional && v < 0.0 {
                    return Err(Error::domain(format!(
                        "fractional power {p} of negative value {v} at entry {i}"
                    )));
                }
                if p < 0.0 && v == 0.0 {
                    return Err(Error::domain(format!(
                        "negative power {p} of zero at entry {i}"
                    )));
                }
            }
        }
        let value = input.map(|v| match kind {
            Unary::Scale(k) => k * v,
            Unary::AddScalar(k) => v + k,
            Unary::PowConst(p) => powf_exact(v, p),
            Unary::Exp => v.exp(),
            Unary::Sin => v.sin(),
            Unary::Cos => v.cos(),
        });
        let needs = self.grad_flag(x);
        Ok(self.push(Op::Unary { kind, x }, value, needs))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        self.unary(Unary::Scale(k), x).expect("scale is total")
    }

    pub fn add_scalar(&mut self, x: Var, k: f64) -> Var {
        self.unary(Unary::AddScalar(k), x).expect("shift is total")
    }

    pub fn pow_const(&mut self, x: Var, p: f64) -> Result<Var> {
        self.unary(Unary::PowConst(p), x)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(Unary::Exp, x).expect("exp is total")
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(Unary::Sin, x).expect("sin is total")
    }

    pub fn cos(&mut self, x: Var) -> Var {
        self.unary(Unary::Cos, x).expect("cos is total")
    }

    /// Euclidean norm of each row: `batch x d -> batch x 1`.
    pub fn abs_norm(&mut self, x: Var) -> Var {
        let value = self
            .value(x)
            .map_rows(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt());
        let needs = self.grad_flag(x);
        self.push(Op::RowNorm { x }, value, needs)
    }

    /// `sum_i coef_i * term_i` over equally shaped terms.
    pub fn lincomb(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let Some(&(first, _)) = terms.first() else {
            return Err(Error::config("lincomb of no terms"));
        };
        let shape = self.shape(first);
        let mut data = vec![0.0; shape.0 * shape.1];
        let mut needs = false;
        for &(v, c) in terms {
            if self.shape(v) != shape {
                return Err(Error::config(format!(
                    "lincomb: shape {:?} differs from {:?}",
                    self.shape(v),
                    shape
                )));
            }
            for (d, s) in data.iter_mut().zip(&self.value(v).data) {
                *d += c * s;
            }
            needs |= self.grad_flag(v);
        }
        let value = BatchMatrix {
            rows: shape.0,
            cols: shape.1,
            data,
        };
        Ok(self.push(
            Op::LinComb {
                terms: terms.to_vec(),
            },
            value,
            needs,
        ))
    }

    /// Reduce to a `1 x 1` node. Non-finite results are rejected here.
    pub fn reduce(&mut self, kind: Reduce, x: Var) -> Result<Var> {
        let input = self.value(x);
        let n = input.data.len();
        if n == 0 {
            return Err(Error::config("reduction of an empty batch"));
        }
        let v = match kind {
            Reduce::MeanSquare => input.data.iter().map(|v| v * v).sum::<f64>() / n as f64,
            Reduce::Sum => input.data.iter().sum(),
            Reduce::Mean => input.data.iter().sum::<f64>() / n as f64,
        };
        if !v.is_finite() {
            let bad = input.data.iter().position(|v| !v.is_finite());
            return Err(Error::domain(match bad {
                Some(i) => format!("non-finite value at entry {i} entering {kind:?}"),
                None => format!("{kind:?} overflowed"),
            }));
        }
        let needs = self.grad_flag(x);
        Ok(self.push(Op::Reduce { kind, x }, BatchMatrix::scalar(v), needs))
    }

    pub fn mean_square(&mut self, x: Var) -> Result<Var> {
        self.reduce(Reduce::MeanSquare, x)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.reduce(Reduce::Sum, x)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.reduce(Reduce::Mean, x)
    }

    /// Reverse sweep from a scalar root.
    ///
    /// Parameters the root does not depend on get zero gradient. A second
    /// call on the same recording is a usage error.
    pub fn backward(&mut self, root: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::Usage(
                "backward already run on this recording".into(),
            ));
        }
        if self.shape(root) != (1, 1) {
            return Err(Error::Usage(format!(
                "backward root must be scalar, got {:?}",
                self.shape(root)
            )));
        }
        self.consumed = true;
        let mut grad = vec![0.0; self.params.len()];
        let mut adj: Vec<Option<BatchMatrix>> = vec![None; root.0 + 1];
        adj[root.0] = Some(BatchMatrix::scalar(1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    for (dst, src) in grad[id.range()].iter_mut().zip(&g.data) {
                        *dst += src;
                    }
                }
                Op::Affine { w, b, x } => {
                    let (n_out, n_in) = self.shape(*w);
                    let batch = g.rows;
                    if self.grad_flag(*x) {
                        let mut dx = vec![0.0; batch * n_in];
                        gemm(
                            batch,
                            n_out,
                            n_in,
                            &g.data,
                            n_out as isize,
                            1,
                            &self.value(*w).data,
                            n_in as isize,
                            1,
                            &mut dx,
                        );
                        accumulate(&mut adj, *x, BatchMatrix::new(batch, n_in, dx)?);
                    }
                    if self.grad_flag(*w) {
                        let mut dw = vec![0.0; n_out * n_in];
                        gemm(
                            n_out,
                            batch,
                            n_in,
                            &g.data,
                            1,
                            n_out as isize,
                            &self.value(*x).data,
                            n_in as isize,
                            1,
                            &mut dw,
                        );
                        accumulate(&mut adj, *w, BatchMatrix::new(n_out, n_in, dw)?);
                    }
                    if let Some(b) = b {
                        if self.grad_flag(*b) {
                            let mut db = vec![0.0; n_out];
                            for row in g.data.chunks(n_out) {
                                for (d, v) in db.iter_mut().zip(row) {
                                    *d += v;
                                }
                            }
                            accumulate(&mut adj, *b, BatchMatrix::new(1, n_out, db)?);
                        }
                    }
                }
                Op::Activation { kind, x } => {
                    let xv = self.value(*x);
                    let data = g
                        .data
                        .iter()
                        .zip(&xv.data)
                        .map(|(gi, xi)| gi * kind.derivative(*xi))
                        .collect();
                    accumulate(&mut adj, *x, BatchMatrix::new(g.rows, g.cols, data)?);
                }
                Op::Binary { kind, a, b } => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let n = g.data.len();
                    let shape = g.shape();
                    if self.grad_flag(*a) {
                        let full: Vec<f64> = (0..n)
                            .map(|k| {
                                let gk = g.data[k];
                                match kind {
                                    Binary::Add | Binary::Sub => gk,
                                    Binary::Mul => gk * bcast(vb, k),
                                    Binary::Div => gk / bcast(vb, k),
                                }
                            })
                            .collect();
                        accumulate(&mut adj, *a, unbroadcast(full, va.shape(), shape));
                    }
                    if self.grad_flag(*b) {
                        let full: Vec<f64> = (0..n)
                            .map(|k| {
                                let gk = g.data[k];
                                match kind {
                                    Binary::Add => gk,
                                    Binary::Sub => -gk,
                                    Binary::Mul => gk * bcast(va, k),
                                    Binary::Div => {
                                        let y = bcast(vb, k);
                                        -gk * bcast(va, k) / (y * y)
                                    }
                                }
                            })
                            .collect();
                        accumulate(&mut adj, *b, unbroadcast(full, vb.shape(), shape));
                    }
                }
                Op::Unary { kind, x } => {
                    let xv = self.value(*x);
                    let out = &node.value;
                    let data = g
                        .data
                        .iter()
                        .enumerate()
                        .map(|(k, gk)| {
                            let xi = xv.data[k];
                            gk * match kind {
                                Unary::Scale(c) => *c,
                                Unary::AddScalar(_) => 1.0,
                                Unary::PowConst(p) => {
                                    if *p == 0.0 {
                                        0.0
                                    } else {
                                        p * powf_exact(xi, p - 1.0)
                                    }
                                }
                                Unary::Exp => out.data[k],
                                Unary::Sin => xi.cos(),
                                Unary::Cos => -xi.sin(),
                            }
                        })
                        .collect();
                    accumulate(&mut adj, *x, BatchMatrix::new(g.rows, g.cols, data)?);
                }
                Op::RowNorm { x } => {
                    let xv = self.value(*x);
                    let cols = xv.cols;
                    let mut data = vec![0.0; xv.data.len()];
                    for r in 0..xv.rows {
                        let norm = node.value.data[r];
                        if norm > 0.0 {
                            for c in 0..cols {
                                data[r * cols + c] = g.data[r] * xv.data[r * cols + c] / norm;
                            }
                        }
                    }
                    accumulate(&mut adj, *x, BatchMatrix::new(xv.rows, cols, data)?);
                }
                Op::LinComb { terms } => {
                    for &(v, c) in terms {
                        if self.grad_flag(v) {
                            accumulate(&mut adj, v, g.map(|gk| c * gk));
                        }
                    }
                }
                Op::Reduce { kind, x } => {
                    let xv = self.value(*x);
                    let n = xv.data.len() as f64;
                    let g0 = g.item();
                    let data = match kind {
                        Reduce::MeanSquare => xv.data.iter().map(|v| 2.0 * v * g0 / n).collect(),
                        Reduce::Sum => vec![g0; xv.data.len()],
                        Reduce::Mean => vec![g0 / n; xv.data.len()],
                    };
                    accumulate(&mut adj, *x, BatchMatrix::new(xv.rows, xv.cols, data)?);
                }
            }
        }
        Ok(Gradients { flat: grad })
    }
}

fn accumulate(adj: &mut [Option<BatchMatrix>], v: Var, g: BatchMatrix) {
    match &mut adj[v.0] {
        Some(existing) => {
            for (e, x) in existing.data.iter_mut().zip(&g.data) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// `x^p` using integer multiplication when `p` is a small integer, so the
/// result is exact for polynomial factors.
pub(crate) fn powf_exact(x: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p.abs() <= 64.0 {
        x.powi(p as i32)
    } else {
        x.powf(p)
    }
}
