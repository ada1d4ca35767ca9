//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation as a node holding its forward value.
//! Node ids increase in creation order and every node's inputs were created
//! before it, so creation order is a topological order and [`Tape::backward`]
//! is a single reverse sweep. Tapes are cheap to build; the training loop
//! builds a fresh one for every step.
//!
//! Leaves are either parameters (created with [`Tape::leaf`], receive
//! gradients) or constants ([`Tape::constant`], never receive gradients).
//! Any node depending only on constants is itself constant and is skipped by
//! the backward sweep, which is how frozen teacher outputs are kept out of
//! the graph.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Matrix, Result, EPS};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Square(Var),
    SqrtGuarded(Var),
    Exp(Var),
    LnGuarded(Var),
    MaxScalar(Var, f64),
    Scale(Var, f64),
    AddScalar(Var),
    AddRow(Var, Var),
    DivByScalar(Var, Var),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    RowNorm(Var),
    RowL2Normalize(Var),
    SoftmaxRows(Var, f64),
    LogSoftmaxRows(Var, f64),
    Gather(Var, Vec<usize>),
    Pick(Var, Vec<usize>),
    Huber(Var, Var),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf | Constant => Vec::new(),
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | AddRow(a, b)
            | DivByScalar(a, b) | Huber(a, b) => vec![*a, *b],
            Square(a) | SqrtGuarded(a) | Exp(a) | LnGuarded(a) | MaxScalar(a, _)
            | Scale(a, _) | AddScalar(a) | Sum(a) | Mean(a) | RowSum(a) | RowNorm(a)
            | RowL2Normalize(a) | SoftmaxRows(a, _) | LogSoftmaxRows(a, _)
            | Gather(a, _) | Pick(a, _) => vec![*a],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Matrix,
    grad: Option<Matrix>,
    requires_grad: bool,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    swept: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable input (parameter).
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push_raw(Op::Leaf, value, true)
    }

    /// A constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_raw(Op::Constant, value, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn is_leaf(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Leaf)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Ids of the nodes `v` was computed from.
    pub fn inputs_of(&self, v: Var) -> Vec<Var> {
        self.nodes[v.0].op.inputs()
    }

    /// Gradient of the last backward root with respect to `v`. Nodes the
    /// sweep did not reach report a zero matrix of their own shape; `None`
    /// before any backward pass.
    pub fn grad(&self, v: Var) -> Option<Matrix> {
        if !self.swept {
            return None;
        }
        let node = &self.nodes[v.0];
        Some(match &node.grad {
            Some(g) => g.clone(),
            None => Matrix::zeros(node.value.rows(), node.value.cols()),
        })
    }

    /// Clears gradient accumulators so that `backward` may run again.
    pub fn reset_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.swept = false;
    }

    fn push_raw(&mut self, op: Op, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node { op, value, grad: None, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_raw(op, value, requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::dim(op, sa, sb));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let (x, y) = (self.value(a), self.value(b));
        let data = x.as_slice().iter().zip(y.as_slice()).map(|(&p, &q)| f(p, q)).collect();
        Matrix::from_vec(x.rows(), x.cols(), data).expect("shapes checked")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.zip_map(a, b, |x, y| x + y);
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.zip_map(a, b, |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), value))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.zip_map(a, b, |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), value))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        self.push(Op::Square(a), value)
    }

    /// `sqrt(max(x, EPS))`.
    pub fn sqrt_guarded(&mut self, a: Var) -> Var {
        let value = self.value(a).map(math::sqrt_guarded);
        self.push(Op::SqrtGuarded(a), value)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(math::exp);
        self.push(Op::Exp(a), value)
    }

    /// `ln(max(x, EPS))`.
    pub fn ln_guarded(&mut self, a: Var) -> Var {
        let value = self.value(a).map(math::ln_guarded);
        self.push(Op::LnGuarded(a), value)
    }

    /// `max(x, s)` elementwise; the subgradient at the kink is 0.
    pub fn max_scalar(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x.max(s));
        self.push(Op::MaxScalar(a, s), value)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.max_scalar(a, 0.0)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        self.push(Op::Scale(a, s), value)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x + s);
        self.push(Op::AddScalar(a), value)
    }

    /// `a + 1·row` for an `n×c` matrix and a `1×c` row (bias addition).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(Error::dim("add_row", x.shape(), r.shape()));
        }
        let mut value = x.clone();
        for i in 0..value.rows() {
            for (v, b) in value.row_mut(i).iter_mut().zip(r.as_slice()) {
                *v += b;
            }
        }
        Ok(self.push(Op::AddRow(a, row), value))
    }

    /// `a / s` for a `1×1` node `s`. The caller guards `s` away from zero.
    pub fn div_by_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let d = self.value(s);
        let Some(d) = d.item() else {
            return Err(Error::dim("div_by_scalar", self.value(a).shape(), d.shape()));
        };
        let value = self.value(a).map(|x| x / d);
        Ok(self.push(Op::DivByScalar(a, s), value))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(Error::Domain(format!("sum of an empty {}x{} matrix", x.rows(), x.cols())));
        }
        let value = Matrix::scalar(x.sum());
        Ok(self.push(Op::Sum(a), value))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(Error::Domain(format!("mean of an empty {}x{} matrix", x.rows(), x.cols())));
        }
        let value = Matrix::scalar(x.sum() / x.len() as f64);
        Ok(self.push(Op::Mean(a), value))
    }

    /// Per-row sums, `n×1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let value = Matrix::from_fn(x.rows(), 1, |i, _| x.row(i).iter().sum());
        self.push(Op::RowSum(a), value)
    }

    /// Per-row Euclidean norms, `n×1`. Exact zero for a zero row, whose
    /// gradient is taken as 0.
    pub fn row_norm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let value = Matrix::from_fn(x.rows(), 1, |i, _| row_norm(x.row(i)));
        self.push(Op::RowNorm(a), value)
    }

    /// Each row divided by `max(‖row‖₂, EPS)`.
    pub fn row_l2_normalize(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for i in 0..value.rows() {
            let row = value.row_mut(i);
            let n = row_norm(row).max(EPS);
            row.iter_mut().for_each(|v| *v /= n);
        }
        self.push(Op::RowL2Normalize(a), value)
    }

    /// Row-wise `softmax(x / temperature)` with max subtraction.
    pub fn softmax_rows(&mut self, a: Var, temperature: f64) -> Result<Var> {
        check_temperature(temperature)?;
        let mut value = self.value(a).clone();
        for i in 0..value.rows() {
            softmax_in_place(value.row_mut(i), temperature);
        }
        Ok(self.push(Op::SoftmaxRows(a, temperature), value))
    }

    /// Row-wise `log softmax(x / temperature)` with max subtraction.
    pub fn log_softmax_rows(&mut self, a: Var, temperature: f64) -> Result<Var> {
        check_temperature(temperature)?;
        let mut value = self.value(a).clone();
        for i in 0..value.rows() {
            log_softmax_in_place(value.row_mut(i), temperature);
        }
        Ok(self.push(Op::LogSoftmaxRows(a, temperature), value))
    }

    /// Rows of `a` at `indices` (repeats allowed); backward scatter-adds.
    pub fn gather_rows(&mut self, a: Var, indices: Vec<usize>) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::Domain(format!("row index {bad} out of range for {} rows", x.rows())));
        }
        let value = x.select_rows(&indices);
        Ok(self.push(Op::Gather(a, indices), value))
    }

    /// `n×1` column holding `a[i, columns[i]]`.
    pub fn pick_per_row(&mut self, a: Var, columns: Vec<usize>) -> Result<Var> {
        let x = self.value(a);
        if columns.len() != x.rows() {
            return Err(Error::dim("pick_per_row", x.shape(), (columns.len(), 1)));
        }
        if let Some(&bad) = columns.iter().find(|&&c| c >= x.cols()) {
            return Err(Error::Domain(format!("column {bad} out of range for {} columns", x.cols())));
        }
        let value = Matrix::from_fn(x.rows(), 1, |i, _| x[(i, columns[i])]);
        Ok(self.push(Op::Pick(a, columns), value))
    }

    /// Elementwise Huber penalty (unit threshold) between `a` and `b`.
    pub fn huber(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("huber", a, b)?;
        let value = self.zip_map(a, b, math::huber);
        Ok(self.push(Op::Huber(a, b), value))
    }

    /// Reverse sweep from the scalar `root`, seeding its gradient with 1.
    ///
    /// A second call needs an intervening [`Tape::reset_grads`].
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.swept {
            return Err(Error::State("backward called twice without reset_grads".into()));
        }
        let shape = self.value(root).shape();
        if shape != (1, 1) {
            return Err(Error::dim("backward root", shape, (1, 1)));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Matrix::scalar(1.0));
        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if self.nodes[id].requires_grad {
                self.propagate(id, &g, &mut grads);
            }
            self.nodes[id].grad = Some(g);
        }
        self.swept = true;
        Ok(())
    }

    fn propagate(&self, id: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[id];
        let y = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, delta: Matrix| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta).expect("gradient shape"),
                slot @ None => *slot = Some(delta),
            }
        };
        let ew = |x: &Matrix, f: &dyn Fn(usize, f64) -> f64| {
            let data = g.as_slice().iter().enumerate().map(|(i, &gv)| f(i, gv)).collect();
            Matrix::from_vec(x.rows(), x.cols(), data).expect("gradient shape")
        };
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    acc(*a, g.matmul(&val(*b).transpose()).expect("matmul grad"));
                }
                if self.nodes[b.0].requires_grad {
                    acc(*b, val(*a).transpose().matmul(g).expect("matmul grad"));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                let (xa, xb) = (val(*a), val(*b));
                acc(*a, ew(xa, &|i, gv| gv * xb.as_slice()[i]));
                acc(*b, ew(xb, &|i, gv| gv * xa.as_slice()[i]));
            }
            Op::Square(a) => {
                let x = val(*a);
                acc(*a, ew(x, &|i, gv| 2.0 * x.as_slice()[i] * gv));
            }
            Op::SqrtGuarded(a) => {
                let x = val(*a);
                acc(*a, ew(x, &|i, gv| {
                    if x.as_slice()[i] > EPS {
                        0.5 * gv / y.as_slice()[i]
                    } else {
                        0.0
                    }
                }));
            }
            Op::Exp(a) => acc(*a, ew(y, &|i, gv| gv * y.as_slice()[i])),
            Op::LnGuarded(a) => {
                let x = val(*a);
                acc(*a, ew(x, &|i, gv| {
                    let xi = x.as_slice()[i];
                    if xi > EPS {
                        gv / xi
                    } else {
                        0.0
                    }
                }));
            }
            Op::MaxScalar(a, s) => {
                let x = val(*a);
                acc(*a, ew(x, &|i, gv| if x.as_slice()[i] > *s { gv } else { 0.0 }));
            }
            Op::Scale(a, s) => acc(*a, g.scale(*s)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                let mut col_sums = Matrix::zeros(1, g.cols());
                for i in 0..g.rows() {
                    for (c, v) in col_sums.as_mut_slice().iter_mut().zip(g.row(i)) {
                        *c += v;
                    }
                }
                acc(*row, col_sums);
            }
            Op::DivByScalar(a, s) => {
                let d = val(*s).as_slice()[0];
                acc(*a, g.scale(1.0 / d));
                let x = val(*a);
                let dot: f64 = g.as_slice().iter().zip(x.as_slice()).map(|(p, q)| p * q).sum();
                acc(*s, Matrix::scalar(-dot / (d * d)));
            }
            Op::Sum(a) => {
                let x = val(*a);
                acc(*a, Matrix::filled(x.rows(), x.cols(), g.as_slice()[0]));
            }
            Op::Mean(a) => {
                let x = val(*a);
                acc(*a, Matrix::filled(x.rows(), x.cols(), g.as_slice()[0] / x.len() as f64));
            }
            Op::RowSum(a) => {
                let x = val(*a);
                acc(*a, Matrix::from_fn(x.rows(), x.cols(), |i, _| g[(i, 0)]));
            }
            Op::RowNorm(a) => {
                let x = val(*a);
                acc(*a, Matrix::from_fn(x.rows(), x.cols(), |i, j| {
                    let n = y[(i, 0)];
                    if n > 0.0 {
                        g[(i, 0)] * x[(i, j)] / n
                    } else {
                        0.0
                    }
                }));
            }
            Op::RowL2Normalize(a) => {
                let x = val(*a);
                let mut out = Matrix::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    let raw = row_norm(x.row(i));
                    let (gi, yi) = (g.row(i), y.row(i));
                    if raw > EPS {
                        let dot: f64 = gi.iter().zip(yi).map(|(p, q)| p * q).sum();
                        for (o, (gv, yv)) in out.row_mut(i).iter_mut().zip(gi.iter().zip(yi)) {
                            *o = (gv - yv * dot) / raw;
                        }
                    } else {
                        for (o, gv) in out.row_mut(i).iter_mut().zip(gi) {
                            *o = gv / EPS;
                        }
                    }
                }
                acc(*a, out);
            }
            Op::SoftmaxRows(a, t) => {
                let mut out = Matrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let (gi, yi) = (g.row(i), y.row(i));
                    let dot: f64 = gi.iter().zip(yi).map(|(p, q)| p * q).sum();
                    for (o, (gv, yv)) in out.row_mut(i).iter_mut().zip(gi.iter().zip(yi)) {
                        *o = yv * (gv - dot) / t;
                    }
                }
                acc(*a, out);
            }
            Op::LogSoftmaxRows(a, t) => {
                let mut out = Matrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let (gi, yi) = (g.row(i), y.row(i));
                    let total: f64 = gi.iter().sum();
                    for (o, (gv, lv)) in out.row_mut(i).iter_mut().zip(gi.iter().zip(yi)) {
                        *o = (gv - math::exp(*lv) * total) / t;
                    }
                }
                acc(*a, out);
            }
            Op::Gather(a, idx) => {
                let x = val(*a);
                let mut out = Matrix::zeros(x.rows(), x.cols());
                for (r, &src) in idx.iter().enumerate() {
                    for (o, gv) in out.row_mut(src).iter_mut().zip(g.row(r)) {
                        *o += gv;
                    }
                }
                acc(*a, out);
            }
            Op::Pick(a, cols) => {
                let x = val(*a);
                let mut out = Matrix::zeros(x.rows(), x.cols());
                for (i, &c) in cols.iter().enumerate() {
                    out[(i, c)] = g[(i, 0)];
                }
                acc(*a, out);
            }
            Op::Huber(a, b) => {
                let (xa, xb) = (val(*a), val(*b));
                let d = ew(xa, &|i, gv| gv * math::huber_grad(xa.as_slice()[i], xb.as_slice()[i]));
                acc(*b, d.scale(-1.0));
                acc(*a, d);
            }
        }
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Parameter(format!("temperature must be positive, got {t}")));
    }
    Ok(())
}

pub(crate) fn row_norm(row: &[f64]) -> f64 {
    math::sqrt(row.iter().map(|v| v * v).sum())
}

pub(crate) fn softmax_in_place(row: &mut [f64], temperature: f64) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v / temperature));
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = math::exp(*v / temperature - max);
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

pub(crate) fn log_softmax_in_place(row: &mut [f64], temperature: f64) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v / temperature));
    let lse = math::ln(row.iter().map(|&v| math::exp(v / temperature - max)).sum::<f64>()) + max;
    row.iter_mut().for_each(|v| *v = *v / temperature - lse);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let mut t = Tape::new();
        let i2 = t.constant(Matrix::identity(2));
        let x = t.leaf(m(&[&[1.0, -2.0, 3.0], &[0.5, 4.0, -1.0]]));
        let y = t.matmul(i2, x).unwrap();
        assert_eq!(t.value(y), t.value(x));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::zeros(2, 3));
        let b = t.leaf(Matrix::zeros(2, 3));
        let err = t.matmul(a, b).unwrap_err();
        assert_eq!(err, Error::Dimension { op: "matmul", left: (2, 3), right: (2, 3) });
    }

    #[test]
    fn sum_of_product_gradient_is_ones_times_bt() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::from_fn(2, 3, |i, j| (i + j) as f64));
        let bm = Matrix::from_fn(3, 2, |i, j| (i as f64) - 2.0 * j as f64 + 0.5);
        let b = t.leaf(bm.clone());
        let p = t.matmul(a, b).unwrap();
        let s = t.sum(p).unwrap();
        t.backward(s).unwrap();
        let expected = Matrix::ones(2, 2).matmul(&bm.transpose()).unwrap();
        assert_eq!(t.grad(a).unwrap(), expected);
    }

    #[test]
    fn sub_self_is_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_fn(3, 3, |i, j| (i * j) as f64 - 1.5));
        let z = t.sub(x, x).unwrap();
        assert!(t.value(z).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sqrt_guard_at_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::zeros(1, 1));
        let r = t.sqrt_guarded(x);
        assert_eq!(t.value(r).item(), Some(libm::sqrt(1e-12)));
        t.backward(r).unwrap();
        assert!(t.grad(x).unwrap().is_finite());
    }

    #[test]
    fn ln_guard_at_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::zeros(1, 1));
        let r = t.ln_guarded(x);
        assert_eq!(t.value(r).item(), Some(libm::log(1e-12)));
        t.backward(r).unwrap();
        assert!(t.grad(x).unwrap().is_finite());
    }

    #[test]
    fn elementwise_shape_mismatch() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::zeros(2, 2));
        let b = t.leaf(Matrix::zeros(2, 3));
        assert!(matches!(t.add(a, b), Err(Error::Dimension { op: "add", .. })));
        assert!(matches!(t.mul(a, b), Err(Error::Dimension { op: "mul", .. })));
        assert!(matches!(t.huber(a, b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn reductions() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::ones(2, 3));
        let s = t.sum(x).unwrap();
        assert_eq!(t.value(s).item(), Some(6.0));

        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_fn(2, 2, |i, j| (i + 3 * j) as f64));
        let mu = t.mean(x).unwrap();
        let g = t.scale(mu, 3.0);
        t.backward(g).unwrap();
        assert_eq!(t.grad(x).unwrap(), Matrix::filled(2, 2, 0.75));

        let mut t = Tape::new();
        let e = t.leaf(Matrix::zeros(0, 3));
        assert!(matches!(t.sum(e), Err(Error::Domain(_))));
        assert!(matches!(t.mean(e), Err(Error::Domain(_))));
    }

    #[test]
    fn row_l2_normalize_values() {
        let mut t = Tape::new();
        let x = t.leaf(m(&[&[3.0, 4.0], &[0.6, 0.8], &[0.0, 0.0]]));
        let y = t.row_l2_normalize(x);
        let v = t.value(y);
        assert!((v[(0, 0)] - 0.6).abs() < 1e-15 && (v[(0, 1)] - 0.8).abs() < 1e-15);
        assert!((v[(1, 0)] - 0.6).abs() < 1e-15 && (v[(1, 1)] - 0.8).abs() < 1e-15);
        assert_eq!(v.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn softmax_cases() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::filled(2, 4, 3.0));
        let p = t.softmax_rows(x, 1.0).unwrap();
        assert!(t.value(p).as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-15));

        let x = t.leaf(m(&[&[1.0, 2.0]]));
        let p = t.softmax_rows(x, 100.0).unwrap();
        assert!(t.value(p).as_slice().iter().all(|&v| (v - 0.5).abs() < 1e-2));

        assert!(matches!(t.softmax_rows(x, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(t.softmax_rows(x, -1.0), Err(Error::Parameter(_))));
        assert!(matches!(t.log_softmax_rows(x, 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn backward_seed_and_accumulation() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::scalar(2.5));
        t.backward(x).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), Some(1.0));

        let mut t = Tape::new();
        let x = t.leaf(Matrix::scalar(2.5));
        let y = t.add(x, x).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), Some(2.0));
    }

    #[test]
    fn backward_errors() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::ones(2, 2));
        assert!(matches!(t.backward(x), Err(Error::Dimension { .. })));
        let s = t.sum(x).unwrap();
        t.backward(s).unwrap();
        assert!(matches!(t.backward(s), Err(Error::State(_))));
        t.reset_grads();
        assert!(t.grad(x).is_none());
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap(), Matrix::ones(2, 2));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(Matrix::filled(1, 2, 3.0));
        let x = t.leaf(Matrix::filled(1, 2, 1.0));
        let p = t.mul(c, x).unwrap();
        let s = t.sum(p).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(c).unwrap(), Matrix::zeros(1, 2));
        assert_eq!(t.grad(x).unwrap(), Matrix::filled(1, 2, 3.0));
        assert!(!t.requires_grad(c));
    }

    #[test]
    fn creation_order_is_topological() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::ones(2, 2));
        let b = t.constant(Matrix::ones(2, 2));
        let c = t.mul(a, b).unwrap();
        let d = t.row_sum(c);
        let e = t.sum(d).unwrap();
        for id in 0..t.len() {
            let v = Var(id);
            assert!(t.inputs_of(v).iter().all(|i| i.id() < id));
        }
        t.backward(e).unwrap();
        for id in 0..t.len() {
            let v = Var(id);
            assert_eq!(t.grad(v).unwrap().shape(), t.value(v).shape());
        }
    }

    #[test]
    fn gather_and_pick() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_fn(3, 2, |i, j| (2 * i + j) as f64));
        let g = t.gather_rows(x, vec![2, 0, 2]).unwrap();
        assert_eq!(t.value(g).row(0), &[4.0, 5.0]);
        let s = t.sum(g).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap(), m(&[&[1.0, 1.0], &[0.0, 0.0], &[2.0, 2.0]]));
        assert!(t.gather_rows(x, vec![3]).is_err());
        assert!(t.pick_per_row(x, vec![0, 2, 1]).is_err());
        assert!(t.pick_per_row(x, vec![0, 1]).is_err());
    }
}
