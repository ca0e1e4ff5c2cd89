//! Reverse-mode automatic differentiation on a re-entrant tape.
//!
//! A [`Tape`] records every elementary operation eagerly: each call computes
//! the forward value and appends a node. [`Tape::grad`] walks the tape
//! backwards and expresses every vector-Jacobian product with ordinary tape
//! operations, so the gradients it returns are themselves nodes that can be
//! differentiated again. That is what lets a gradient penalty such as
//! `‖∇ₓD‖²` be differentiated with respect to the discriminator's parameters.
//!
//! ```
//! use ganlab::autodiff::Tape;
//! use ganlab::Matrix;
//!
//! # fn main() -> ganlab::Result<()> {
//! let mut tape = Tape::new();
//! let x = tape.leaf(Matrix::scalar(3.0));
//! let f = tape.square(x)?;
//! let df = tape.grad(f, &[x])?[0];
//! assert_eq!(tape.value(df)?.item(), 6.0);
//! let d2f = tape.grad(df, &[x])?[0];
//! assert_eq!(tape.value(d2f)?.item(), 2.0);
//! # Ok(())
//! # }
//! ```

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use std::sync::atomic::{AtomicU64, Ordering};

pub mod check;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a specific [`Tape`].
///
/// A `Var` is only meaningful on the tape that created it; passing it to any
/// other tape is a structural error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatMul {
        a: usize,
        b: usize,
        ta: bool,
        tb: bool,
    },
    /// `n × m` plus a `1 × m` row added to every row.
    AddRow(usize, usize),
    BroadcastRows(usize),
    BroadcastCols(usize),
    /// A `1 × 1` value repeated over the node's shape.
    Fill(usize),
    ColSum(usize),
    RowSum(usize),
    Sum(usize),
    Relu(usize),
    /// `x` where `lo < by < hi`, zero elsewhere. Not differentiable in `by`.
    Gate {
        x: usize,
        by: usize,
        lo: f64,
        hi: f64,
    },
    Clamp {
        a: usize,
        lo: f64,
        hi: f64,
    },
    Sigmoid(usize),
    Tanh(usize),
    Softmax(usize),
    Log(usize),
    Exp(usize),
    Recip(usize),
    Sqrt(usize),
    Square(usize),
}

impl Op {
    /// Inputs through which gradients flow.
    fn grad_inputs(&self) -> ([usize; 2], usize) {
        use Op::*;
        match *self {
            Leaf => ([0, 0], 0),
            Add(a, b) | Sub(a, b) | Mul(a, b) | AddRow(a, b) => ([a, b], 2),
            MatMul { a, b, .. } => ([a, b], 2),
            Gate { x, .. } => ([x, 0], 1),
            Clamp { a, .. } => ([a, 0], 1),
            Neg(a) | Scale(a, _) | AddScalar(a) | BroadcastRows(a) | BroadcastCols(a)
            | Fill(a) | ColSum(a) | RowSum(a) | Sum(a) | Relu(a) | Sigmoid(a) | Tanh(a)
            | Softmax(a) | Log(a) | Exp(a) | Recip(a) | Sqrt(a) | Square(a) => ([a, 0], 1),
        }
    }
}

struct Node {
    op: Op,
    value: Matrix,
}

/// Operation record for one forward/backward computation.
///
/// Single-threaded and meant to be discarded after use; build one tape per
/// training step.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_rows(a: &Matrix) -> Matrix {
    let mut out = a.clone();
    for i in 0..out.rows() {
        let row = out.row_slice_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        for x in row.iter_mut() {
            *x /= total;
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input or parameter.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.leaf(Matrix::scalar(value))
    }

    pub fn value(&self, v: Var) -> Result<&Matrix> {
        self.check(v)?;
        Ok(&self.nodes[v.index].value)
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let m = self.value(v)?;
        if m.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "expected a scalar, found {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        Ok(m.item())
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node { op, value });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id {
            return Err(Error::Structural(format!(
                "variable belongs to tape {} but was used on tape {}",
                v.tape, self.id
            )));
        }
        debug_assert!(v.index < self.nodes.len());
        Ok(())
    }

    fn val(&self, i: usize) -> &Matrix {
        &self.nodes[i].value
    }

    fn var(&self, index: usize) -> Var {
        Var {
            tape: self.id,
            index,
        }
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.val(a.index).shape(), self.val(b.index).shape());
        if sa != sb {
            return Err(Error::Structural(format!(
                "{what}: shapes {sa:?} and {sb:?} differ"
            )));
        }
        Ok(())
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        self.check(a)?;
        let value = self.val(a.index).map(f);
        Ok(self.push(op, value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let value = self.val(a.index).zip_map(self.val(b.index), |x, y| x + y);
        Ok(self.push(Op::Add(a.index, b.index), value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let value = self.val(a.index).zip_map(self.val(b.index), |x, y| x - y);
        Ok(self.push(Op::Sub(a.index, b.index), value))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let value = self.val(a.index).zip_map(self.val(b.index), |x, y| x * y);
        Ok(self.push(Op::Mul(a.index, b.index), value))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Neg(a.index), |x| -x)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, Op::Scale(a.index, c), |x| c * x)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, Op::AddScalar(a.index), |x| x + c)
    }

    /// `op(a) · op(b)`, where the flags transpose either operand.
    pub fn matmul_t(&mut self, a: Var, b: Var, trans_a: bool, trans_b: bool) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (am, bm) = (self.val(a.index), self.val(b.index));
        let inner_a = if trans_a { am.rows() } else { am.cols() };
        let inner_b = if trans_b { bm.cols() } else { bm.rows() };
        if inner_a != inner_b {
            return Err(Error::Structural(format!(
                "matmul: inner dimensions {inner_a} and {inner_b} differ"
            )));
        }
        let value = Matrix::matmul(am, bm, trans_a, trans_b);
        Ok(self.push(
            Op::MatMul {
                a: a.index,
                b: b.index,
                ta: trans_a,
                tb: trans_b,
            },
            value,
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// Adds the `1 × m` row `b` to every row of the `n × m` matrix `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (am, bm) = (self.val(a.index), self.val(b.index));
        if bm.rows() != 1 || bm.cols() != am.cols() {
            return Err(Error::Structural(format!(
                "add_row: cannot add {}x{} to rows of {}x{}",
                bm.rows(),
                bm.cols(),
                am.rows(),
                am.cols()
            )));
        }
        let mut value = am.clone();
        let row = bm.as_slice();
        for i in 0..value.rows() {
            for (x, y) in value.row_slice_mut(i).iter_mut().zip(row) {
                *x += y;
            }
        }
        Ok(self.push(Op::AddRow(a.index, b.index), value))
    }

    /// Repeats a `1 × m` row `n` times.
    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        self.check(a)?;
        let am = self.val(a.index);
        if am.rows() != 1 {
            return Err(Error::Structural("broadcast_rows expects a row".into()));
        }
        let mut data = Vec::with_capacity(n * am.cols());
        for _ in 0..n {
            data.extend_from_slice(am.as_slice());
        }
        let value = Matrix::from_vec(n, am.cols(), data);
        Ok(self.push(Op::BroadcastRows(a.index), value))
    }

    /// Repeats an `n × 1` column `m` times.
    pub fn broadcast_cols(&mut self, a: Var, m: usize) -> Result<Var> {
        self.check(a)?;
        let am = self.val(a.index);
        if am.cols() != 1 {
            return Err(Error::Structural("broadcast_cols expects a column".into()));
        }
        let mut data = Vec::with_capacity(am.rows() * m);
        for &x in am.as_slice() {
            data.extend(std::iter::repeat_n(x, m));
        }
        let value = Matrix::from_vec(am.rows(), m, data);
        Ok(self.push(Op::BroadcastCols(a.index), value))
    }

    /// Repeats a scalar over a `rows × cols` matrix.
    pub fn fill(&mut self, s: Var, rows: usize, cols: usize) -> Result<Var> {
        let x = self.scalar(s)?;
        Ok(self.push(Op::Fill(s.index), Matrix::filled(rows, cols, x)))
    }

    pub fn col_sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let value = self.val(a.index).col_sums();
        Ok(self.push(Op::ColSum(a.index), value))
    }

    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let value = self.val(a.index).row_sums();
        Ok(self.push(Op::RowSum(a.index), value))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let value = Matrix::scalar(self.val(a.index).sum());
        Ok(self.push(Op::Sum(a.index), value))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let n = self.val(a.index).len();
        if n == 0 {
            return Err(Error::Contract("mean of an empty matrix".into()));
        }
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Squared Euclidean norm of all entries.
    pub fn norm_sq(&mut self, a: Var) -> Result<Var> {
        let sq = self.square(a)?;
        self.sum(sq)
    }

    /// Squared Euclidean norm of each row, as an `n × 1` column.
    pub fn row_norm_sq(&mut self, a: Var) -> Result<Var> {
        let sq = self.square(a)?;
        self.row_sum(sq)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Relu(a.index), |x| if x > 0.0 { x } else { 0.0 })
    }

    fn gate(&mut self, x: Var, by: Var, lo: f64, hi: f64) -> Result<Var> {
        self.same_shape(x, by, "gate")?;
        let value = self
            .val(x.index)
            .zip_map(self.val(by.index), |g, b| if b > lo && b < hi { g } else { 0.0 });
        Ok(self.push(
            Op::Gate {
                x: x.index,
                by: by.index,
                lo,
                hi,
            },
            value,
        ))
    }

    /// Clamps into `[lo, hi]`; the derivative is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary(a, Op::Clamp { a: a.index, lo, hi }, |x| x.clamp(lo, hi))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Sigmoid(a.index), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Tanh(a.index), f64::tanh)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let value = softmax_rows(self.val(a.index));
        Ok(self.push(Op::Softmax(a.index), value))
    }

    /// Natural logarithm; every entry must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        if let Some(bad) = self.val(a.index).as_slice().iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Domain(format!("log of non-positive value {bad}")));
        }
        self.unary(a, Op::Log(a.index), f64::ln)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Exp(a.index), f64::exp)
    }

    pub fn recip(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        if self.val(a.index).as_slice().contains(&0.0) {
            return Err(Error::Domain("reciprocal of zero".into()));
        }
        self.unary(a, Op::Recip(a.index), |x| 1.0 / x)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        if let Some(bad) = self.val(a.index).as_slice().iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Domain(format!("sqrt of non-positive value {bad}")));
        }
        self.unary(a, Op::Sqrt(a.index), f64::sqrt)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Square(a.index), |x| x * x)
    }

    /// Gradient of the scalar `f` with respect to each of `wrt`.
    ///
    /// The returned gradients are recorded on this tape and can be
    /// differentiated again. A target that `f` does not depend on gets a
    /// zero gradient of its own shape.
    pub fn grad(&mut self, f: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        self.check(f)?;
        for w in wrt {
            self.check(*w)?;
        }
        if self.val(f.index).shape() != (1, 1) {
            let (r, c) = self.val(f.index).shape();
            return Err(Error::Contract(format!(
                "gradient requested of a {r}x{c} value; f must be scalar"
            )));
        }

        let end = f.index + 1;
        // needs[i]: node i depends on some target, so it carries gradient.
        let mut needs = vec![false; end];
        for w in wrt {
            if w.index < end {
                needs[w.index] = true;
            }
        }
        for i in 0..end {
            if needs[i] {
                continue;
            }
            let (inputs, n) = self.nodes[i].op.grad_inputs();
            needs[i] = inputs[..n].iter().any(|&j| needs[j]);
        }

        let mut adjoint: Vec<Option<Var>> = vec![None; end];
        if needs[f.index] {
            adjoint[f.index] = Some(self.constant(1.0));
        }
        for i in (0..end).rev() {
            if !needs[i] {
                continue;
            }
            let Some(g) = adjoint[i] else { continue };
            let op = self.nodes[i].op;
            if matches!(op, Op::Leaf) {
                continue;
            }
            let contributions = self.vjp(op, i, g, &needs)?;
            for (j, c) in contributions {
                adjoint[j] = Some(match adjoint[j] {
                    None => c,
                    Some(prev) => self.add(prev, c)?,
                });
            }
        }

        let mut out = Vec::with_capacity(wrt.len());
        for w in wrt {
            let g = match adjoint.get(w.index).copied().flatten() {
                Some(g) => g,
                None => {
                    let (r, c) = self.val(w.index).shape();
                    self.leaf(Matrix::zeros(r, c))
                }
            };
            out.push(g);
        }
        Ok(out)
    }

    /// Gradient values without keeping handles around.
    pub fn grad_values(&mut self, f: Var, wrt: &[Var]) -> Result<Vec<Matrix>> {
        let grads = self.grad(f, wrt)?;
        Ok(grads
            .into_iter()
            .map(|g| self.nodes[g.index].value.clone())
            .collect())
    }

    /// Vector-Jacobian products of node `i` (with output adjoint `g`) for
    /// every input that needs a gradient.
    fn vjp(&mut self, op: Op, i: usize, g: Var, needs: &[bool]) -> Result<Vec<(usize, Var)>> {
        use Op::*;
        let out = self.var(i);
        let mut res = Vec::with_capacity(2);
        let id = self.id;
        let v = move |j: usize| Var { tape: id, index: j };
        match op {
            Leaf => {}
            Add(a, b) => {
                if needs[a] {
                    res.push((a, g));
                }
                if needs[b] {
                    res.push((b, g));
                }
            }
            Sub(a, b) => {
                if needs[a] {
                    res.push((a, g));
                }
                if needs[b] {
                    res.push((b, self.neg(g)?));
                }
            }
            Mul(a, b) => {
                if needs[a] {
                    res.push((a, self.mul(g, v(b))?));
                }
                if needs[b] {
                    res.push((b, self.mul(g, v(a))?));
                }
            }
            Neg(a) => res.push((a, self.neg(g)?)),
            Scale(a, c) => res.push((a, self.scale(g, c)?)),
            AddScalar(a) => res.push((a, g)),
            MatMul { a, b, ta, tb } => {
                if needs[a] {
                    let ga = if ta {
                        self.matmul_t(v(b), g, tb, true)?
                    } else {
                        self.matmul_t(g, v(b), false, !tb)?
                    };
                    res.push((a, ga));
                }
                if needs[b] {
                    let gb = if tb {
                        self.matmul_t(g, v(a), true, ta)?
                    } else {
                        self.matmul_t(v(a), g, !ta, false)?
                    };
                    res.push((b, gb));
                }
            }
            AddRow(a, b) => {
                if needs[a] {
                    res.push((a, g));
                }
                if needs[b] {
                    res.push((b, self.col_sum(g)?));
                }
            }
            BroadcastRows(a) => res.push((a, self.col_sum(g)?)),
            BroadcastCols(a) => res.push((a, self.row_sum(g)?)),
            Fill(a) => res.push((a, self.sum(g)?)),
            ColSum(a) => {
                let n = self.val(a).rows();
                res.push((a, self.broadcast_rows(g, n)?));
            }
            RowSum(a) => {
                let m = self.val(a).cols();
                res.push((a, self.broadcast_cols(g, m)?));
            }
            Sum(a) => {
                let (r, c) = self.val(a).shape();
                res.push((a, self.fill(g, r, c)?));
            }
            Relu(a) => res.push((a, self.gate(g, v(a), 0.0, f64::INFINITY)?)),
            Gate { x, by, lo, hi } => res.push((x, self.gate(g, v(by), lo, hi)?)),
            Clamp { a, lo, hi } => res.push((a, self.gate(g, v(a), lo, hi)?)),
            Sigmoid(a) => {
                // s (1 - s)
                let ns = self.neg(out)?;
                let one_minus = self.add_scalar(ns, 1.0)?;
                let ds = self.mul(out, one_minus)?;
                res.push((a, self.mul(g, ds)?));
            }
            Tanh(a) => {
                let t2 = self.square(out)?;
                let nt2 = self.neg(t2)?;
                let dt = self.add_scalar(nt2, 1.0)?;
                res.push((a, self.mul(g, dt)?));
            }
            Softmax(a) => {
                // s ⊙ (g − rowsum(g ⊙ s))
                let m = self.val(a).cols();
                let gs = self.mul(g, out)?;
                let dot = self.row_sum(gs)?;
                let dot_b = self.broadcast_cols(dot, m)?;
                let centered = self.sub(g, dot_b)?;
                res.push((a, self.mul(out, centered)?));
            }
            Log(a) => {
                let r = self.recip(v(a))?;
                res.push((a, self.mul(g, r)?));
            }
            Exp(a) => res.push((a, self.mul(g, out)?)),
            Recip(a) => {
                let r2 = self.square(out)?;
                let gr = self.mul(g, r2)?;
                res.push((a, self.neg(gr)?));
            }
            Sqrt(a) => {
                let r = self.recip(out)?;
                let half = self.scale(r, 0.5)?;
                res.push((a, self.mul(g, half)?));
            }
            Square(a) => {
                let two_a = self.scale(v(a), 2.0)?;
                res.push((a, self.mul(g, two_a)?));
            }
        }
        Ok(res)
    }
}

/// `∂f/∂x`, recorded on the tape so it can be differentiated again.
pub fn grad_wrt_input(tape: &mut Tape, f: Var, x: Var) -> Result<Var> {
    Ok(tape.grad(f, &[x])?[0])
}

/// `∂f/∂θ` for every parameter handle, in order.
pub fn grad_wrt_params(tape: &mut Tape, f: Var, params: &[Var]) -> Result<Vec<Matrix>> {
    tape.grad_values(f, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf_row(tape: &mut Tape, xs: &[f64]) -> Var {
        tape.leaf(Matrix::row(xs))
    }

    #[test]
    fn elementary_values() {
        let mut t = Tape::new();
        let z = t.constant(0.0);
        let s = t.sigmoid(z).unwrap();
        assert_eq!(t.scalar(s).unwrap(), 0.5);
        let neg = t.constant(-3.2);
        let r = t.relu(neg).unwrap();
        assert_eq!(t.scalar(r).unwrap(), 0.0);
        let k = leaf_row(&mut t, &[60.0, 0.0, 0.0]);
        let sm = t.softmax(k).unwrap();
        let p = t.value(sm).unwrap().as_slice().to_vec();
        assert!(p[0] == 1.0 && p[1] < 1e-25 && p[2] < 1e-25);
    }

    #[test]
    fn log_domain_error() {
        let mut t = Tape::new();
        let x = leaf_row(&mut t, &[1.0, 0.0]);
        assert!(matches!(t.log(x), Err(Error::Domain(_))));
        let y = t.constant(-1.0);
        assert!(matches!(t.log(y), Err(Error::Domain(_))));
    }

    #[test]
    fn cross_tape_is_structural_error() {
        let mut a = Tape::new();
        let mut b = Tape::new();
        let x = a.constant(1.0);
        let y = b.constant(2.0);
        assert!(matches!(b.add(x, y), Err(Error::Structural(_))));
        assert!(matches!(b.value(x), Err(Error::Structural(_))));
    }

    #[test]
    fn shape_mismatch_is_structural_error() {
        let mut t = Tape::new();
        let x = leaf_row(&mut t, &[1.0, 2.0]);
        let y = leaf_row(&mut t, &[1.0, 2.0, 3.0]);
        assert!(matches!(t.add(x, y), Err(Error::Structural(_))));
        assert!(matches!(t.matmul(x, y), Err(Error::Structural(_))));
    }

    #[test]
    fn non_scalar_gradient_is_contract_error() {
        let mut t = Tape::new();
        let x = leaf_row(&mut t, &[1.0, 2.0]);
        let y = t.square(x).unwrap();
        assert!(matches!(t.grad(y, &[x]), Err(Error::Contract(_))));
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let mut t = Tape::new();
        let x = leaf_row(&mut t, &[1.0, 2.0]);
        let c = t.constant(4.0);
        let f = t.square(c).unwrap();
        let g = t.grad_values(f, &[x]).unwrap();
        assert_eq!(g[0].as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn linear_penalty_gradient_is_two_theta() {
        // D(v) = θᵀv  ⇒  ‖∇_v D‖² = ‖θ‖²  ⇒  ∂/∂θ = 2θ
        let mut t = Tape::new();
        let theta = leaf_row(&mut t, &[0.3, -1.2, 2.0]);
        let v = leaf_row(&mut t, &[1.0, 4.0, -0.5]);
        let d = t.matmul_t(v, theta, false, true).unwrap();
        let dv = grad_wrt_input(&mut t, d, v).unwrap();
        let pen = t.norm_sq(dv).unwrap();
        let g = grad_wrt_params(&mut t, pen, &[theta]).unwrap();
        assert_eq!(g[0].as_slice(), &[0.6, -2.4, 4.0]);
    }

    #[test]
    fn second_derivative_of_norm_sq_is_two_identity() {
        let mut t = Tape::new();
        let x = leaf_row(&mut t, &[0.5, -1.0, 3.0]);
        let f = t.norm_sq(x).unwrap();
        let gx = grad_wrt_input(&mut t, f, x).unwrap();
        assert_eq!(t.value(gx).unwrap().as_slice(), &[1.0, -2.0, 6.0]);
        // Hessian-vector product with probe u: ∇ₓ(∇f · u) = 2u
        let u = leaf_row(&mut t, &[0.25, 7.0, -2.0]);
        let prod = t.mul(gx, u).unwrap();
        let s = t.sum(prod).unwrap();
        let hu = t.grad_values(s, &[x]).unwrap();
        assert_eq!(hu[0].as_slice(), &[0.5, 14.0, -4.0]);
    }

    #[test]
    fn matmul_vjp_handles_transposes() {
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            let mut t = Tape::new();
            let a0 = Matrix::from_vec(2, 3, vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0]);
            let b0 = Matrix::from_vec(3, 2, vec![2.0, -1.0, 1.0, 1.5, 0.0, 4.0]);
            let a = t.leaf(if ta { a0.transpose() } else { a0.clone() });
            let b = t.leaf(if tb { b0.transpose() } else { b0.clone() });
            let c = t.matmul_t(a, b, ta, tb).unwrap();
            let s = t.sum(c).unwrap();
            let g = t.grad_values(s, &[a, b]).unwrap();
            // d sum(AB)/dA = 1·Bᵀ, d/dB = Aᵀ·1
            let ga = Matrix::matmul(&Matrix::filled(2, 2, 1.0), &b0, false, true);
            let gb = Matrix::matmul(&a0, &Matrix::filled(2, 2, 1.0), true, false);
            let ga = if ta { ga.transpose() } else { ga };
            let gb = if tb { gb.transpose() } else { gb };
            assert_eq!(g[0], ga);
            assert_eq!(g[1], gb);
        }
    }
}
