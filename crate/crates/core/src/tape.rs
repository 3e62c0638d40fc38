//! Reverse-mode differentiation over small dense vectors.
//!
//! Every node owns a contiguous slice of one value arena. Nodes are appended
//! in evaluation order, so reverse append order is a valid backward schedule.
//! Elementwise nonlinearities store their local derivative next to the value;
//! opaque primitives (the mixture data prediction) store dense Jacobians.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Unary {
    Exp,
    Ln,
    Expm1,
    Sigmoid,
    SigmoidPrime,
    Softplus,
    /// Piecewise-linear maps (clamp, abs): derivative is locally constant.
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    /// Vector times a scalar node.
    Scale(Var, Var),
    /// `a * x + b` with constant `a`, `b`.
    Affine(Var, f64, f64),
    /// Elementwise map; derivative lives at `aux[start..start + len]`.
    Unary(Var, Unary, usize),
    Sum(Var),
    Dot(Var, Var),
    SumSq(Var),
    Broadcast(Var),
    Slice(Var, usize),
    /// Inverse of `Slice`: embeds the input at `offset` in a zero vector.
    Pad(Var, usize),
    Concat(Vec<Var>),
    /// `M x` with `M` stored row-major as `rows x cols`.
    MatVec(Var, Var, usize, usize),
    /// `M^T x`.
    MatTVec(Var, Var, usize, usize),
    /// `a b^T`, row-major.
    Outer(Var, Var),
    /// Linearized primitive: one Jacobian (`out_len x in_len`, row-major) per
    /// input, stored at the listed aux offsets.
    Custom(Vec<(Var, usize)>),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    start: usize,
    len: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<f64>,
    aux: Vec<f64>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    data: Vec<f64>,
    spans: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> &[f64] {
        let (s, l) = self.spans[v.0];
        &self.data[s..s + l]
    }
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

    fn push(&mut self, op: Op, value: &[f64]) -> Var {
        let start = self.values.len();
        self.values.extend_from_slice(value);
        self.nodes.push(Node {
            op,
            start,
            len: value.len(),
        });
        Var(self.nodes.len() - 1)
    }

    fn push_with(&mut self, op: Op, len: usize, f: impl FnOnce(&Self, &mut Vec<f64>)) -> Var {
        let mut out = Vec::with_capacity(len);
        f(self, &mut out);
        debug_assert_eq!(out.len(), len);
        self.push(op, &out)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let n = &self.nodes[v.0];
        &self.values[n.start..n.start + n.len]
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn dim(&self, v: Var) -> usize {
        self.nodes[v.0].len
    }

    fn same_len(&self, a: Var, b: Var) {
        assert_eq!(self.dim(a), self.dim(b), "operand lengths differ");
    }

    fn is_scalar(&self, v: Var) {
        assert_eq!(self.dim(v), 1, "expected a scalar node");
    }

    pub fn leaf(&mut self, value: &[f64]) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.push(Op::Leaf, &[value])
    }

    fn zip(&mut self, op: Op, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Var {
        self.same_len(a, b);
        let len = self.dim(a);
        self.push_with(op, len, |t, out| {
            out.extend(t.value(a).iter().zip(t.value(b)).map(|(x, y)| f(*x, *y)))
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(Op::Add(a, b), a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(Op::Sub(a, b), a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(Op::Mul(a, b), a, b, |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.zip(Op::Div(a, b), a, b, |x, y| x / y)
    }

    /// `x * s` for a scalar node `s`.
    pub fn scale(&mut self, x: Var, s: Var) -> Var {
        self.is_scalar(s);
        let k = self.scalar_value(s);
        let len = self.dim(x);
        self.push_with(Op::Scale(x, s), len, |t, out| out.extend(t.value(x).iter().map(|v| v * k)))
    }

    /// `a * x + b` elementwise with constants `a`, `b`.
    pub fn affine(&mut self, x: Var, a: f64, b: f64) -> Var {
        let len = self.dim(x);
        self.push_with(Op::Affine(x, a, b), len, |t, out| out.extend(t.value(x).iter().map(|v| a * v + b)))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 0.0)
    }

    fn unary(&mut self, x: Var, kind: Unary, f: impl Fn(f64) -> (f64, f64)) -> Var {
        let aux = self.aux.len();
        let len = self.dim(x);
        let mut out = Vec::with_capacity(len);
        for i in 0..len {
            let (y, dy) = f(self.value(x)[i]);
            out.push(y);
            self.aux.push(dy);
        }
        self.push(Op::Unary(x, kind, aux), &out)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Exp, |v| {
            let e = math::exp(v);
            (e, e)
        })
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Ln, |v| (math::ln(v), 1.0 / v))
    }

    pub fn expm1(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Expm1, |v| (math::expm1(v), math::exp(v)))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sigmoid, |v| {
            let s = math::sigmoid(v);
            (s, s * (1.0 - s))
        })
    }

    /// `sigmoid'(x) = s (1 - s)`.
    pub fn sigmoid_prime(&mut self, x: Var) -> Var {
        self.unary(x, Unary::SigmoidPrime, |v| {
            let s = math::sigmoid(v);
            (s * (1.0 - s), s * (1.0 - s) * (1.0 - 2.0 * s))
        })
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Softplus, |v| (math::softplus(v), math::sigmoid(v)))
    }

    /// Saturating clamp; the derivative is 1 on the closed interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, Unary::Linear, |v| {
            if v < lo {
                (lo, 0.0)
            } else if v > hi {
                (hi, 0.0)
            } else {
                (v, 1.0)
            }
        })
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Linear, |v| (v.abs(), if v < 0.0 { -1.0 } else { 1.0 }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).iter().sum();
        self.push(Op::Sum(x), &[s])
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        self.same_len(a, b);
        let s = math::dot(self.value(a), self.value(b));
        self.push(Op::Dot(a, b), &[s])
    }

    pub fn sum_sq(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().map(|v| v * v).sum::<f64>();
        self.push(Op::SumSq(x), &[s])
    }

    pub fn broadcast(&mut self, s: Var, len: usize) -> Var {
        self.is_scalar(s);
        let v = self.scalar_value(s);
        self.push(Op::Broadcast(s), &vec![v; len])
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        assert!(start + len <= self.dim(x), "slice out of bounds");
        let s = self.nodes[x.0].start + start;
        self.values.extend_from_within(s..s + len);
        let begin = self.values.len() - len;
        self.nodes.push(Node {
            op: Op::Slice(x, start),
            start: begin,
            len,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn index(&mut self, x: Var, i: usize) -> Var {
        self.slice(x, i, 1)
    }

    pub fn pad(&mut self, x: Var, offset: usize, total: usize) -> Var {
        let len = self.dim(x);
        assert!(offset + len <= total, "pad out of bounds");
        let mut out = vec![0.0; total];
        out[offset..offset + len].copy_from_slice(self.value(x));
        self.push(Op::Pad(x, offset), &out)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        self.push(Op::Concat(parts.to_vec()), &out)
    }

    /// `M x` for `M` of shape `rows x cols` (row-major).
    pub fn matvec(&mut self, m: Var, x: Var, rows: usize, cols: usize) -> Var {
        assert_eq!(self.dim(m), rows * cols, "matrix size");
        assert_eq!(self.dim(x), cols, "vector size");
        self.push_with(Op::MatVec(m, x, rows, cols), rows, |t, out| {
            let (mv, xv) = (t.value(m), t.value(x));
            out.extend((0..rows).map(|r| math::dot(&mv[r * cols..(r + 1) * cols], xv)));
        })
    }

    /// `M^T x` for `M` of shape `rows x cols` (row-major).
    pub fn mat_t_vec(&mut self, m: Var, x: Var, rows: usize, cols: usize) -> Var {
        assert_eq!(self.dim(m), rows * cols, "matrix size");
        assert_eq!(self.dim(x), rows, "vector size");
        self.push_with(Op::MatTVec(m, x, rows, cols), cols, |t, out| {
            let (mv, xv) = (t.value(m), t.value(x));
            out.resize(cols, 0.0);
            for r in 0..rows {
                for c in 0..cols {
                    out[c] += mv[r * cols + c] * xv[r];
                }
            }
        })
    }

    pub fn outer(&mut self, a: Var, b: Var) -> Var {
        let (ra, rb) = (self.dim(a), self.dim(b));
        self.push_with(Op::Outer(a, b), ra * rb, |t, out| {
            for &x in t.value(a) {
                out.extend(t.value(b).iter().map(|y| x * y));
            }
        })
    }

    /// Records an opaque primitive with the given output value and one
    /// Jacobian per input (`value.len() x dim(input)`, row-major).
    pub fn custom(&mut self, inputs: &[(Var, &[f64])], value: &[f64]) -> Var {
        let mut links = Vec::with_capacity(inputs.len());
        for &(v, jac) in inputs {
            assert_eq!(jac.len(), value.len() * self.dim(v), "jacobian size");
            links.push((v, self.aux.len()));
            self.aux.extend_from_slice(jac);
        }
        self.push(Op::Custom(links), value)
    }

    /// Reverse sweep from the scalar `loss`; unreached nodes get zero adjoints.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.dim(loss) != 1 {
            return Err(Error::Argument("backward needs a scalar loss"));
        }
        let mut g = vec![0.0; self.values.len()];
        g[self.nodes[loss.0].start] = 1.0;
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let (os, ol) = (node.start, node.len);
            if g[os..os + ol].iter().all(|v| *v == 0.0) {
                continue;
            }
            let span = |v: Var| {
                let n = &self.nodes[v.0];
                (n.start, n.len)
            };
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    let (sa, sb) = (span(*a).0, span(*b).0);
                    for k in 0..ol {
                        let gk = g[os + k];
                        g[sa + k] += gk;
                        g[sb + k] += sign * gk;
                    }
                }
                Op::Mul(a, b) => {
                    let (sa, sb) = (span(*a).0, span(*b).0);
                    for k in 0..ol {
                        let gk = g[os + k];
                        let (va, vb) = (self.values[sa + k], self.values[sb + k]);
                        g[sa + k] += gk * vb;
                        g[sb + k] += gk * va;
                    }
                }
                Op::Div(a, b) => {
                    let (sa, sb) = (span(*a).0, span(*b).0);
                    for k in 0..ol {
                        let gk = g[os + k];
                        let vb = self.values[sb + k];
                        g[sa + k] += gk / vb;
                        g[sb + k] -= gk * self.values[os + k] / vb;
                    }
                }
                Op::Scale(x, s) => {
                    let (sx, ss) = (span(*x).0, span(*s).0);
                    let k_s = self.values[ss];
                    let mut acc = 0.0;
                    for k in 0..ol {
                        let gk = g[os + k];
                        acc += gk * self.values[sx + k];
                        g[sx + k] += gk * k_s;
                    }
                    g[ss] += acc;
                }
                Op::Affine(x, a, _) => {
                    let sx = span(*x).0;
                    for k in 0..ol {
                        g[sx + k] += a * g[os + k];
                    }
                }
                Op::Unary(x, _, aux) => {
                    let sx = span(*x).0;
                    for k in 0..ol {
                        g[sx + k] += g[os + k] * self.aux[aux + k];
                    }
                }
                Op::Sum(x) => {
                    let (sx, lx) = span(*x);
                    let gk = g[os];
                    for k in 0..lx {
                        g[sx + k] += gk;
                    }
                }
                Op::Broadcast(x) => {
                    let sx = span(*x).0;
                    let acc: f64 = g[os..os + ol].iter().sum();
                    g[sx] += acc;
                }
                Op::Dot(a, b) => {
                    let ((sa, la), sb) = (span(*a), span(*b).0);
                    let gk = g[os];
                    for k in 0..la {
                        let (va, vb) = (self.values[sa + k], self.values[sb + k]);
                        g[sa + k] += gk * vb;
                        g[sb + k] += gk * va;
                    }
                }
                Op::SumSq(x) => {
                    let (sx, lx) = span(*x);
                    let gk = g[os];
                    for k in 0..lx {
                        g[sx + k] += 2.0 * gk * self.values[sx + k];
                    }
                }
                Op::Slice(x, off) => {
                    let sx = span(*x).0 + off;
                    for k in 0..ol {
                        g[sx + k] += g[os + k];
                    }
                }
                Op::Pad(x, off) => {
                    let (sx, lx) = span(*x);
                    for k in 0..lx {
                        g[sx + k] += g[os + off + k];
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let (sp, lp) = span(*p);
                        for k in 0..lp {
                            g[sp + k] += g[os + off + k];
                        }
                        off += lp;
                    }
                }
                Op::MatVec(m, x, rows, cols) => {
                    let (sm, sx) = (span(*m).0, span(*x).0);
                    for r in 0..*rows {
                        let gr = g[os + r];
                        if gr == 0.0 {
                            continue;
                        }
                        for c in 0..*cols {
                            g[sm + r * cols + c] += gr * self.values[sx + c];
                            g[sx + c] += gr * self.values[sm + r * cols + c];
                        }
                    }
                }
                Op::MatTVec(m, x, rows, cols) => {
                    let (sm, sx) = (span(*m).0, span(*x).0);
                    for r in 0..*rows {
                        let xr = self.values[sx + r];
                        let mut acc = 0.0;
                        for c in 0..*cols {
                            let gc = g[os + c];
                            g[sm + r * cols + c] += gc * xr;
                            acc += gc * self.values[sm + r * cols + c];
                        }
                        g[sx + r] += acc;
                    }
                }
                Op::Outer(a, b) => {
                    let ((sa, la), (sb, lb)) = (span(*a), span(*b));
                    for r in 0..la {
                        for c in 0..lb {
                            let gk = g[os + r * lb + c];
                            g[sa + r] += gk * self.values[sb + c];
                            g[sb + c] += gk * self.values[sa + r];
                        }
                    }
                }
                Op::Custom(links) => {
                    for &(x, aux) in links {
                        let (sx, lx) = span(x);
                        for r in 0..ol {
                            let gr = g[os + r];
                            for c in 0..lx {
                                g[sx + c] += gr * self.aux[aux + r * lx + c];
                            }
                        }
                    }
                }
            }
        }
        Ok(Gradients {
            data: g,
            spans: self.nodes.iter().map(|n| (n.start, n.len)).collect(),
        })
    }

    /// Gradient of the scalar `out` with respect to the vector `input`,
    /// recorded as new tape nodes so it can itself be differentiated.
    ///
    /// Only nodes that depend on `input` are visited. Custom primitives and
    /// `sigmoid_prime` on that path are rejected: their recorded adjoints
    /// would need derivatives the tape does not store.
    pub fn grad_of_input(&mut self, out: Var, input: Var) -> Result<Var> {
        if self.dim(out) != 1 {
            return Err(Error::Argument("grad_of_input needs a scalar output"));
        }
        if input > out {
            let z = vec![0.0; self.dim(input)];
            return Ok(self.leaf(&z));
        }
        let lo = input.0;
        let hi = out.0;
        let mut depends = vec![false; hi - lo + 1];
        depends[0] = true;
        for i in lo + 1..=hi {
            depends[i - lo] = self.parents(i).iter().any(|p| p.0 >= lo && depends[p.0 - lo]);
        }
        let mut adj: Vec<Option<Var>> = vec![None; hi - lo + 1];
        if !depends[hi - lo] {
            let z = vec![0.0; self.dim(input)];
            return Ok(self.leaf(&z));
        }
        adj[hi - lo] = Some(self.constant(1.0));
        let dep = |p: Var| p.0 >= lo && depends[p.0 - lo];
        for i in (lo + 1..=hi).rev() {
            let Some(gv) = adj[i - lo] else { continue };
            let me = Var(i);
            let op = self.nodes[i].op.clone();
            let mut contrib: Vec<(Var, Var)> = Vec::new();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    if dep(a) {
                        contrib.push((a, gv));
                    }
                    if dep(b) {
                        contrib.push((b, gv));
                    }
                }
                Op::Sub(a, b) => {
                    if dep(a) {
                        contrib.push((a, gv));
                    }
                    if dep(b) {
                        let n = self.neg(gv);
                        contrib.push((b, n));
                    }
                }
                Op::Mul(a, b) => {
                    if dep(a) {
                        let c = self.mul(gv, b);
                        contrib.push((a, c));
                    }
                    if dep(b) {
                        let c = self.mul(gv, a);
                        contrib.push((b, c));
                    }
                }
                Op::Div(a, b) => {
                    if dep(a) {
                        let c = self.div(gv, b);
                        contrib.push((a, c));
                    }
                    if dep(b) {
                        let go = self.mul(gv, me);
                        let q = self.div(go, b);
                        let c = self.neg(q);
                        contrib.push((b, c));
                    }
                }
                Op::Scale(x, s) => {
                    if dep(x) {
                        let c = self.scale(gv, s);
                        contrib.push((x, c));
                    }
                    if dep(s) {
                        let c = self.dot(gv, x);
                        contrib.push((s, c));
                    }
                }
                Op::Affine(x, a, _) => {
                    let c = self.affine(gv, a, 0.0);
                    contrib.push((x, c));
                }
                Op::Unary(x, kind, aux) => {
                    let d = match kind {
                        Unary::Exp => me,
                        Unary::Ln => {
                            let one = self.broadcast_const(1.0, self.dim(x));
                            self.div(one, x)
                        }
                        Unary::Expm1 => self.affine(me, 1.0, 1.0),
                        Unary::Sigmoid => self.sigmoid_prime(x),
                        Unary::Softplus => self.sigmoid(x),
                        Unary::Linear => {
                            let len = self.dim(x);
                            let d: Vec<f64> = self.aux[aux..aux + len].to_vec();
                            self.leaf(&d)
                        }
                        Unary::SigmoidPrime => {
                            return Err(Error::Unsupported("second derivative of sigmoid_prime"))
                        }
                    };
                    let c = self.mul(gv, d);
                    contrib.push((x, c));
                }
                Op::Sum(x) => {
                    let n = self.dim(x);
                    let c = self.broadcast(gv, n);
                    contrib.push((x, c));
                }
                Op::Dot(a, b) => {
                    if dep(a) {
                        let c = self.scale(b, gv);
                        contrib.push((a, c));
                    }
                    if dep(b) {
                        let c = self.scale(a, gv);
                        contrib.push((b, c));
                    }
                }
                Op::SumSq(x) => {
                    let g2 = self.affine(gv, 2.0, 0.0);
                    let c = self.scale(x, g2);
                    contrib.push((x, c));
                }
                Op::Broadcast(s) => {
                    let c = self.sum(gv);
                    contrib.push((s, c));
                }
                Op::Slice(x, off) => {
                    let n = self.dim(x);
                    let c = self.pad(gv, off, n);
                    contrib.push((x, c));
                }
                Op::Pad(x, off) => {
                    let n = self.dim(x);
                    let c = self.slice(gv, off, n);
                    contrib.push((x, c));
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.dim(p);
                        if dep(p) {
                            let c = self.slice(gv, off, n);
                            contrib.push((p, c));
                        }
                        off += n;
                    }
                }
                Op::MatVec(m, x, rows, cols) => {
                    if dep(x) {
                        let c = self.mat_t_vec(m, gv, rows, cols);
                        contrib.push((x, c));
                    }
                    if dep(m) {
                        let c = self.outer(gv, x);
                        contrib.push((m, c));
                    }
                }
                Op::MatTVec(m, x, rows, cols) => {
                    if dep(x) {
                        let c = self.matvec(m, gv, rows, cols);
                        contrib.push((x, c));
                    }
                    if dep(m) {
                        let c = self.outer(x, gv);
                        contrib.push((m, c));
                    }
                }
                Op::Outer(a, b) => {
                    let (ra, rb) = (self.dim(a), self.dim(b));
                    if dep(a) {
                        let c = self.matvec(gv, b, ra, rb);
                        contrib.push((a, c));
                    }
                    if dep(b) {
                        let c = self.mat_t_vec(gv, a, ra, rb);
                        contrib.push((b, c));
                    }
                }
                Op::Custom(_) => return Err(Error::Unsupported("input gradient through a custom primitive")),
            }
            for (p, c) in contrib {
                if !dep(p) {
                    continue;
                }
                let slot = &mut adj[p.0 - lo];
                *slot = Some(match *slot {
                    Some(prev) => self.add(prev, c),
                    None => c,
                });
            }
        }
        Ok(match adj[0] {
            Some(v) => v,
            None => {
                let z = vec![0.0; self.dim(input)];
                self.leaf(&z)
            }
        })
    }

    fn broadcast_const(&mut self, v: f64, len: usize) -> Var {
        self.leaf(&vec![v; len])
    }

    fn parents(&self, i: usize) -> Vec<Var> {
        match &self.nodes[i].op {
            Op::Leaf => Vec::new(),
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::Scale(a, b)
            | Op::Dot(a, b)
            | Op::MatVec(a, b, ..)
            | Op::MatTVec(a, b, ..)
            | Op::Outer(a, b) => vec![*a, *b],
            Op::Affine(x, ..)
            | Op::Unary(x, ..)
            | Op::Sum(x)
            | Op::SumSq(x)
            | Op::Broadcast(x)
            | Op::Slice(x, _)
            | Op::Pad(x, _) => vec![*x],
            Op::Concat(parts) => parts.clone(),
            Op::Custom(links) => links.iter().map(|(v, _)| *v).collect(),
        }
    }
}

/// Central differences `(f(p + h e_i) - f(p - h e_i)) / 2h` per coordinate.
pub fn finite_diff<F>(mut f: F, params: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::Argument("finite-difference step must be positive"));
    }
    let mut p = params.to_vec();
    let mut out = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = f(&p);
        p[i] = orig - h;
        let down = f(&p);
        p[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}
