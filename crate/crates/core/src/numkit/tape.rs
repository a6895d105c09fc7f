//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records every primitive applied during one forward pass
//! together with the forward values the backward rules need. Calling
//! [`Tape::backward`] walks the records in reverse order and accumulates
//! parameter gradients into a [`Grads`] buffer. Leaves are either constants
//! (no gradient) or references to tensors of the borrowed [`ParamSet`].

use std::collections::HashMap;

use super::dense::{self, axpy, dot, Dense2, MIN_NORM};
use super::params::{Grads, ParamSet};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Const,
    Param(usize),
    Gather { table: usize, ids: Vec<usize> },
    Affine { x: Var, w: Var, b: Var },
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Tanh(Var),
    Relu(Var),
    SoftmaxRows(Var),
    MeanRows(Var),
    Stack(Vec<Var>),
    Row(Var, usize),
    ReplaceRows { x: Var, rows: Vec<usize> },
    L2NormalizeRows { x: Var, norms: Vec<f64> },
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sum(Var),
    Distance { a: Var, b: Var },
    SoftmaxNll { logits: Var, target: usize, probs: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    op: Op,
    /// `None` only for `Op::Param`, whose value lives in the param set.
    value: Option<Dense2>,
    requires_grad: bool,
}

pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_nodes: HashMap<usize, Var>,
}

fn check_same(op: &'static str, a: &Dense2, b: &Dense2) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Dense2 {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => self.params.get(id),
            _ => node.value.as_ref().expect("non-param nodes carry values"),
        }
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Dense2, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn constant(&mut self, value: Dense2) -> Var {
        self.push(Op::Const, value, false)
    }

    /// Leaf for parameter tensor `id`. Repeated calls return the same node.
    pub fn param(&mut self, id: usize) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(id, v);
        v
    }

    /// Rows `ids` of parameter table `table`; backward scatter-adds into the
    /// touched rows only.
    pub fn gather(&mut self, table: usize, ids: &[usize]) -> Result<Var> {
        let t = self.params.get(table);
        let mut out = Dense2::zeros(ids.len(), t.cols());
        for (r, &id) in ids.iter().enumerate() {
            if id >= t.rows() {
                return Err(Error::Vocabulary {
                    index: id,
                    size: t.rows(),
                });
            }
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        Ok(self.push(
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            out,
            true,
        ))
    }

    /// `x Wᵀ + b` row by row (`W` is `out × in`, `b` is `1 × out`).
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = dense::affine_rows(self.value(x), self.value(w), self.value(b))?;
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(Op::Affine { x, w, b }, y, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = dense::matmul(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul(a, b), y, rg))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = dense::matmul_t(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMulT(a, b), y, rg))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let y = dense::tanh_map(self.value(x));
        let rg = self.rg(x);
        self.push(Op::Tanh(x), y, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = dense::relu_map(self.value(x));
        let rg = self.rg(x);
        self.push(Op::Relu(x), y, rg)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let y = dense::softmax_rows(self.value(x));
        let rg = self.rg(x);
        self.push(Op::SoftmaxRows(x), y, rg)
    }

    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        if self.value(x).rows() == 0 {
            return Err(Error::EmptyInput("mean_rows input"));
        }
        let y = dense::mean_rows(self.value(x));
        let rg = self.rg(x);
        Ok(self.push(Op::MeanRows(x), y, rg))
    }

    /// Concatenates the rows of `parts` (all with equal column count).
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::EmptyInput("stack input"))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(Error::Dimension {
                    op: "stack",
                    left: self.value(*first).shape(),
                    right: v.shape(),
                });
            }
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let y = Dense2::from_vec(rows, cols, data)?;
        Ok(self.push(Op::Stack(parts.to_vec()), y, rg))
    }

    /// Row `i` of `x` as a `1 × cols` node.
    pub fn row(&mut self, x: Var, i: usize) -> Var {
        let y = Dense2::row_vector(self.value(x).row(i).to_vec());
        let rg = self.rg(x);
        self.push(Op::Row(x, i), y, rg)
    }

    /// Copy of `x` with the listed rows overwritten by constant values; no
    /// gradient reaches the overwritten rows.
    pub fn replace_rows(&mut self, x: Var, replacements: &[(usize, Vec<f64>)]) -> Result<Var> {
        let mut y = self.value(x).clone();
        for (r, vals) in replacements {
            if *r >= y.rows() || vals.len() != y.cols() {
                return Err(Error::Dimension {
                    op: "replace_rows",
                    left: y.shape(),
                    right: (*r, vals.len()),
                });
            }
            y.row_mut(*r).copy_from_slice(vals);
        }
        let rg = self.rg(x);
        let rows = replacements.iter().map(|(r, _)| *r).collect();
        Ok(self.push(Op::ReplaceRows { x, rows }, y, rg))
    }

    /// Scales every row to unit Euclidean norm.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var> {
        let mut y = self.value(x).clone();
        let mut norms = Vec::with_capacity(y.rows());
        for r in 0..y.rows() {
            let row = y.row_mut(r);
            let norm = dot(row, row).sqrt();
            if !(norm >= MIN_NORM) {
                return Err(Error::DegenerateVector { norm });
            }
            row.iter_mut().for_each(|v| *v /= norm);
            norms.push(norm);
        }
        let rg = self.rg(x);
        Ok(self.push(Op::L2NormalizeRows { x, norms }, y, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("add", self.value(a), self.value(b))?;
        let mut y = self.value(a).clone();
        y.add_assign(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add(a, b), y, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("sub", self.value(a), self.value(b))?;
        let mut y = self.value(a).clone();
        axpy(-1.0, self.value(b).data(), y.data_mut());
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Sub(a, b), y, rg))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let mut y = self.value(x).clone();
        y.scale(s);
        let rg = self.rg(x);
        self.push(Op::Scale(x, s), y, rg)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let mut y = self.value(x).clone();
        y.data_mut().iter_mut().for_each(|v| *v += c);
        let rg = self.rg(x);
        self.push(Op::AddScalar(x), y, rg)
    }

    /// Sum of all entries as a `1 × 1` node.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Op::Sum(x), Dense2::scalar(s), rg)
    }

    /// Sum of several `1 × 1` nodes (or a single one, returned as is).
    pub fn sum_all(&mut self, parts: &[Var]) -> Result<Var> {
        match parts {
            [] => Err(Error::EmptyInput("sum_all input")),
            [one] => Ok(*one),
            _ => {
                let stacked = self.stack(parts)?;
                Ok(self.sum(stacked))
            }
        }
    }

    /// Euclidean distance between two equally shaped nodes, as `1 × 1`.
    /// The subgradient at zero distance is zero.
    pub fn distance(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("distance", self.value(a), self.value(b))?;
        let va = self.value(a).data();
        let vb = self.value(b).data();
        let d = va
            .iter()
            .zip(vb)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Distance { a, b }, Dense2::scalar(d), rg))
    }

    /// `-log softmax(logits)[target]` for a `1 × n` logit row.
    pub fn softmax_nll(&mut self, logits: Var, target: usize) -> Result<Var> {
        let l = self.value(logits);
        if l.rows() != 1 || target >= l.cols() {
            return Err(Error::Dimension {
                op: "softmax_nll",
                left: l.shape(),
                right: (1, target + 1),
            });
        }
        let row = l.row(0);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        let loss = lse - row[target];
        let probs = row.iter().map(|v| (v - lse).exp()).collect();
        let rg = self.rg(logits);
        Ok(self.push(
            Op::SoftmaxNll {
                logits,
                target,
                probs,
            },
            Dense2::scalar(loss),
            rg,
        ))
    }

    /// Accumulates `seed · ∂output/∂θ` into `grads`. `output` must be `1 × 1`.
    pub fn backward(&self, output: Var, seed: f64, grads: &mut Grads) -> Result<()> {
        let out_shape = self.value(output).shape();
        if out_shape != (1, 1) {
            return Err(Error::Dimension {
                op: "backward",
                left: out_shape,
                right: (1, 1),
            });
        }
        let mut node_grads: Vec<Option<Dense2>> = Vec::new();
        node_grads.resize_with(output.0 + 1, || None);
        node_grads[output.0] = Some(Dense2::scalar(seed));

        for i in (0..=output.0).rev() {
            let Some(g) = node_grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let y = node.value.as_ref();
            match &node.op {
                Op::Const => {}
                Op::Param(id) => grads.get_mut(*id).add_assign(&g),
                Op::Gather { table, ids } => {
                    let gt = grads.get_mut(*table);
                    for (r, &id) in ids.iter().enumerate() {
                        axpy(1.0, g.row(r), gt.row_mut(id));
                    }
                }
                Op::Affine { x, w, b } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    if let Some(dx) = self.slot(*x, &mut node_grads, grads) {
                        for r in 0..g.rows() {
                            let dxr = dx.row_mut(r);
                            for (j, &gj) in g.row(r).iter().enumerate() {
                                if gj != 0.0 {
                                    axpy(gj, wv.row(j), dxr);
                                }
                            }
                        }
                    }
                    if let Some(dw) = self.slot(*w, &mut node_grads, grads) {
                        for r in 0..g.rows() {
                            let xr = xv.row(r);
                            for (j, &gj) in g.row(r).iter().enumerate() {
                                if gj != 0.0 {
                                    axpy(gj, xr, dw.row_mut(j));
                                }
                            }
                        }
                    }
                    if let Some(db) = self.slot(*b, &mut node_grads, grads) {
                        for r in 0..g.rows() {
                            axpy(1.0, g.row(r), db.data_mut());
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if let Some(da) = self.slot(*a, &mut node_grads, grads) {
                        // dA = dC Bᵀ
                        let c = dense::matmul_t(&g, bv)?;
                        da.add_assign(&c);
                    }
                    if let Some(db) = self.slot(*b, &mut node_grads, grads) {
                        // dB = Aᵀ dC
                        for i in 0..av.rows() {
                            for k in 0..av.cols() {
                                let aik = av.get(i, k);
                                if aik != 0.0 {
                                    axpy(aik, g.row(i), db.row_mut(k));
                                }
                            }
                        }
                    }
                }
                Op::MatMulT(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if let Some(da) = self.slot(*a, &mut node_grads, grads) {
                        // dA = dC B
                        let c = dense::matmul(&g, bv)?;
                        da.add_assign(&c);
                    }
                    if let Some(db) = self.slot(*b, &mut node_grads, grads) {
                        // dB = dCᵀ A
                        for i in 0..g.rows() {
                            for j in 0..g.cols() {
                                let gij = g.get(i, j);
                                if gij != 0.0 {
                                    axpy(gij, av.row(i), db.row_mut(j));
                                }
                            }
                        }
                    }
                }
                Op::Tanh(x) => {
                    let yv = y.unwrap();
                    if let Some(dx) = self.slot(*x, &mut node_grads, grads) {
                        for ((d, &gi), &yi) in dx.data_mut().iter_mut().zip(g.data()).zip(yv.data())
                        {
                            *d += gi * (1.0 - yi * yi);
                        }
                    }
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    if let Some(dx) = self.slot(*x, &mut node_grads, grads) {
                        for ((d, &gi), &xi) in dx.data_mut().iter_mut().zip(g.data()).zip(xv.data())
                        {
                            if xi > 0.0 {
                                *d += gi;
                            }
                        }
                    }
                }
                Op::SoftmaxRows(x) => {
                    let yv = y.unwrap();
                    if let Some(dx) = self.slot(*x, &mut node_grads, grads) {
                        for r in 0..yv.rows() {
                            let (yr, gr) = (yv.row(r), g.row(r));
                            let inner = dot(gr, yr);
                            for ((d, &gi), &yi) in dx.row_mut(r).iter_mut().zip(gr).zip(yr) {
                                *d += yi * (gi - inner);
                            }
                        }
                    }
                }
                Op::MeanRows(x) => {
                    let n = self.value(*x).rows();
                    if let Some(dx) = self.slot(*x, &mut node_grads, grads) {
                        let inv = 1.0 / n as f64;
                        for r in 0..n {
                            axpy(inv, g.row(0), dx.row_mut(r));
                        }
                    }
                }
                Op::Stack(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.value(p).rows();
                        if let Some(dp) = self.slot(p, &mut node_grads, grads) {
                            for r in 0..rows {
                                axpy(1.0, g.row(offset + r), dp.row_mut(r));
                            }
                        }
                        offset += rows;
                    }
                }
                Op::Row(x, i) => {
                    if let Some(dx) = self.slot(*x, &mut node_grads, grads) {
                        axpy(1.0, g.row(0), dx.row_mut(*i));
                    }
                }
                Op::ReplaceRows { x, rows } => {
                    if let Some(dx) = self.slot(*x, &mut node_grads, grads) {
                        for r in 0..g.rows() {
                            if !rows.contains(&r) {
                                axpy(1.0, g.row(r), dx.row_mut(r));
                            }
                        }
                    }
                }
                Op::L2NormalizeRows { x, norms } => {
                    let yv = y.unwrap();
                    if let Some(dx) = self.slot(*x, &mut node_grads, grads) {
                        for (r, &norm) in norms.iter().enumerate() {
                            let (yr, gr) = (yv.row(r), g.row(r));
                            let inner = dot(gr, yr);
                            for ((d, &gi), &yi) in dx.row_mut(r).iter_mut().zip(gr).zip(yr) {
                                *d += (gi - yi * inner) / norm;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    if let Some(da) = self.slot(*a, &mut node_grads, grads) {
                        da.add_assign(&g);
                    }
                    if let Some(db) = self.slot(*b, &mut node_grads, grads) {
                        db.add_assign(&g);
                    }
                }
                Op::Sub(a, b) => {
                    if let Some(da) = self.slot(*a, &mut node_grads, grads) {
                        da.add_assign(&g);
                    }
                    if let Some(db) = self.slot(*b, &mut node_grads, grads) {
                        axpy(-1.0, g.data(), db.data_mut());
                    }
                }
                Op::Scale(x, s) => {
                    if let Some(dx) = self.slot(*x, &mut node_grads, grads) {
                        axpy(*s, g.data(), dx.data_mut());
                    }
                }
                Op::AddScalar(x) => {
                    if let Some(dx) = self.slot(*x, &mut node_grads, grads) {
                        dx.add_assign(&g);
                    }
                }
                Op::Sum(x) => {
                    let gs = g.item();
                    if let Some(dx) = self.slot(*x, &mut node_grads, grads) {
                        dx.data_mut().iter_mut().for_each(|d| *d += gs);
                    }
                }
                Op::Distance { a, b } => {
                    let d = y.unwrap().item();
                    if d > 0.0 {
                        let scale = g.item() / d;
                        let mut diff = self.value(*a).clone();
                        axpy(-1.0, self.value(*b).data(), diff.data_mut());
                        if let Some(da) = self.slot(*a, &mut node_grads, grads) {
                            axpy(scale, diff.data(), da.data_mut());
                        }
                        if let Some(db) = self.slot(*b, &mut node_grads, grads) {
                            axpy(-scale, diff.data(), db.data_mut());
                        }
                    }
                }
                Op::SoftmaxNll {
                    logits,
                    target,
                    probs,
                } => {
                    let gs = g.item();
                    if let Some(dl) = self.slot(*logits, &mut node_grads, grads) {
                        let row = dl.row_mut(0);
                        for (j, (d, &p)) in row.iter_mut().zip(probs).enumerate() {
                            let onehot = if j == *target { 1.0 } else { 0.0 };
                            *d += gs * (p - onehot);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Gradient accumulator for `v`: the parameter buffer for param leaves,
    /// a lazily zeroed node buffer otherwise, `None` when `v` needs none.
    fn slot<'a>(
        &self,
        v: Var,
        node_grads: &'a mut [Option<Dense2>],
        grads: &'a mut Grads,
    ) -> Option<&'a mut Dense2> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        match node.op {
            Op::Param(id) => Some(grads.get_mut(id)),
            _ => {
                let shape = self.value(v).shape();
                Some(node_grads[v.0].get_or_insert_with(|| Dense2::zeros(shape.0, shape.1)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: Dense2) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("w", v);
        p
    }

    #[test]
    fn affine_backward_product_rule() {
        // y = W x with W=[[2]], x=[3]: dy/dW = 3, dy/dx = 2.
        let mut ps = ParamSet::new();
        let w = ps.push("w", Dense2::scalar(2.0));
        let x = ps.push("x", Dense2::scalar(3.0));
        let b = ps.push("b", Dense2::scalar(0.0));
        let mut tape = Tape::new(&ps);
        let (wv, xv, bv) = (tape.param(w), tape.param(x), tape.param(b));
        let y = tape.affine(xv, wv, bv).unwrap();
        assert_eq!(tape.value(y).item(), 6.0);
        let mut g = Grads::zeros_like(&ps);
        tape.backward(y, 1.0, &mut g).unwrap();
        assert_eq!(g.get(w).item(), 3.0);
        assert_eq!(g.get(x).item(), 2.0);
        assert_eq!(g.get(b).item(), 1.0);
    }

    #[test]
    fn tanh_backward_at_zero() {
        let ps = one_param(Dense2::scalar(0.0));
        let mut tape = Tape::new(&ps);
        let x = tape.param(0);
        let y = tape.tanh(x);
        let s = tape.sum(y);
        let mut g = Grads::zeros_like(&ps);
        tape.backward(s, 1.0, &mut g).unwrap();
        assert_eq!(g.get(0).item(), 1.0);
    }

    #[test]
    fn gather_scatters_multiplicity() {
        let ps = one_param(Dense2::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]));
        let mut tape = Tape::new(&ps);
        let x = tape.gather(0, &[1, 1, 2]).unwrap();
        assert_eq!(tape.value(x).row(0), tape.value(x).row(1));
        let s = tape.sum(x);
        let mut g = Grads::zeros_like(&ps);
        tape.backward(s, 1.0, &mut g).unwrap();
        assert_eq!(g.get(0).row(0), &[0.0, 0.0]);
        assert_eq!(g.get(0).row(1), &[2.0, 2.0]);
        assert_eq!(g.get(0).row(2), &[1.0, 1.0]);
        assert!(matches!(
            tape.gather(0, &[3]),
            Err(Error::Vocabulary { index: 3, size: 3 })
        ));
    }

    #[test]
    fn reused_node_accumulates() {
        // f = sum(x ⊙ x) via matmul_t of x with itself: df/dx = 2x.
        let ps = one_param(Dense2::row_vector(vec![1.5, -2.0]));
        let mut tape = Tape::new(&ps);
        let x = tape.param(0);
        let f = tape.matmul_t(x, x).unwrap();
        let mut g = Grads::zeros_like(&ps);
        tape.backward(f, 1.0, &mut g).unwrap();
        assert_eq!(g.get(0).data(), &[3.0, -4.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let ps = one_param(Dense2::scalar(1.0));
        let mut tape = Tape::new(&ps);
        let c = tape.constant(Dense2::scalar(5.0));
        let t = tape.tanh(c);
        assert!(!tape.requires_grad(t));
        let w = tape.param(0);
        let y = tape.matmul(w, t).unwrap();
        let mut g = Grads::zeros_like(&ps);
        tape.backward(y, 1.0, &mut g).unwrap();
        assert_eq!(g.get(0).item(), 5f64.tanh());
    }

    #[test]
    fn distance_subgradient_zero_at_coincidence() {
        let ps = one_param(Dense2::row_vector(vec![1.0, 1.0]));
        let mut tape = Tape::new(&ps);
        let a = tape.param(0);
        let b = tape.constant(Dense2::row_vector(vec![1.0, 1.0]));
        let d = tape.distance(a, b).unwrap();
        let mut g = Grads::zeros_like(&ps);
        tape.backward(d, 1.0, &mut g).unwrap();
        assert!(g.is_all_zero());
    }

    #[test]
    fn backward_requires_scalar_output() {
        let ps = one_param(Dense2::row_vector(vec![1.0, 1.0]));
        let mut tape = Tape::new(&ps);
        let a = tape.param(0);
        let mut g = Grads::zeros_like(&ps);
        assert!(tape.backward(a, 1.0, &mut g).is_err());
    }
}
