use std::fmt;

use super::matrix::{matmul, matmul_nt, matmul_tn, sigmoid};
use super::{Gradients, Matrix, ParamId, ParamStore};
use crate::error::{CdmError, Result};

/// Probabilities are clamped to this band before the logarithm in
/// [`Graph::bce_loss`].
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Param,
    ParamRows,
    Const,
    MatMul,
    AddBias,
    Sigmoid,
    Mul,
    Sub,
    Mask,
    ConcatRows,
    Exp,
    Ln,
    BceLoss,
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OpKind::Param => "param",
            OpKind::ParamRows => "param_rows",
            OpKind::Const => "const",
            OpKind::MatMul => "matmul",
            OpKind::AddBias => "add_bias",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Mul => "elementwise_mul",
            OpKind::Sub => "subtract",
            OpKind::Mask => "mask",
            OpKind::ConcatRows => "concat_rows",
            OpKind::Exp => "exp",
            OpKind::Ln => "ln",
            OpKind::BceLoss => "bce_loss",
        };
        f.write_str(s)
    }
}

#[derive(Debug)]
enum Op {
    Param(ParamId),
    ParamRows(ParamId, Vec<usize>),
    Const,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Sigmoid(NodeId),
    Mul(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mask(NodeId, Matrix),
    ConcatRows(Vec<NodeId>),
    Exp(NodeId),
    Ln(NodeId),
    BceLoss(NodeId, Vec<f64>),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Param(_) => OpKind::Param,
            Op::ParamRows(..) => OpKind::ParamRows,
            Op::Const => OpKind::Const,
            Op::MatMul(..) => OpKind::MatMul,
            Op::AddBias(..) => OpKind::AddBias,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Mul(..) => OpKind::Mul,
            Op::Sub(..) => OpKind::Sub,
            Op::Mask(..) => OpKind::Mask,
            Op::ConcatRows(_) => OpKind::ConcatRows,
            Op::Exp(_) => OpKind::Exp,
            Op::Ln(_) => OpKind::Ln,
            Op::BceLoss(..) => OpKind::BceLoss,
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    // Empty for `Op::Param`, whose value lives in the store.
    value: Matrix,
    requires_grad: bool,
}

/// Computation graph over a borrowed [`ParamStore`].
///
/// Nodes are evaluated as they are added, so every forward value is computed
/// exactly once and node order is a topological order.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    corrupted: Option<OpKind>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            corrupted: None,
        }
    }

    /// Negative control for gradient checking: the backward rule of `kind`
    /// is scaled by 1.5.
    #[doc(hidden)]
    pub fn corrupt_rule(&mut self, kind: OpKind) {
        self.corrupted = Some(kind);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kind(&self, id: NodeId) -> OpKind {
        self.nodes[id.0].op.kind()
    }

    #[inline]
    pub fn value(&self, id: NodeId) -> &Matrix {
        match &self.nodes[id.0].op {
            Op::Param(p) => self.params.value(*p),
            _ => &self.nodes[id.0].value,
        }
    }

    /// Forward value of `root`.
    pub fn evaluate(&self, root: NodeId) -> &Matrix {
        self.value(root)
    }

    fn push(&mut self, op: Op, value: Matrix, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        self.push(Op::Param(id), Matrix::zeros(0, 0), true)
    }

    /// Leaf holding the listed rows of an embedding table; its gradient is
    /// scatter-added back into the table.
    pub fn param_rows(&mut self, id: ParamId, rows: &[usize]) -> NodeId {
        let value = self.params.value(id).select_rows(rows);
        self.push(Op::ParamRows(id, rows.to_vec()), value, true)
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Const, value, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(CdmError::dim("matmul", format!("{:?} x {:?}", av.shape(), bv.shape())));
        }
        let value = matmul(av, bv);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMul(a, b), value, rg))
    }

    /// Adds a `1 x n` bias row to every row of `a`.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(CdmError::dim(
                "add_bias",
                format!("{:?} + bias {:?}", av.shape(), bv.shape()),
            ));
        }
        let mut value = av.clone();
        let b = bv.row(0);
        for r in 0..value.rows() {
            for (v, bb) in value.row_mut(r).iter_mut().zip(b) {
                *v += bb;
            }
        }
        let rg = self.needs(a) || self.needs(bias);
        Ok(self.push(Op::AddBias(a, bias), value, rg))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(sigmoid);
        let rg = self.needs(a);
        self.push(Op::Sigmoid(a), value, rg)
    }

    /// Element-wise product. `b` may also be an `r x 1` column, broadcast
    /// across the columns of `a`.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        let value = if av.shape() == bv.shape() {
            let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
            Matrix::from_vec(av.rows(), av.cols(), data)?
        } else if bv.cols() == 1 && bv.rows() == av.rows() {
            let mut out = av.clone();
            for r in 0..out.rows() {
                let s = bv.get(r, 0);
                out.row_mut(r).iter_mut().for_each(|v| *v *= s);
            }
            out
        } else {
            return Err(CdmError::dim(
                "elementwise_mul",
                format!("{:?} * {:?}", av.shape(), bv.shape()),
            ));
        };
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul(a, b), value, rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(CdmError::dim(
                "subtract",
                format!("{:?} - {:?}", av.shape(), bv.shape()),
            ));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x - y).collect();
        let value = Matrix::from_vec(av.rows(), av.cols(), data)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Sub(a, b), value, rg))
    }

    /// Element-wise product with a constant (typically 0/1) mask.
    pub fn mask(&mut self, a: NodeId, mask: Matrix) -> Result<NodeId> {
        let av = self.value(a);
        if av.shape() != mask.shape() {
            return Err(CdmError::dim(
                "mask",
                format!("{:?} masked by {:?}", av.shape(), mask.shape()),
            ));
        }
        let data = av.data().iter().zip(mask.data()).map(|(x, m)| x * m).collect();
        let value = Matrix::from_vec(av.rows(), av.cols(), data)?;
        let rg = self.needs(a);
        Ok(self.push(Op::Mask(a, mask), value, rg))
    }

    /// Stacks the inputs vertically.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(CdmError::dim("concat_rows", "no inputs"));
        };
        let cols = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(CdmError::dim("concat_rows", format!("{} columns vs {cols}", v.cols())));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let value = Matrix::from_vec(rows, cols, data)?;
        let rg = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Op::ConcatRows(parts.to_vec()), value, rg))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(f64::exp);
        let rg = self.needs(a);
        self.push(Op::Exp(a), value, rg)
    }

    /// Natural logarithm; inputs must be positive.
    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(f64::ln);
        let rg = self.needs(a);
        self.push(Op::Ln(a), value, rg)
    }

    /// Summed binary cross-entropy of an `n x 1` probability column against
    /// `n` binary targets. Probabilities are clamped to
    /// `[BCE_CLAMP, 1 - BCE_CLAMP]`.
    pub fn bce_loss(&mut self, y: NodeId, targets: &[f64]) -> Result<NodeId> {
        let yv = self.value(y);
        if yv.cols() != 1 || yv.rows() != targets.len() {
            return Err(CdmError::dim(
                "bce_loss",
                format!("{:?} against {} targets", yv.shape(), targets.len()),
            ));
        }
        let loss: f64 = yv.data().iter().zip(targets).map(|(&p, &r)| bce_term(p, r)).sum();
        let rg = self.needs(y);
        Ok(self.push(Op::BceLoss(y, targets.to_vec()), Matrix::filled(1, 1, loss), rg))
    }

    /// Reverse-mode accumulation from a scalar root into parameter gradients.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let rv = self.value(root);
        if rv.shape() != (1, 1) {
            return Err(CdmError::NonScalarRoot {
                rows: rv.rows(),
                cols: rv.cols(),
            });
        }
        let mut out = Gradients::new(self.params.len());
        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let g = match self.corrupted {
                Some(k) if k == node.op.kind() => g.map(|v| v * 1.5),
                _ => g,
            };
            match &node.op {
                Op::Param(p) => {
                    out.add_owned(*p, g);
                }
                Op::ParamRows(p, rows) => {
                    let shape = self.params.value(*p).shape();
                    out.accumulate(*p, shape, |acc| {
                        for (r, &target) in rows.iter().enumerate() {
                            for (a, v) in acc.row_mut(target).iter_mut().zip(g.row(r)) {
                                *a += v;
                            }
                        }
                    });
                }
                Op::Const => {}
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        let da = matmul_nt(&g, self.value(*b));
                        add_grad(&mut grads, *a, da);
                    }
                    if self.needs(*b) {
                        let db = matmul_tn(self.value(*a), &g);
                        add_grad(&mut grads, *b, db);
                    }
                }
                Op::AddBias(a, bias) => {
                    if self.needs(*bias) {
                        let mut db = Matrix::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (d, v) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                                *d += v;
                            }
                        }
                        add_grad(&mut grads, *bias, db);
                    }
                    if self.needs(*a) {
                        add_grad(&mut grads, *a, g);
                    }
                }
                Op::Sigmoid(a) => {
                    let da = zip_map(&g, &node.value, |gv, y| gv * y * (1.0 - y));
                    add_grad(&mut grads, *a, da);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if av.shape() == bv.shape() {
                        if self.needs(*a) {
                            add_grad(&mut grads, *a, zip_map(&g, bv, |x, y| x * y));
                        }
                        if self.needs(*b) {
                            add_grad(&mut grads, *b, zip_map(&g, av, |x, y| x * y));
                        }
                    } else {
                        if self.needs(*a) {
                            let mut da = g.clone();
                            for r in 0..da.rows() {
                                let s = bv.get(r, 0);
                                da.row_mut(r).iter_mut().for_each(|v| *v *= s);
                            }
                            add_grad(&mut grads, *a, da);
                        }
                        if self.needs(*b) {
                            let mut db = Matrix::zeros(bv.rows(), 1);
                            for r in 0..g.rows() {
                                let s: f64 = g.row(r).iter().zip(av.row(r)).map(|(x, y)| x * y).sum();
                                db.set(r, 0, s);
                            }
                            add_grad(&mut grads, *b, db);
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(*b) {
                        add_grad(&mut grads, *b, g.map(|v| -v));
                    }
                    if self.needs(*a) {
                        add_grad(&mut grads, *a, g);
                    }
                }
                Op::Mask(a, mask) => {
                    add_grad(&mut grads, *a, zip_map(&g, mask, |x, m| x * m));
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.value(p).rows();
                        if self.needs(p) {
                            let idx: Vec<usize> = (offset..offset + rows).collect();
                            add_grad(&mut grads, p, g.select_rows(&idx));
                        }
                        offset += rows;
                    }
                }
                Op::Exp(a) => {
                    add_grad(&mut grads, *a, zip_map(&g, &node.value, |x, y| x * y));
                }
                Op::Ln(a) => {
                    let da = zip_map(&g, self.value(*a), |x, v| x / v);
                    add_grad(&mut grads, *a, da);
                }
                Op::BceLoss(y, targets) => {
                    let scale = g.get(0, 0);
                    let yv = self.value(*y);
                    let data = yv
                        .data()
                        .iter()
                        .zip(targets)
                        .map(|(&p, &r)| scale * bce_grad(p, r))
                        .collect();
                    add_grad(&mut grads, *y, Matrix::from_vec(yv.rows(), 1, data)?);
                }
            }
        }
        Ok(out)
    }
}

fn add_grad(grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
    match &mut grads[id.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

/// `-(r ln y + (1 - r) ln(1 - y))` with `y` clamped.
#[inline]
pub fn bce_term(y: f64, r: f64) -> f64 {
    let p = y.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    -(r * p.ln() + (1.0 - r) * (1.0 - p).ln())
}

#[inline]
fn bce_grad(y: f64, r: f64) -> f64 {
    if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&y) {
        return 0.0;
    }
    -r / y + (1.0 - r) / (1.0 - y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sigmoid_forward_and_gradient_at_zero() {
        let mut store = ParamStore::new();
        let z = store.add("z", Matrix::zeros(1, 1), false);
        let mut g = Graph::new(&store);
        let zn = g.param(z);
        let s = g.sigmoid(zn);
        assert_eq!(g.evaluate(s).get(0, 0), 0.5);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(z).unwrap().get(0, 0), 0.25);
    }

    #[test]
    fn bce_at_half_is_ln2_with_slope_minus_two() {
        let mut store = ParamStore::new();
        let y = store.add("y", Matrix::filled(1, 1, 0.5), false);
        let mut g = Graph::new(&store);
        let yn = g.param(y);
        let loss = g.bce_loss(yn, &[1.0]).unwrap();
        assert_abs_diff_eq!(g.evaluate(loss).get(0, 0), std::f64::consts::LN_2, epsilon = 1e-12);
        let grads = g.backward(loss).unwrap();
        assert_abs_diff_eq!(grads.get(y).unwrap().get(0, 0), -2.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_matmul_forward() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let i = g.constant(Matrix::identity(2));
        let an = g.constant(a.clone());
        let p = g.matmul(i, an).unwrap();
        assert_eq!(g.evaluate(p), &a);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut store = ParamStore::new();
        let w = store.add("w", Matrix::zeros(2, 2), false);
        let mut g = Graph::new(&store);
        let n = g.param(w);
        assert!(matches!(g.backward(n), Err(CdmError::NonScalarRoot { .. })));
    }

    #[test]
    fn shape_errors_name_the_op() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let a = g.constant(Matrix::zeros(2, 3));
        let b = g.constant(Matrix::zeros(2, 3));
        assert!(g.matmul(a, b).unwrap_err().to_string().contains("matmul"));
        let c = g.constant(Matrix::zeros(3, 2));
        assert!(g.sub(a, c).unwrap_err().to_string().contains("subtract"));
        assert!(g.add_bias(a, c).unwrap_err().to_string().contains("add_bias"));
        assert!(g.bce_loss(a, &[1.0]).unwrap_err().to_string().contains("bce_loss"));
    }

    #[test]
    fn shared_nodes_accumulate() {
        // f(w) = sum(w * w) via mul of the same node, d/dw = 2w
        let mut store = ParamStore::new();
        let w = store.add("w", Matrix::row_vector(&[1.5, -2.0]), false);
        let mut g = Graph::new(&store);
        let wn = g.param(w);
        let sq = g.mul(wn, wn).unwrap();
        let ones = g.constant(Matrix::filled(2, 1, 1.0));
        let s = g.matmul(sq, ones).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[3.0, -4.0]);
    }

    #[test]
    fn param_rows_scatter_back() {
        let mut store = ParamStore::new();
        let e = store.add(
            "emb",
            Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap(),
            false,
        );
        let mut g = Graph::new(&store);
        let rows = g.param_rows(e, &[2, 0, 2]);
        let ones = g.constant(Matrix::filled(1, 3, 1.0));
        let s = g.matmul(ones, rows).unwrap();
        assert_eq!(g.evaluate(s).get(0, 0), 7.0);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(e).unwrap().data(), &[1.0, 0.0, 2.0]);
    }

    #[test]
    fn clamped_bce_is_finite() {
        assert!(bce_term(1.0, 1.0) > 0.0 && bce_term(1.0, 1.0) < 2e-7);
        assert!(bce_term(0.0, 1.0).is_finite());
        assert_eq!(bce_grad(1.0, 1.0), 0.0);
    }
}
