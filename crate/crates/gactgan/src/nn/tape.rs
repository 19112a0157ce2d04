//! Reverse-mode autodiff over 2-D f64 arrays.
//!
//! The backward pass emits ordinary tape nodes for every vector-Jacobian
//! product, so a gradient returned by [`Tape::grad`] is itself a
//! differentiable expression — calling `grad` on a function of gradients
//! (e.g. a gradient penalty) yields exact second-order derivatives.
//! Piecewise-linear ops (leaky-relu, clamp) contribute constant masks, which
//! is the almost-everywhere-correct convention.

use ndarray::{concatenate, s, Array2, Axis};
use std::cell::{Ref, RefCell};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
#[allow(dead_code)] // payload fields document each op even where backward derives them from parents
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    Recip(Var),
    Sqrt(Var),
    Square(Var),
    Ln(Var),
    Exp(Var),
    Tanh(Var),
    Sigmoid(Var),
    LeakyRelu(Var, f64),
    Clamp(Var, f64, f64),
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    BroadcastRows(Var, usize),
    BroadcastCols(Var, usize),
    BroadcastAll(Var, (usize, usize)),
    SliceCols(Var, usize, usize),
    PadCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    Reshape(Var, (usize, usize)),
    Transpose(Var),
}

struct Node {
    op: Op,
    value: Array2<f64>,
    requires_grad: bool,
}

/// Wengert list. One tape per training step; drop it to free all activations.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, op: Op, value: Array2<f64>, requires_grad: bool) -> Var {
        let value = if value.is_standard_layout() {
            value
        } else {
            value.as_standard_layout().to_owned()
        };
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    /// Borrowed view of a node's value.
    pub fn value(&self, v: Var) -> Ref<'_, Array2<f64>> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn value_clone(&self, v: Var) -> Array2<f64> {
        self.value(v).clone()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        assert_eq!(val.dim(), (1, 1), "scalar() on non-1x1 var");
        val[(0, 0)]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    /// Differentiable leaf (a parameter).
    pub fn leaf(&self, value: Array2<f64>, requires_grad: bool) -> Var {
        self.push(Op::Leaf, value.as_standard_layout().to_owned(), requires_grad)
    }

    /// Non-differentiable leaf.
    pub fn constant(&self, value: Array2<f64>) -> Var {
        self.leaf(value, false)
    }

    pub fn constant_scalar(&self, value: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), value))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            assert_eq!(av.ncols(), bv.nrows(), "matmul inner dims");
            av.dot(bv)
        };
        self.push(Op::MatMul(a, b), value, self.rg(a) || self.rg(b))
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            assert_eq!(av.dim(), bv.dim(), "add shapes");
            av + bv
        };
        self.push(Op::Add(a, b), value, self.rg(a) || self.rg(b))
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let nb = self.scale(b, -1.0);
        self.add(a, nb)
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            assert_eq!(av.dim(), bv.dim(), "mul shapes");
            av * bv
        };
        self.push(Op::Mul(a, b), value, self.rg(a) || self.rg(b))
    }

    pub fn div(&self, a: Var, b: Var) -> Var {
        let rb = self.recip(b);
        self.mul(a, rb)
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        let value = { &self.nodes.borrow()[a.0].value * c };
        self.push(Op::Scale(a, c), value, self.rg(a))
    }

    pub fn add_scalar(&self, a: Var, c: f64) -> Var {
        let value = { &self.nodes.borrow()[a.0].value + c };
        self.push(Op::AddScalar(a, c), value, self.rg(a))
    }

    pub fn recip(&self, a: Var) -> Var {
        let value = { self.nodes.borrow()[a.0].value.mapv(|x| 1.0 / x) };
        self.push(Op::Recip(a), value, self.rg(a))
    }

    pub fn sqrt(&self, a: Var) -> Var {
        let value = { self.nodes.borrow()[a.0].value.mapv(f64::sqrt) };
        self.push(Op::Sqrt(a), value, self.rg(a))
    }

    pub fn square(&self, a: Var) -> Var {
        let value = { self.nodes.borrow()[a.0].value.mapv(|x| x * x) };
        self.push(Op::Square(a), value, self.rg(a))
    }

    pub fn ln(&self, a: Var) -> Var {
        let value = { self.nodes.borrow()[a.0].value.mapv(f64::ln) };
        self.push(Op::Ln(a), value, self.rg(a))
    }

    pub fn exp(&self, a: Var) -> Var {
        let value = { self.nodes.borrow()[a.0].value.mapv(f64::exp) };
        self.push(Op::Exp(a), value, self.rg(a))
    }

    pub fn tanh(&self, a: Var) -> Var {
        let value = { self.nodes.borrow()[a.0].value.mapv(f64::tanh) };
        self.push(Op::Tanh(a), value, self.rg(a))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let value = {
            self.nodes.borrow()[a.0]
                .value
                .mapv(|x| 1.0 / (1.0 + (-x).exp()))
        };
        self.push(Op::Sigmoid(a), value, self.rg(a))
    }

    pub fn leaky_relu(&self, a: Var, slope: f64) -> Var {
        let value = {
            self.nodes.borrow()[a.0]
                .value
                .mapv(|x| if x > 0.0 { x } else { slope * x })
        };
        self.push(Op::LeakyRelu(a, slope), value, self.rg(a))
    }

    pub fn relu(&self, a: Var) -> Var {
        self.leaky_relu(a, 0.0)
    }

    pub fn clamp(&self, a: Var, lo: f64, hi: f64) -> Var {
        let value = { self.nodes.borrow()[a.0].value.mapv(|x| x.clamp(lo, hi)) };
        self.push(Op::Clamp(a, lo, hi), value, self.rg(a))
    }

    pub fn sum_all(&self, a: Var) -> Var {
        let value = { Array2::from_elem((1, 1), self.nodes.borrow()[a.0].value.sum()) };
        self.push(Op::SumAll(a), value, self.rg(a))
    }

    pub fn mean_all(&self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let s = self.sum_all(a);
        self.scale(s, 1.0 / (r * c) as f64)
    }

    /// Sum over rows: N x F -> 1 x F.
    pub fn sum_rows(&self, a: Var) -> Var {
        let value = {
            let v = &self.nodes.borrow()[a.0].value;
            v.sum_axis(Axis(0)).insert_axis(Axis(0))
        };
        self.push(Op::SumRows(a), value, self.rg(a))
    }

    /// Sum over columns: N x F -> N x 1.
    pub fn sum_cols(&self, a: Var) -> Var {
        let value = {
            let v = &self.nodes.borrow()[a.0].value;
            v.sum_axis(Axis(1)).insert_axis(Axis(1))
        };
        self.push(Op::SumCols(a), value, self.rg(a))
    }

    /// 1 x F -> N x F.
    pub fn broadcast_rows(&self, a: Var, n: usize) -> Var {
        let value = {
            let v = &self.nodes.borrow()[a.0].value;
            assert_eq!(v.nrows(), 1, "broadcast_rows wants 1xF");
            let mut out = Array2::zeros((n, v.ncols()));
            for mut row in out.rows_mut() {
                row.assign(&v.row(0));
            }
            out
        };
        self.push(Op::BroadcastRows(a, n), value, self.rg(a))
    }

    /// N x 1 -> N x F.
    pub fn broadcast_cols(&self, a: Var, f: usize) -> Var {
        let value = {
            let v = &self.nodes.borrow()[a.0].value;
            assert_eq!(v.ncols(), 1, "broadcast_cols wants Nx1");
            let mut out = Array2::zeros((v.nrows(), f));
            for (i, mut row) in out.rows_mut().into_iter().enumerate() {
                row.fill(v[(i, 0)]);
            }
            out
        };
        self.push(Op::BroadcastCols(a, f), value, self.rg(a))
    }

    /// 1 x 1 -> shape.
    pub fn broadcast_all(&self, a: Var, shape: (usize, usize)) -> Var {
        let value = {
            let v = &self.nodes.borrow()[a.0].value;
            assert_eq!(v.dim(), (1, 1), "broadcast_all wants 1x1");
            Array2::from_elem(shape, v[(0, 0)])
        };
        self.push(Op::BroadcastAll(a, shape), value, self.rg(a))
    }

    pub fn slice_cols(&self, a: Var, start: usize, len: usize) -> Var {
        let value = {
            let v = &self.nodes.borrow()[a.0].value;
            assert!(start + len <= v.ncols(), "slice_cols out of range");
            v.slice(s![.., start..start + len]).to_owned()
        };
        self.push(Op::SliceCols(a, start, len), value, self.rg(a))
    }

    pub fn pad_cols(&self, a: Var, start: usize, total: usize) -> Var {
        let value = {
            let v = &self.nodes.borrow()[a.0].value;
            assert!(start + v.ncols() <= total, "pad_cols out of range");
            let mut out = Array2::zeros((v.nrows(), total));
            out.slice_mut(s![.., start..start + v.ncols()]).assign(v);
            out
        };
        self.push(Op::PadCols(a, start, total), value, self.rg(a))
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let value = {
            let nodes = self.nodes.borrow();
            let views: Vec<_> = parts.iter().map(|p| nodes[p.0].value.view()).collect();
            concatenate(Axis(1), &views).expect("concat_cols shapes")
        };
        let rg = parts.iter().any(|p| self.rg(*p));
        self.push(Op::ConcatCols(parts.to_vec()), value, rg)
    }

    pub fn reshape(&self, a: Var, shape: (usize, usize)) -> Var {
        let value = {
            let v = &self.nodes.borrow()[a.0].value;
            assert_eq!(v.len(), shape.0 * shape.1, "reshape length");
            v.to_owned()
                .into_shape_with_order(shape)
                .expect("reshape standard layout")
        };
        self.push(Op::Reshape(a, shape), value, self.rg(a))
    }

    pub fn transpose(&self, a: Var) -> Var {
        let value = {
            self.nodes.borrow()[a.0]
                .value
                .t()
                .as_standard_layout()
                .to_owned()
        };
        self.push(Op::Transpose(a), value, self.rg(a))
    }

    /// Gradient of a scalar `output` with respect to each var in `wrt`.
    ///
    /// Returns `None` for vars the output does not depend on. The returned
    /// gradients are tape nodes and can be differentiated again.
    pub fn grad(&self, output: Var, wrt: &[Var]) -> Vec<Option<Var>> {
        assert_eq!(self.shape(output), (1, 1), "grad of non-scalar output");
        let upper = output.0 + 1;
        let mut adjoint: Vec<Option<Var>> = vec![None; upper];
        adjoint[output.0] = Some(self.constant(Array2::ones((1, 1))));

        for i in (0..upper).rev() {
            let Some(g) = adjoint[i] else { continue };
            let op = { self.nodes.borrow()[i].op.clone() };
            let accumulate = |slot: &mut Vec<Option<Var>>, p: Var, contrib: Var, tape: &Tape| {
                if !tape.rg(p) {
                    return;
                }
                slot[p.0] = Some(match slot[p.0] {
                    Some(existing) => tape.add(existing, contrib),
                    None => contrib,
                });
            };
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if self.rg(a) {
                        let bt = self.transpose(b);
                        let da = self.matmul(g, bt);
                        accumulate(&mut adjoint, a, da, self);
                    }
                    if self.rg(b) {
                        let at = self.transpose(a);
                        let db = self.matmul(at, g);
                        accumulate(&mut adjoint, b, db, self);
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut adjoint, a, g, self);
                    accumulate(&mut adjoint, b, g, self);
                }
                Op::Mul(a, b) => {
                    if self.rg(a) {
                        let da = self.mul(g, b);
                        accumulate(&mut adjoint, a, da, self);
                    }
                    if self.rg(b) {
                        let db = self.mul(g, a);
                        accumulate(&mut adjoint, b, db, self);
                    }
                }
                Op::Scale(a, c) => {
                    let da = self.scale(g, c);
                    accumulate(&mut adjoint, a, da, self);
                }
                Op::AddScalar(a, _) => accumulate(&mut adjoint, a, g, self),
                Op::Recip(a) => {
                    // d(1/a) = -g / a^2 = -g * out^2
                    let out = Var(i);
                    let o2 = self.square(out);
                    let da = self.scale(self.mul(g, o2), -1.0);
                    accumulate(&mut adjoint, a, da, self);
                }
                Op::Sqrt(a) => {
                    // d sqrt = g * 0.5 / sqrt(a)
                    let out = Var(i);
                    let r = self.recip(out);
                    let da = self.scale(self.mul(g, r), 0.5);
                    accumulate(&mut adjoint, a, da, self);
                }
                Op::Square(a) => {
                    let da = self.scale(self.mul(g, a), 2.0);
                    accumulate(&mut adjoint, a, da, self);
                }
                Op::Ln(a) => {
                    let ra = self.recip(a);
                    let da = self.mul(g, ra);
                    accumulate(&mut adjoint, a, da, self);
                }
                Op::Exp(a) => {
                    let out = Var(i);
                    let da = self.mul(g, out);
                    accumulate(&mut adjoint, a, da, self);
                }
                Op::Tanh(a) => {
                    let out = Var(i);
                    let t2 = self.square(out);
                    let one_minus = self.add_scalar(self.scale(t2, -1.0), 1.0);
                    let da = self.mul(g, one_minus);
                    accumulate(&mut adjoint, a, da, self);
                }
                Op::Sigmoid(a) => {
                    let out = Var(i);
                    let one_minus = self.add_scalar(self.scale(out, -1.0), 1.0);
                    let ds = self.mul(out, one_minus);
                    let da = self.mul(g, ds);
                    accumulate(&mut adjoint, a, da, self);
                }
                Op::LeakyRelu(a, slope) => {
                    let mask = {
                        self.nodes.borrow()[a.0]
                            .value
                            .mapv(|x| if x > 0.0 { 1.0 } else { slope })
                    };
                    let m = self.constant(mask);
                    let da = self.mul(g, m);
                    accumulate(&mut adjoint, a, da, self);
                }
                Op::Clamp(a, lo, hi) => {
                    let mask = {
                        self.nodes.borrow()[a.0]
                            .value
                            .mapv(|x| if (lo..=hi).contains(&x) { 1.0 } else { 0.0 })
                    };
                    let m = self.constant(mask);
                    let da = self.mul(g, m);
                    accumulate(&mut adjoint, a, da, self);
                }
                Op::SumAll(a) => {
                    let shape = self.shape(a);
                    let da = self.broadcast_all(g, shape);
                    accumulate(&mut adjoint, a, da, self);
                }
                Op::SumRows(a) => {
                    let n = self.shape(a).0;
                    let da = self.broadcast_rows(g, n);
                    accumulate(&mut adjoint, a, da, self);
                }
                Op::SumCols(a) => {
                    let f = self.shape(a).1;
                    let da = self.broadcast_cols(g, f);
                    accumulate(&mut adjoint, a, da, self);
                }
                Op::BroadcastRows(a, _) => {
                    let da = self.sum_rows(g);
                    accumulate(&mut adjoint, a, da, self);
                }
                Op::BroadcastCols(a, _) => {
                    let da = self.sum_cols(g);
                    accumulate(&mut adjoint, a, da, self);
                }
                Op::BroadcastAll(a, _) => {
                    let da = self.sum_all(g);
                    accumulate(&mut adjoint, a, da, self);
                }
                Op::SliceCols(a, start, _len) => {
                    let total = self.shape(a).1;
                    let da = self.pad_cols(g, start, total);
                    accumulate(&mut adjoint, a, da, self);
                }
                Op::PadCols(a, start, _total) => {
                    let len = self.shape(a).1;
                    let da = self.slice_cols(g, start, len);
                    accumulate(&mut adjoint, a, da, self);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.shape(p).1;
                        if self.rg(p) {
                            let dp = self.slice_cols(g, offset, w);
                            accumulate(&mut adjoint, p, dp, self);
                        }
                        offset += w;
                    }
                }
                Op::Reshape(a, _) => {
                    let shape = self.shape(a);
                    let da = self.reshape(g, shape);
                    accumulate(&mut adjoint, a, da, self);
                }
                Op::Transpose(a) => {
                    let da = self.transpose(g);
                    accumulate(&mut adjoint, a, da, self);
                }
            }
        }

        wrt.iter().map(|v| adjoint[v.0]).collect()
    }
}
