//! Tape-based reverse-mode differentiation over 2-D `f64` tensors.
//!
//! Backward rules are themselves expressed with graph operations, so a
//! gradient returned by [`Graph::grad`] is an ordinary differentiable value.
//! That is what the gradient penalty needs: it differentiates the norm of an
//! input gradient with respect to the critic weights.
//!
//! Piecewise-linear activations record their derivative mask as a constant;
//! their second derivative is zero almost everywhere.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use ndarray::{Array2, Axis};

pub type Tensor = Array2<f64>;

#[derive(Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    MatMul(usize, usize),
    Transpose(usize),
    SumAll(usize),
    Fill(usize),
    SumCols(usize),
    RepeatCols(usize),
    /// Column gather into `taps` stacked row blocks; see [`Var::unfold`].
    Unfold { src: usize, index: Rc<[usize]>, taps: usize, in_cols: usize },
    /// Adjoint of `Unfold`: scatter-add row blocks back into columns.
    Fold { src: usize, index: Rc<[usize]>, taps: usize },
    SliceRows(usize, usize),
    PadRows(usize, usize),
    ConcatRows(Rc<[usize]>),
    LeakyRelu(usize, f64),
    Abs(usize),
    Sqrt(usize),
    Recip(usize),
    Sigmoid(usize),
}

impl Op {
    fn parents(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => vec![*a, *b],
            Op::ConcatRows(ids) => ids.to_vec(),
            Op::Unfold { src, .. } | Op::Fold { src, .. } => vec![*src],
            Op::Scale(a, _)
            | Op::Offset(a)
            | Op::Transpose(a)
            | Op::SumAll(a)
            | Op::Fill(a)
            | Op::SumCols(a)
            | Op::RepeatCols(a)
            | Op::SliceRows(a, _)
            | Op::PadRows(a, _)
            | Op::LeakyRelu(a, _)
            | Op::Abs(a)
            | Op::Sqrt(a)
            | Op::Recip(a)
            | Op::Sigmoid(a) => vec![*a],
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
}

/// Computation tape. Nodes are appended in evaluation order, so node ids
/// are a topological order.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let v = self.value();
        write!(f, "Var#{}({}x{})", self.id, v.nrows(), v.ncols())
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        self.push_rc(Rc::new(value), op)
    }

    fn push_rc(&self, value: Rc<Tensor>, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn leaf_rc(&self, value: Rc<Tensor>) -> Var<'_> {
        self.push_rc(value, Op::Leaf)
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.leaf(Tensor::from_elem((1, 1), v))
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn op(&self, id: usize) -> Op {
        self.nodes.borrow()[id].op.clone()
    }

    /// Gradients of the scalar `output` with respect to each of `wrt`.
    /// Inputs that `output` does not depend on get a zero gradient.
    pub fn grad<'g>(&'g self, output: Var<'g>, wrt: &[Var<'g>]) -> Vec<Var<'g>> {
        let out_shape = output.shape();
        assert_eq!(out_shape, (1, 1), "grad requires a scalar output, got {out_shape:?}");
        let top = output.id;

        let mut needs = vec![false; top + 1];
        for w in wrt {
            if w.id <= top {
                needs[w.id] = true;
            }
        }
        for id in 0..=top {
            if !needs[id] {
                needs[id] = self.op(id).parents().iter().any(|&p| needs[p]);
            }
        }

        let mut grads: Vec<Option<Var<'g>>> = vec![None; top + 1];
        grads[top] = Some(self.scalar(1.0));
        for id in (0..=top).rev() {
            let Some(g) = grads[id] else { continue };
            if !needs[id] {
                continue;
            }
            let node = Var { graph: self, id };
            for (parent, contribution) in self.backward(node, g, &needs) {
                grads[parent] = Some(match grads[parent] {
                    Some(acc) => acc + contribution,
                    None => contribution,
                });
            }
        }
        wrt.iter()
            .map(|w| match grads.get(w.id).copied().flatten() {
                Some(g) => g,
                None => {
                    let (r, c) = w.shape();
                    self.leaf(Tensor::zeros((r, c)))
                }
            })
            .collect()
    }

    fn backward<'g>(&'g self, node: Var<'g>, g: Var<'g>, needs: &[bool]) -> Vec<(usize, Var<'g>)> {
        let v = |id: usize| Var { graph: self, id };
        let mut out = Vec::with_capacity(2);
        let mut emit = |id: usize, f: &mut dyn FnMut() -> Var<'g>| {
            if needs[id] {
                out.push((id, f()));
            }
        };
        match self.op(node.id) {
            Op::Leaf => {}
            Op::Add(a, b) => {
                emit(a, &mut || g);
                emit(b, &mut || g);
            }
            Op::Sub(a, b) => {
                emit(a, &mut || g);
                emit(b, &mut || g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                emit(a, &mut || g * v(b));
                emit(b, &mut || g * v(a));
            }
            Op::Scale(a, c) => emit(a, &mut || g.scale(c)),
            Op::Offset(a) => emit(a, &mut || g),
            Op::MatMul(a, b) => {
                emit(a, &mut || g.matmul(v(b).t()));
                emit(b, &mut || v(a).t().matmul(g));
            }
            Op::Transpose(a) => emit(a, &mut || g.t()),
            Op::SumAll(a) => emit(a, &mut || g.fill(v(a).shape())),
            Op::Fill(a) => emit(a, &mut || g.sum()),
            Op::SumCols(a) => emit(a, &mut || g.repeat_cols(v(a).shape().1)),
            Op::RepeatCols(a) => emit(a, &mut || g.sum_cols()),
            Op::Unfold { src, index, taps, in_cols } => {
                emit(src, &mut || g.fold(Rc::clone(&index), taps, in_cols))
            }
            Op::Fold { src, index, taps, .. } => {
                emit(src, &mut || g.unfold(Rc::clone(&index), taps))
            }
            Op::SliceRows(a, start) => {
                let total = v(a).shape().0;
                emit(a, &mut || g.pad_rows(start, total));
            }
            Op::PadRows(a, start) => {
                let len = v(a).shape().0;
                emit(a, &mut || g.slice_rows(start, len));
            }
            Op::ConcatRows(ids) => {
                let mut start = 0;
                for &id in ids.iter() {
                    let len = v(id).shape().0;
                    emit(id, &mut || g.slice_rows(start, len));
                    start += len;
                }
            }
            Op::LeakyRelu(a, slope) => emit(a, &mut || {
                let mask = v(a).value().mapv(|x| if x > 0.0 { 1.0 } else { slope });
                g * self.leaf(mask)
            }),
            Op::Abs(a) => emit(a, &mut || {
                let sign = v(a).value().mapv(|x| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 });
                g * self.leaf(sign)
            }),
            Op::Sqrt(a) => emit(a, &mut || g * node.recip().scale(0.5)),
            Op::Recip(a) => emit(a, &mut || (g * node * node).scale(-1.0)),
            Op::Sigmoid(a) => emit(a, &mut || g * (node - node * node)),
        }
        out
    }
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.graph.value(self.id)
    }

    /// Scalar value of a 1x1 variable.
    pub fn item(&self) -> f64 {
        let v = self.value();
        debug_assert_eq!(v.dim(), (1, 1));
        v[[0, 0]]
    }

    pub fn shape(&self) -> (usize, usize) {
        self.graph.nodes.borrow()[self.id].value.dim()
    }

    fn unary(self, value: Tensor, op: Op) -> Var<'g> {
        self.graph.push(value, op)
    }

    fn same_shape(self, other: Var<'g>, what: &str) {
        assert_eq!(self.shape(), other.shape(), "{what}: shape mismatch");
    }

    pub fn scale(self, c: f64) -> Var<'g> {
        let value = &*self.value() * c;
        self.unary(value, Op::Scale(self.id, c))
    }

    /// Add a constant to every element.
    pub fn offset(self, c: f64) -> Var<'g> {
        let value = &*self.value() + c;
        self.unary(value, Op::Offset(self.id))
    }

    pub fn matmul(self, rhs: Var<'g>) -> Var<'g> {
        let value = self.value().dot(&*rhs.value());
        self.graph.push(value, Op::MatMul(self.id, rhs.id))
    }

    pub fn t(self) -> Var<'g> {
        let value = self.value().t().as_standard_layout().into_owned();
        self.unary(value, Op::Transpose(self.id))
    }

    /// Sum of all elements, as 1x1.
    pub fn sum(self) -> Var<'g> {
        let value = Tensor::from_elem((1, 1), self.value().sum());
        self.unary(value, Op::SumAll(self.id))
    }

    pub fn mean(self) -> Var<'g> {
        let (r, c) = self.shape();
        self.sum().scale(1.0 / (r * c) as f64)
    }

    /// Broadcast a 1x1 value to `shape`.
    pub fn fill(self, shape: (usize, usize)) -> Var<'g> {
        let value = Tensor::from_elem(shape, self.item());
        self.unary(value, Op::Fill(self.id))
    }

    /// Row sums as an `R x 1` column.
    pub fn sum_cols(self) -> Var<'g> {
        let value = self.value().sum_axis(Axis(1)).insert_axis(Axis(1));
        self.unary(value, Op::SumCols(self.id))
    }

    /// Repeat an `R x 1` column `n` times.
    pub fn repeat_cols(self, n: usize) -> Var<'g> {
        let v = self.value();
        assert_eq!(v.ncols(), 1, "repeat_cols expects a column");
        let value = v.broadcast((v.nrows(), n)).expect("broadcast").to_owned();
        self.unary(value, Op::RepeatCols(self.id))
    }

    /// Add an `R x 1` bias to every column.
    pub fn add_bias(self, bias: Var<'g>) -> Var<'g> {
        let n = self.shape().1;
        self + bias.repeat_cols(n)
    }

    /// Gather columns into `taps` stacked row blocks. `index` has
    /// `taps * out_cols` entries; output row `k * R + r`, column `t` reads
    /// input `(r, index[k * out_cols + t])`.
    pub fn unfold(self, index: Rc<[usize]>, taps: usize) -> Var<'g> {
        let src = self.value();
        let (rows, in_cols) = src.dim();
        assert!(taps > 0 && index.len() % taps == 0);
        let out_cols = index.len() / taps;
        let mut value = Tensor::zeros((rows * taps, out_cols));
        for k in 0..taps {
            let idx = &index[k * out_cols..(k + 1) * out_cols];
            for r in 0..rows {
                let src_row = src.row(r);
                let mut dst = value.row_mut(k * rows + r);
                for (d, &i) in dst.iter_mut().zip(idx) {
                    *d = src_row[i];
                }
            }
        }
        self.unary(
            value,
            Op::Unfold {
                src: self.id,
                index,
                taps,
                in_cols,
            },
        )
    }

    /// Adjoint of [`Var::unfold`].
    pub fn fold(self, index: Rc<[usize]>, taps: usize, out_cols: usize) -> Var<'g> {
        let src = self.value();
        let (stacked, cols) = src.dim();
        assert_eq!(stacked % taps, 0);
        assert_eq!(index.len(), taps * cols);
        let rows = stacked / taps;
        let mut value = Tensor::zeros((rows, out_cols));
        for k in 0..taps {
            let idx = &index[k * cols..(k + 1) * cols];
            for r in 0..rows {
                let src_row = src.row(k * rows + r);
                let mut dst = value.row_mut(r);
                for (s, &i) in src_row.iter().zip(idx) {
                    dst[i] += s;
                }
            }
        }
        self.unary(
            value,
            Op::Fold {
                src: self.id,
                index,
                taps,
            },
        )
    }

    /// Select columns by index.
    pub fn gather_cols(self, index: Rc<[usize]>) -> Var<'g> {
        self.unfold(index, 1)
    }

    pub fn slice_rows(self, start: usize, len: usize) -> Var<'g> {
        let value = self
            .value()
            .slice(ndarray::s![start..start + len, ..])
            .to_owned();
        self.unary(value, Op::SliceRows(self.id, start))
    }

    pub fn row(self, r: usize) -> Var<'g> {
        self.slice_rows(r, 1)
    }

    /// Embed into `total` rows of zeros starting at `start`.
    pub fn pad_rows(self, start: usize, total: usize) -> Var<'g> {
        let src = self.value();
        let mut value = Tensor::zeros((total, src.ncols()));
        value
            .slice_mut(ndarray::s![start..start + src.nrows(), ..])
            .assign(&*src);
        self.unary(value, Op::PadRows(self.id, start))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'g> {
        let value = self.value().mapv(|x| if x > 0.0 { x } else { slope * x });
        self.unary(value, Op::LeakyRelu(self.id, slope))
    }

    pub fn abs(self) -> Var<'g> {
        let value = self.value().mapv(f64::abs);
        self.unary(value, Op::Abs(self.id))
    }

    pub fn sqrt(self) -> Var<'g> {
        let value = self.value().mapv(f64::sqrt);
        self.unary(value, Op::Sqrt(self.id))
    }

    pub fn recip(self) -> Var<'g> {
        let value = self.value().mapv(f64::recip);
        self.unary(value, Op::Recip(self.id))
    }

    pub fn sigmoid(self) -> Var<'g> {
        let value = self.value().mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.unary(value, Op::Sigmoid(self.id))
    }

    pub fn square(self) -> Var<'g> {
        self * self
    }

    /// Value copied onto the tape as a new leaf (stops gradient flow).
    pub fn detach(self) -> Var<'g> {
        self.graph.leaf_rc(self.value())
    }
}

/// Stack variables with equal column counts vertically.
pub fn concat_rows<'g>(parts: &[Var<'g>]) -> Var<'g> {
    assert!(!parts.is_empty());
    let graph = parts[0].graph;
    let views: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
    let refs: Vec<_> = views.iter().map(|v| v.view()).collect();
    let value = ndarray::concatenate(Axis(0), &refs).expect("concat_rows: column mismatch");
    let ids: Rc<[usize]> = parts.iter().map(|p| p.id).collect();
    graph.push(value, Op::ConcatRows(ids))
}

macro_rules! binary_op {
    ($trait:ident, $method:ident, $op:ident, $sym:tt) => {
        impl<'g> std::ops::$trait for Var<'g> {
            type Output = Var<'g>;
            fn $method(self, rhs: Var<'g>) -> Var<'g> {
                self.same_shape(rhs, stringify!($method));
                let value = &*self.value() $sym &*rhs.value();
                self.graph.push(value, Op::$op(self.id, rhs.id))
            }
        }
    };
}

binary_op!(Add, add, Add, +);
binary_op!(Sub, sub, Sub, -);
binary_op!(Mul, mul, Mul, *);

impl<'g> std::ops::Neg for Var<'g> {
    type Output = Var<'g>;
    fn neg(self) -> Var<'g> {
        self.scale(-1.0)
    }
}

/// Binds parameter tensors to leaves on a graph, once per tensor, and maps
/// gradients back to the tensors they belong to.
pub struct Binder<'g> {
    graph: &'g Graph,
    bound: HashMap<*const Tensor, Var<'g>>,
    order: Vec<*const Tensor>,
}

impl<'g> Binder<'g> {
    pub fn new(graph: &'g Graph) -> Self {
        Binder {
            graph,
            bound: HashMap::new(),
            order: Vec::new(),
        }
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn bind(&mut self, tensor: &Tensor) -> Var<'g> {
        let key = tensor as *const Tensor;
        if let Some(v) = self.bound.get(&key) {
            return *v;
        }
        let v = self.graph.leaf(tensor.clone());
        self.bound.insert(key, v);
        self.order.push(key);
        v
    }

    /// Gradients of `loss` for every bound tensor, keyed by tensor address.
    pub fn gradients(&self, loss: Var<'g>) -> Gradients {
        let vars: Vec<Var<'g>> = self.order.iter().map(|k| self.bound[k]).collect();
        let grads = self.graph.grad(loss, &vars);
        Gradients {
            map: self
                .order
                .iter()
                .zip(grads)
                .map(|(k, g)| (*k as usize, g.value().as_ref().clone()))
                .collect(),
        }
    }
}

/// Parameter gradients keyed by the address of the parameter tensor.
pub struct Gradients {
    map: HashMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, tensor: &Tensor) -> Option<&Tensor> {
        self.map.get(&(tensor as *const Tensor as usize))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn numeric_grad(f: impl Fn(&Tensor) -> f64, x: &Tensor) -> Tensor {
        let h = 1e-6;
        let mut g = Tensor::zeros(x.dim());
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let mut xp = x.clone();
            xp[[r, c]] += h;
            let mut xm = x.clone();
            xm[[r, c]] -= h;
            g[[r, c]] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        g
    }

    fn composite<'g>(g: &'g Graph, x: Var<'g>) -> Var<'g> {
        let w = g.leaf(array![[0.3, -0.7, 1.1], [0.5, 0.2, -0.4]]);
        let b = g.leaf(array![[0.1], [-0.2]]);
        let index: Rc<[usize]> = vec![0, 0, 1, 2, 1, 2, 3, 3].into();
        let h = w.matmul(x).add_bias(b).leaky_relu(0.2);
        let u = h.unfold(index, 2);
        let s = (u.square().sum().offset(1.0)).sqrt();
        let y = concat_rows(&[h.row(0).sigmoid(), h.row(1).abs()]);
        s + (y * y).sum().recip().offset(0.0) + h.sum_cols().sum()
    }

    #[test]
    fn first_order_matches_finite_differences() {
        let x0 = array![[0.5, -1.0, 2.0, 0.3], [1.5, 0.7, -0.2, 0.9], [-0.4, 0.8, 1.3, -1.1]];
        let g = Graph::new();
        let x = g.leaf(x0.clone());
        let y = composite(&g, x);
        let dx = g.grad(y, &[x])[0].value();
        let numeric = numeric_grad(
            |xv| {
                let g2 = Graph::new();
                let x = g2.leaf(xv.clone());
                composite(&g2, x).item()
            },
            &x0,
        );
        assert_relative_eq!(*dx, numeric, epsilon = 1e-6);
    }

    #[test]
    fn second_order_matches_finite_differences() {
        // d/dw ||d/dx (w^T tanh-free smooth f)||^2 through matmul + sigmoid.
        let w0 = array![[0.4, -0.3], [0.8, 0.1], [-0.6, 0.9]];
        let x0 = array![[0.2, -0.5, 0.7], [1.0, 0.3, -0.8]];
        fn penalty<'g>(g: &'g Graph, w: Var<'g>, x0: &Tensor) -> Var<'g> {
            let x = g.leaf(x0.clone());
            let score = w.matmul(x).sigmoid().sum();
            let dx = g.grad(score, &[x])[0];
            dx.square().sum()
        }
        let g = Graph::new();
        let w = g.leaf(w0.clone());
        let p = penalty(&g, w, &x0);
        let dw = g.grad(p, &[w])[0].value();
        let numeric = numeric_grad(
            |wv| {
                let g2 = Graph::new();
                let w = g2.leaf(wv.clone());
                penalty(&g2, w, &x0).item()
            },
            &w0,
        );
        assert_relative_eq!(*dw, numeric, epsilon = 1e-6);
    }

    #[test]
    fn fold_is_adjoint_of_unfold() {
        let index: Rc<[usize]> = vec![1, 0, 2, 2, 1, 0].into();
        let a = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let b = array![[0.5, -1.0, 2.0], [1.0, 0.0, 3.0], [2.0, 1.0, -1.0], [0.0, 4.0, 1.0]];
        let g = Graph::new();
        let ua = g.leaf(a.clone()).unfold(Rc::clone(&index), 2).value();
        let fb = g.leaf(b.clone()).fold(index, 2, 3).value();
        assert_relative_eq!((&*ua * &b).sum(), (&a * &*fb).sum(), epsilon = 1e-12);
    }

    #[test]
    fn unused_input_has_zero_gradient() {
        let g = Graph::new();
        let x = g.leaf(array![[1.0, 2.0]]);
        let z = g.leaf(array![[3.0]]);
        let y = x.sum();
        let grads = g.grad(y, &[x, z]);
        assert_eq!(*grads[0].value(), array![[1.0, 1.0]]);
        assert_eq!(*grads[1].value(), array![[0.0]]);
    }

    #[test]
    fn binder_reuses_leaves() {
        let t = array![[2.0]];
        let g = Graph::new();
        let mut b = Binder::new(&g);
        let v1 = b.bind(&t);
        let v2 = b.bind(&t);
        assert_eq!(v1.id(), v2.id());
        let grads = b.gradients((v1 * v2).sum());
        assert_eq!(grads.get(&t).unwrap()[[0, 0]], 4.0);
    }
}
