//! Wengert tape over row-major matrices.
//!
//! Every node is a `[rows, cols]` matrix; a batch of vectors is a matrix
//! with one row per sample. Operations are appended in execution order and
//! `backward` replays them in exact reverse order, accumulating into the
//! gradients held by a [`ParamStore`].

use std::collections::HashMap;

use super::params::ParamStore;

pub type NodeId = usize;

/// Scalar nonlinearities available as elementwise tape operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// Exponential linear unit with alpha = 1.
    Elu,
    Tanh,
    Abs,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Abs => x.abs(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Identity => x,
        }
    }

    /// Derivative at input `x` with output `y = apply(x)`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Abs => {
                if x >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(String),
    /// `x · wᵀ + b` with `w: [out, in]`, `b: [1, out]`.
    Linear {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    Unary(NodeId, Activation),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `1 - x`
    OneMinus(NodeId),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SliceCols {
        x: NodeId,
        start: usize,
    },
    SliceRows {
        x: NodeId,
        start: usize,
    },
    Reshape(NodeId),
    Transpose(NodeId),
    /// One column per row, selected by index.
    Gather {
        x: NodeId,
        idx: Vec<usize>,
    },
    /// Row-wise `v[r] · reshape(m[r], [n, k])`.
    RowVecMat {
        v: NodeId,
        m: NodeId,
        k: usize,
    },
    TileRows(NodeId),
    SumCols(NodeId),
    /// `Σ w (x - t)²` over all entries.
    WeightedSqErr {
        x: NodeId,
        target: Vec<f64>,
        weight: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

/// Records operations and their values for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, NodeId>,
}

/// `c[m,n] = beta * c + a[m,k] · b[k,n]` with arbitrary strides.
#[allow(clippy::too_many_arguments)]
#[inline]
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
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: the caller's slices cover the strided extents: every access
    // `a[i*rsa + p*csa]` with i < m, p < k lies inside `a` (likewise `b`), and
    // `c` is a dense m×n row-major buffer.
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
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
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

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> NodeId {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
        });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        (self.nodes[id].rows, self.nodes[id].cols)
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        assert_eq!(self.shape(id), (1, 1));
        self.nodes[id].value[0]
    }

    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> NodeId {
        assert_eq!(rows * cols, value.len(), "constant shape");
        self.push(rows, cols, value, Op::Constant)
    }

    /// The named parameter as a matrix node. Repeated calls with the same name
    /// return the same node, so gradients from every use accumulate.
    ///
    /// Panics if the store has no such entry; use [`ParamStore::require`] first
    /// when the name comes from user input.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> NodeId {
        if let Some(&id) = self.params.get(name) {
            return id;
        }
        let t = store
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        let (r, c) = t.matrix_dims();
        let id = self.push(r, c, t.data.clone(), Op::Param(name.to_string()));
        self.params.insert(name.to_string(), id);
        id
    }

    /// `x · wᵀ + b`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> NodeId {
        let (rows, fan_in) = self.shape(x);
        let (fan_out, w_in) = self.shape(w);
        assert_eq!(fan_in, w_in, "linear: input width {fan_in} vs weight {w_in}");
        let mut out = vec![0.0; rows * fan_out];
        if let Some(b) = b {
            let bias = &self.nodes[b].value;
            assert_eq!(bias.len(), fan_out, "linear: bias length");
            for row in out.chunks_mut(fan_out) {
                row.copy_from_slice(bias);
            }
        }
        let beta = if b.is_some() { 1.0 } else { 0.0 };
        gemm(
            rows,
            fan_in,
            fan_out,
            &self.nodes[x].value,
            fan_in as isize,
            1,
            &self.nodes[w].value,
            1,
            fan_in as isize,
            beta,
            &mut out,
        );
        self.push(rows, fan_out, out, Op::Linear { x, w, b })
    }

    pub fn unary(&mut self, x: NodeId, act: Activation) -> NodeId {
        let (r, c) = self.shape(x);
        let v = self.nodes[x].value.iter().map(|&a| act.apply(a)).collect();
        self.push(r, c, v, Op::Unary(x, act))
    }

    fn binary(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64, op: Op) -> NodeId {
        let sa = self.shape(a);
        assert_eq!(sa, self.shape(b), "elementwise shape mismatch");
        let v = self.nodes[a]
            .value
            .iter()
            .zip(&self.nodes[b].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(sa.0, sa.1, v, op)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn one_minus(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        let v = self.nodes[x].value.iter().map(|a| 1.0 - a).collect();
        self.push(r, c, v, Op::OneMinus(x))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rows = self.shape(parts[0]).0;
        let cols: usize = parts
            .iter()
            .map(|&p| {
                assert_eq!(self.shape(p).0, rows, "concat_cols row mismatch");
                self.shape(p).1
            })
            .sum();
        let mut v = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let c = self.nodes[p].cols;
                v.extend_from_slice(&self.nodes[p].value[r * c..(r + 1) * c]);
            }
        }
        self.push(rows, cols, v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let cols = self.shape(parts[0]).1;
        let mut rows = 0;
        let mut v = Vec::new();
        for &p in parts {
            assert_eq!(self.shape(p).1, cols, "concat_rows column mismatch");
            rows += self.nodes[p].rows;
            v.extend_from_slice(&self.nodes[p].value);
        }
        self.push(rows, cols, v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let (rows, cols) = self.shape(x);
        assert!(start + len <= cols, "slice out of range");
        let src = &self.nodes[x].value;
        let mut v = Vec::with_capacity(rows * len);
        for r in 0..rows {
            v.extend_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        self.push(rows, len, v, Op::SliceCols { x, start })
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let (rows, cols) = self.shape(x);
        assert!(start + len <= rows, "row slice out of range");
        let v = self.nodes[x].value[start * cols..(start + len) * cols].to_vec();
        self.push(len, cols, v, Op::SliceRows { x, start })
    }

    pub fn reshape(&mut self, x: NodeId, rows: usize, cols: usize) -> NodeId {
        let (r, c) = self.shape(x);
        assert_eq!(r * c, rows * cols, "reshape size");
        let v = self.nodes[x].value.clone();
        self.push(rows, cols, v, Op::Reshape(x))
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        let src = &self.nodes[x].value;
        let mut v = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                v[j * r + i] = src[i * c + j];
            }
        }
        self.push(c, r, v, Op::Transpose(x))
    }

    /// Picks column `idx[r]` of each row `r`, giving a `[rows, 1]` node.
    pub fn gather(&mut self, x: NodeId, idx: &[usize]) -> NodeId {
        let (rows, cols) = self.shape(x);
        assert_eq!(idx.len(), rows, "gather index count");
        let src = &self.nodes[x].value;
        let v = idx
            .iter()
            .enumerate()
            .map(|(r, &i)| {
                assert!(i < cols, "gather index {i} out of range {cols}");
                src[r * cols + i]
            })
            .collect();
        self.push(rows, 1, v, Op::Gather { x, idx: idx.to_vec() })
    }

    /// For each row `r`: `out[r, j] = Σ_i v[r, i] · m[r, i*k + j]`.
    pub fn row_vec_mat(&mut self, v: NodeId, m: NodeId, k: usize) -> NodeId {
        let (rows, n) = self.shape(v);
        assert_eq!(self.shape(m), (rows, n * k), "row_vec_mat shape");
        let vv = &self.nodes[v].value;
        let mv = &self.nodes[m].value;
        let mut out = vec![0.0; rows * k];
        for r in 0..rows {
            let o = &mut out[r * k..(r + 1) * k];
            for i in 0..n {
                let a = vv[r * n + i];
                let mrow = &mv[r * n * k + i * k..r * n * k + (i + 1) * k];
                for (oj, mj) in o.iter_mut().zip(mrow) {
                    *oj += a * mj;
                }
            }
        }
        self.push(rows, k, out, Op::RowVecMat { v, m, k })
    }

    /// Repeats a single-row node `times` times.
    pub fn tile_rows(&mut self, x: NodeId, times: usize) -> NodeId {
        let (r, c) = self.shape(x);
        assert_eq!(r, 1, "tile_rows expects one row");
        let src = self.nodes[x].value.clone();
        let mut v = Vec::with_capacity(times * c);
        for _ in 0..times {
            v.extend_from_slice(&src);
        }
        self.push(times, c, v, Op::TileRows(x))
    }

    pub fn sum_cols(&mut self, x: NodeId) -> NodeId {
        let (rows, cols) = self.shape(x);
        let src = &self.nodes[x].value;
        let v = (0..rows).map(|r| src[r * cols..(r + 1) * cols].iter().sum()).collect();
        self.push(rows, 1, v, Op::SumCols(x))
    }

    /// Scalar `Σ weight · (x − target)²`.
    pub fn weighted_sq_err(&mut self, x: NodeId, target: Vec<f64>, weight: Vec<f64>) -> NodeId {
        let n = self.nodes[x].value.len();
        assert_eq!(target.len(), n, "target length");
        assert_eq!(weight.len(), n, "weight length");
        let loss = self.nodes[x]
            .value
            .iter()
            .zip(&target)
            .zip(&weight)
            .map(|((a, t), w)| w * (a - t) * (a - t))
            .sum();
        self.push(1, 1, vec![loss], Op::WeightedSqErr { x, target, weight })
    }

    /// Backpropagates from the 1×1 `root` and adds parameter gradients into
    /// `store`.
    pub fn backward(&self, root: NodeId, store: &mut ParamStore) {
        assert_eq!(self.shape(root), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Vec<f64>>> = (0..=root).map(|_| None).collect();
        grads[root] = Some(vec![1.0]);

        fn slot<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], id: NodeId) -> &'g mut Vec<f64> {
            grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.len()])
        }

        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Constant => {}
                Op::Param(name) => {
                    store.accumulate_grad(name, &g);
                }
                Op::Linear { x, w, b } => {
                    let (rows, fan_in) = self.shape(*x);
                    let fan_out = node.cols;
                    if let Some(b) = b {
                        let gb = slot(&mut grads, &self.nodes, *b);
                        for row in g.chunks(fan_out) {
                            for (a, v) in gb.iter_mut().zip(row) {
                                *a += v;
                            }
                        }
                    }
                    // dW[out, in] += gᵀ[out, rows] · x[rows, in]
                    {
                        let xv = &self.nodes[*x].value;
                        let gw = slot(&mut grads, &self.nodes, *w);
                        gemm(fan_out, rows, fan_in, &g, 1, fan_out as isize, xv, fan_in as isize, 1, 1.0, gw);
                    }
                    if !matches!(self.nodes[*x].op, Op::Constant) {
                        let wv = &self.nodes[*w].value;
                        let gx = slot(&mut grads, &self.nodes, *x);
                        gemm(rows, fan_out, fan_in, &g, fan_out as isize, 1, wv, fan_in as isize, 1, 1.0, gx);
                    }
                }
                Op::Unary(x, act) => {
                    let xv = &self.nodes[*x].value;
                    let yv = &node.value;
                    let gx = slot(&mut grads, &self.nodes, *x);
                    for i in 0..g.len() {
                        gx[i] += g[i] * act.derivative(xv[i], yv[i]);
                    }
                }
                Op::Add(a, b) => {
                    for id in [*a, *b] {
                        let ga = slot(&mut grads, &self.nodes, id);
                        ga.iter_mut().zip(&g).for_each(|(s, v)| *s += v);
                    }
                }
                Op::Sub(a, b) => {
                    let ga = slot(&mut grads, &self.nodes, *a);
                    ga.iter_mut().zip(&g).for_each(|(s, v)| *s += v);
                    let gb = slot(&mut grads, &self.nodes, *b);
                    gb.iter_mut().zip(&g).for_each(|(s, v)| *s -= v);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    {
                        let ga = slot(&mut grads, &self.nodes, *a);
                        for i in 0..g.len() {
                            ga[i] += g[i] * bv[i];
                        }
                    }
                    let gb = slot(&mut grads, &self.nodes, *b);
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                }
                Op::OneMinus(x) => {
                    let gx = slot(&mut grads, &self.nodes, *x);
                    gx.iter_mut().zip(&g).for_each(|(s, v)| *s -= v);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let c = self.nodes[p].cols;
                        let gp = slot(&mut grads, &self.nodes, p);
                        for r in 0..node.rows {
                            let src = &g[r * node.cols + off..r * node.cols + off + c];
                            for (s, v) in gp[r * c..(r + 1) * c].iter_mut().zip(src) {
                                *s += v;
                            }
                        }
                        off += c;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.nodes[p].value.len();
                        let gp = slot(&mut grads, &self.nodes, p);
                        gp.iter_mut().zip(&g[off..off + n]).for_each(|(s, v)| *s += v);
                        off += n;
                    }
                }
                Op::SliceCols { x, start } => {
                    let cols = self.nodes[*x].cols;
                    let len = node.cols;
                    let gx = slot(&mut grads, &self.nodes, *x);
                    for r in 0..node.rows {
                        for j in 0..len {
                            gx[r * cols + start + j] += g[r * len + j];
                        }
                    }
                }
                Op::SliceRows { x, start } => {
                    let off = start * node.cols;
                    let gx = slot(&mut grads, &self.nodes, *x);
                    gx[off..off + g.len()].iter_mut().zip(&g).for_each(|(s, v)| *s += v);
                }
                Op::Reshape(x) => {
                    let gx = slot(&mut grads, &self.nodes, *x);
                    gx.iter_mut().zip(&g).for_each(|(s, v)| *s += v);
                }
                Op::Transpose(x) => {
                    let (r, c) = self.shape(*x);
                    let gx = slot(&mut grads, &self.nodes, *x);
                    for i in 0..r {
                        for j in 0..c {
                            gx[i * c + j] += g[j * r + i];
                        }
                    }
                }
                Op::Gather { x, idx } => {
                    let cols = self.nodes[*x].cols;
                    let gx = slot(&mut grads, &self.nodes, *x);
                    for (r, &i) in idx.iter().enumerate() {
                        gx[r * cols + i] += g[r];
                    }
                }
                Op::RowVecMat { v, m, k } => {
                    let k = *k;
                    let (rows, n) = self.shape(*v);
                    let (vv, mv) = (&self.nodes[*v].value, &self.nodes[*m].value);
                    {
                        let gv = slot(&mut grads, &self.nodes, *v);
                        for r in 0..rows {
                            let gr = &g[r * k..(r + 1) * k];
                            for i in 0..n {
                                let mrow = &mv[r * n * k + i * k..r * n * k + (i + 1) * k];
                                gv[r * n + i] += gr.iter().zip(mrow).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    }
                    let gm = slot(&mut grads, &self.nodes, *m);
                    for r in 0..rows {
                        let gr = &g[r * k..(r + 1) * k];
                        for i in 0..n {
                            let a = vv[r * n + i];
                            let dst = &mut gm[r * n * k + i * k..r * n * k + (i + 1) * k];
                            for (d, gj) in dst.iter_mut().zip(gr) {
                                *d += a * gj;
                            }
                        }
                    }
                }
                Op::TileRows(x) => {
                    let c = node.cols;
                    let gx = slot(&mut grads, &self.nodes, *x);
                    for row in g.chunks(c) {
                        gx.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                    }
                }
                Op::SumCols(x) => {
                    let cols = self.nodes[*x].cols;
                    let gx = slot(&mut grads, &self.nodes, *x);
                    for (r, gr) in g.iter().enumerate() {
                        gx[r * cols..(r + 1) * cols].iter_mut().for_each(|s| *s += gr);
                    }
                }
                Op::WeightedSqErr { x, target, weight } => {
                    let xv = &self.nodes[*x].value;
                    let gx = slot(&mut grads, &self.nodes, *x);
                    for i in 0..xv.len() {
                        gx[i] += g[0] * 2.0 * weight[i] * (xv[i] - target[i]);
                    }
                }
            }
        }
    }
}
