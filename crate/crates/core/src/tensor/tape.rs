use super::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Sigmoid(Var),
    Softmax(Var, usize),
    LogSoftmax(Var, usize),
    L2Normalize(Var, usize, S),
    Concat(Vec<Var>, usize),
    SegmentSum(Var, Vec<usize>),
    GatherRows(Var, Vec<usize>),
    FrobeniusSq(Var),
    Sum(Var),
    Mean(Var),
    SumAlong(Var, usize),
    Transpose(Var),
    Reshape(Var),
}

impl<S> Op<S> {
    fn parents(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | AddRow(a, b) | MulCol(a, b) => {
                vec![*a, *b]
            }
            Concat(parts, _) => parts.clone(),
            Scale(x, _)
            | Relu(x)
            | Exp(x)
            | Log(x)
            | Sigmoid(x)
            | Softmax(x, _)
            | LogSoftmax(x, _)
            | L2Normalize(x, _, _)
            | SegmentSum(x, _)
            | GatherRows(x, _)
            | FrobeniusSq(x)
            | Sum(x)
            | Mean(x)
            | SumAlong(x, _)
            | Transpose(x)
            | Reshape(x) => vec![*x],
        }
    }
}

#[derive(Debug, Clone)]
struct Node<S> {
    shape: Shape,
    value: Vec<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// Lanes of a matrix along `dim`: `dim = 1` walks each row, `dim = 0` each column.
#[derive(Clone, Copy)]
struct Lanes {
    count: usize,
    len: usize,
    lane_stride: usize,
    step: usize,
}

impl Lanes {
    fn new(shape: Shape, dim: usize) -> Self {
        if dim == 1 {
            Lanes {
                count: shape.rows,
                len: shape.cols,
                lane_stride: shape.cols,
                step: 1,
            }
        } else {
            Lanes {
                count: shape.cols,
                len: shape.rows,
                lane_stride: 1,
                step: shape.cols,
            }
        }
    }

    fn idx(&self, lane: usize, i: usize) -> usize {
        lane * self.lane_stride + i * self.step
    }
}

/// Record of a forward computation, replayed in reverse by [`Tape::backward`].
///
/// Nodes are appended in evaluation order, so the recording is already a
/// topological order of the computation graph.
#[derive(Debug, Clone)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
    debug_checks: bool,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, a: Shape, b: Shape) -> Error {
    Error::Shape {
        op,
        left: a.to_string(),
        right: b.to_string(),
    }
}

fn check_dim(op: &'static str, dim: usize) -> Result<()> {
    if dim > 1 {
        return Err(Error::Contract(format!("{op}: dim must be 0 or 1, got {dim}")));
    }
    Ok(())
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            debug_checks: false,
        }
    }

    /// Tape that rejects any non-finite operator output.
    pub fn with_debug_checks() -> Self {
        Tape {
            nodes: Vec::new(),
            debug_checks: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, name: &'static str, op: Op<S>, shape: Shape, value: Vec<S>) -> Result<Var> {
        debug_assert_eq!(shape.len(), value.len());
        if self.debug_checks && value.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { op: name });
        }
        let needs_grad = op.parents().iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn node(&self, v: Var) -> &Node<S> {
        &self.nodes[v.0]
    }

    /// Differentiable input.
    pub fn leaf(&mut self, t: Tensor<S>) -> Var {
        let shape = t.shape();
        self.nodes.push(Node {
            shape,
            value: t.into_vec(),
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        let shape = t.shape();
        self.nodes.push(Node {
            shape,
            value: t.into_vec(),
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.node(v).shape
    }

    pub fn value(&self, v: Var) -> &[S] {
        &self.node(v).value
    }

    pub fn tensor(&self, v: Var) -> Tensor<S> {
        let n = self.node(v);
        Tensor::from_vec(n.shape.rows, n.shape.cols, n.value.clone()).expect("node shape")
    }

    /// Value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> S {
        self.node(v).value[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).needs_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.cols != sb.rows {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa.rows, sa.cols, sb.cols);
        let mut out = vec![S::zero(); m * n];
        if m > 0 && n > 0 && k > 0 {
            let (av, bv) = (&self.node(a).value, &self.node(b).value);
            // SAFETY: row-major buffers of the checked shapes; `out` is fresh.
            unsafe {
                S::gemm(
                    m,
                    k,
                    n,
                    S::one(),
                    av.as_ptr(),
                    k as isize,
                    1,
                    bv.as_ptr(),
                    n as isize,
                    1,
                    S::zero(),
                    out.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        }
        self.push("matmul", Op::MatMul(a, b), Shape::new(m, n), out)
    }

    fn zip_same(&mut self, name: &'static str, a: Var, b: Var, op: Op<S>, f: impl Fn(S, S) -> S) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(name, sa, sb));
        }
        let value = self
            .node(a)
            .value
            .iter()
            .zip(&self.node(b).value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(name, op, sa, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, x: Var, s: S) -> Result<Var> {
        let value = self.node(x).value.iter().map(|&v| v * s).collect();
        let shape = self.shape(x);
        self.push("scale", Op::Scale(x, s), shape, value)
    }

    /// Adds a `1×c` row vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sb.rows != 1 || sb.cols != sx.cols {
            return Err(shape_err("add_row", sx, sb));
        }
        let b = &self.node(bias).value;
        let value = self
            .node(x)
            .value
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b[i % sx.cols])
            .collect();
        self.push("add_row", Op::AddRow(x, bias), sx, value)
    }

    /// Multiplies row `r` of `x` by `g[r]`, where `g` is `rows×1`.
    pub fn mul_col(&mut self, x: Var, g: Var) -> Result<Var> {
        let (sx, sg) = (self.shape(x), self.shape(g));
        if sg.cols != 1 || sg.rows != sx.rows {
            return Err(shape_err("mul_col", sx, sg));
        }
        let gv = &self.node(g).value;
        let value = self
            .node(x)
            .value
            .iter()
            .enumerate()
            .map(|(i, &v)| v * gv[i / sx.cols.max(1)])
            .collect();
        self.push("mul_col", Op::MulCol(x, g), sx, value)
    }

    fn unary(&mut self, name: &'static str, x: Var, op: Op<S>, f: impl Fn(S) -> S) -> Result<Var> {
        let value = self.node(x).value.iter().map(|&v| f(v)).collect();
        let shape = self.shape(x);
        self.push(name, op, shape, value)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary("relu", x, Op::Relu(x), |v| if v > S::zero() { v } else { S::zero() })
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary("exp", x, Op::Exp(x), S::exp)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary("log", x, Op::Log(x), S::ln)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary("sigmoid", x, Op::Sigmoid(x), sigmoid)
    }

    pub fn softmax(&mut self, x: Var, dim: usize) -> Result<Var> {
        check_dim("softmax", dim)?;
        let shape = self.shape(x);
        let value = softmax_lanes(&self.node(x).value, shape, dim, false);
        self.push("softmax", Op::Softmax(x, dim), shape, value)
    }

    pub fn log_softmax(&mut self, x: Var, dim: usize) -> Result<Var> {
        check_dim("log_softmax", dim)?;
        let shape = self.shape(x);
        let value = softmax_lanes(&self.node(x).value, shape, dim, true);
        self.push("log_softmax", Op::LogSoftmax(x, dim), shape, value)
    }

    /// `x / (‖x‖₂ + eps)` along `dim`.
    pub fn l2_normalize(&mut self, x: Var, dim: usize, eps: S) -> Result<Var> {
        check_dim("l2_normalize", dim)?;
        let shape = self.shape(x);
        let xv = &self.node(x).value;
        let lanes = Lanes::new(shape, dim);
        let mut value = vec![S::zero(); xv.len()];
        for l in 0..lanes.count {
            let norm = (0..lanes.len).map(|i| xv[lanes.idx(l, i)].powi(2)).sum::<S>().sqrt();
            let d = norm + eps;
            for i in 0..lanes.len {
                let j = lanes.idx(l, i);
                value[j] = xv[j] / d;
            }
        }
        self.push("l2_normalize", Op::L2Normalize(x, dim, eps), shape, value)
    }

    /// Concatenation along `dim` (0 stacks rows, 1 stacks columns).
    pub fn concat(&mut self, parts: &[Var], dim: usize) -> Result<Var> {
        check_dim("concat", dim)?;
        let first = parts
            .first()
            .map(|&p| self.shape(p))
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        for &p in &parts[1..] {
            let s = self.shape(p);
            if (dim == 0 && s.cols != first.cols) || (dim == 1 && s.rows != first.rows) {
                return Err(shape_err("concat", first, s));
            }
        }
        let (shape, value) = if dim == 0 {
            let rows = parts.iter().map(|&p| self.shape(p).rows).sum();
            let value = parts.iter().flat_map(|&p| self.node(p).value.iter().copied()).collect();
            (Shape::new(rows, first.cols), value)
        } else {
            let cols: usize = parts.iter().map(|&p| self.shape(p).cols).sum();
            let mut value = Vec::with_capacity(first.rows * cols);
            for r in 0..first.rows {
                for &p in parts {
                    let c = self.shape(p).cols;
                    value.extend_from_slice(&self.node(p).value[r * c..(r + 1) * c]);
                }
            }
            (Shape::new(first.rows, cols), value)
        };
        self.push("concat", Op::Concat(parts.to_vec(), dim), shape, value)
    }

    /// Row `s` of the output is the sum of rows `i` of `x` with `index[i] == s`.
    pub fn segment_sum(&mut self, x: Var, index: &[usize], num_segments: usize) -> Result<Var> {
        let sx = self.shape(x);
        if index.len() != sx.rows {
            return Err(Error::Shape {
                op: "segment_sum",
                left: sx.to_string(),
                right: format!("{} segment ids", index.len()),
            });
        }
        if let Some(&bad) = index.iter().find(|&&s| s >= num_segments) {
            return Err(Error::Contract(format!(
                "segment_sum: segment id {bad} >= {num_segments}"
            )));
        }
        let c = sx.cols;
        let xv = &self.node(x).value;
        let mut value = vec![S::zero(); num_segments * c];
        for (i, &s) in index.iter().enumerate() {
            for j in 0..c {
                value[s * c + j] += xv[i * c + j];
            }
        }
        self.push(
            "segment_sum",
            Op::SegmentSum(x, index.to_vec()),
            Shape::new(num_segments, c),
            value,
        )
    }

    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let sx = self.shape(x);
        if let Some(&bad) = index.iter().find(|&&i| i >= sx.rows) {
            return Err(Error::Contract(format!("gather_rows: row {bad} out of range for {sx}")));
        }
        let c = sx.cols;
        let xv = &self.node(x).value;
        let mut value = Vec::with_capacity(index.len() * c);
        for &i in index {
            value.extend_from_slice(&xv[i * c..(i + 1) * c]);
        }
        self.push(
            "gather_rows",
            Op::GatherRows(x, index.to_vec()),
            Shape::new(index.len(), c),
            value,
        )
    }

    /// Sum of squared entries, as a `1×1` node.
    pub fn frobenius_sq(&mut self, x: Var) -> Result<Var> {
        let v = self.node(x).value.iter().map(|&a| a * a).sum();
        self.push("frobenius_sq", Op::FrobeniusSq(x), Shape::new(1, 1), vec![v])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let v = self.node(x).value.iter().copied().sum();
        self.push("sum", Op::Sum(x), Shape::new(1, 1), vec![v])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.shape(x).len();
        if n == 0 {
            return Err(Error::Contract("mean of an empty tensor".into()));
        }
        let v = self.node(x).value.iter().copied().sum::<S>() / S::lit(n as f64);
        self.push("mean", Op::Mean(x), Shape::new(1, 1), vec![v])
    }

    /// Sums along `dim`: `dim = 1` yields a `rows×1` column, `dim = 0` a `1×cols` row.
    pub fn sum_along(&mut self, x: Var, dim: usize) -> Result<Var> {
        check_dim("sum_along", dim)?;
        let sx = self.shape(x);
        let lanes = Lanes::new(sx, dim);
        let xv = &self.node(x).value;
        let value: Vec<S> = (0..lanes.count)
            .map(|l| (0..lanes.len).map(|i| xv[lanes.idx(l, i)]).sum())
            .collect();
        let shape = if dim == 1 {
            Shape::new(sx.rows, 1)
        } else {
            Shape::new(1, sx.cols)
        };
        self.push("sum_along", Op::SumAlong(x, dim), shape, value)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x);
        let xv = &self.node(x).value;
        let mut value = vec![S::zero(); xv.len()];
        for i in 0..sx.rows {
            for j in 0..sx.cols {
                value[j * sx.rows + i] = xv[i * sx.cols + j];
            }
        }
        self.push("transpose", Op::Transpose(x), Shape::new(sx.cols, sx.rows), value)
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let sx = self.shape(x);
        if sx.len() != rows * cols {
            return Err(shape_err("reshape", sx, Shape::new(rows, cols)));
        }
        let value = self.node(x).value.clone();
        self.push("reshape", Op::Reshape(x), Shape::new(rows, cols), value)
    }

    /// Reverse pass from a `1×1` root. Returns gradients of every
    /// differentiable leaf that the root depends on.
    pub fn backward(&self, root: Var) -> Result<Gradients<S>> {
        let rs = self.shape(root);
        if rs != Shape::new(1, 1) {
            return Err(Error::Contract(format!("backward needs a scalar root, got shape {rs}")));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; root.0 + 1];
        if self.nodes[root.0].needs_grad {
            grads[root.0] = Some(vec![S::one()]);
        }
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn backprop(&self, node: &Node<S>, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| -> &[S] { &nodes[v.0].value };
        // Gradient buffer of a parent, or None when it takes no gradient.
        macro_rules! slot {
            ($v:expr) => {{
                let v: Var = $v;
                if nodes[v.0].needs_grad {
                    Some(grads[v.0].get_or_insert_with(|| vec![S::zero(); nodes[v.0].value.len()]))
                } else {
                    None
                }
            }};
        }
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (nodes[a.0].shape, nodes[b.0].shape);
                let (m, k, n) = (sa.rows, sa.cols, sb.cols);
                if m == 0 || k == 0 || n == 0 {
                    return;
                }
                if let Some(ga) = slot!(*a) {
                    // dA += dC · Bᵀ
                    unsafe {
                        S::gemm(
                            m,
                            n,
                            k,
                            S::one(),
                            g.as_ptr(),
                            n as isize,
                            1,
                            val(*b).as_ptr(),
                            1,
                            n as isize,
                            S::one(),
                            ga.as_mut_ptr(),
                            k as isize,
                            1,
                        );
                    }
                }
                if let Some(gb) = slot!(*b) {
                    // dB += Aᵀ · dC
                    unsafe {
                        S::gemm(
                            k,
                            m,
                            n,
                            S::one(),
                            val(*a).as_ptr(),
                            1,
                            k as isize,
                            g.as_ptr(),
                            n as isize,
                            1,
                            S::one(),
                            gb.as_mut_ptr(),
                            n as isize,
                            1,
                        );
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = slot!(*a) {
                    ga.iter_mut().zip(g).for_each(|(x, &d)| *x += d);
                }
                if let Some(gb) = slot!(*b) {
                    gb.iter_mut().zip(g).for_each(|(x, &d)| *x += d);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = slot!(*a) {
                    ga.iter_mut().zip(g).for_each(|(x, &d)| *x += d);
                }
                if let Some(gb) = slot!(*b) {
                    gb.iter_mut().zip(g).for_each(|(x, &d)| *x -= d);
                }
            }
            Op::Mul(a, b) => {
                if let Some(ga) = slot!(*a) {
                    let bv = val(*b);
                    for (i, x) in ga.iter_mut().enumerate() {
                        *x += g[i] * bv[i];
                    }
                }
                if let Some(gb) = slot!(*b) {
                    let av = val(*a);
                    for (i, x) in gb.iter_mut().enumerate() {
                        *x += g[i] * av[i];
                    }
                }
            }
            Op::Scale(x, s) => {
                if let Some(gx) = slot!(*x) {
                    gx.iter_mut().zip(g).for_each(|(v, &d)| *v += d * *s);
                }
            }
            Op::AddRow(x, b) => {
                let c = node.shape.cols;
                if let Some(gx) = slot!(*x) {
                    gx.iter_mut().zip(g).for_each(|(v, &d)| *v += d);
                }
                if let Some(gb) = slot!(*b) {
                    for (i, &d) in g.iter().enumerate() {
                        gb[i % c] += d;
                    }
                }
            }
            Op::MulCol(x, s) => {
                let c = node.shape.cols.max(1);
                if let Some(gx) = slot!(*x) {
                    let sv = val(*s);
                    for (i, v) in gx.iter_mut().enumerate() {
                        *v += g[i] * sv[i / c];
                    }
                }
                if let Some(gs) = slot!(*s) {
                    let xv = val(*x);
                    for (i, &d) in g.iter().enumerate() {
                        gs[i / c] += d * xv[i];
                    }
                }
            }
            Op::Relu(x) => {
                if let Some(gx) = slot!(*x) {
                    let xv = val(*x);
                    for (i, v) in gx.iter_mut().enumerate() {
                        if xv[i] > S::zero() {
                            *v += g[i];
                        }
                    }
                }
            }
            Op::Exp(x) => {
                if let Some(gx) = slot!(*x) {
                    for (i, v) in gx.iter_mut().enumerate() {
                        *v += g[i] * node.value[i];
                    }
                }
            }
            Op::Log(x) => {
                if let Some(gx) = slot!(*x) {
                    let xv = val(*x);
                    for (i, v) in gx.iter_mut().enumerate() {
                        *v += g[i] / xv[i];
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(gx) = slot!(*x) {
                    for (i, v) in gx.iter_mut().enumerate() {
                        let y = node.value[i];
                        *v += g[i] * y * (S::one() - y);
                    }
                }
            }
            Op::Softmax(x, dim) => {
                if let Some(gx) = slot!(*x) {
                    let lanes = Lanes::new(node.shape, *dim);
                    let y = &node.value;
                    for l in 0..lanes.count {
                        let dot: S = (0..lanes.len)
                            .map(|i| {
                                let j = lanes.idx(l, i);
                                g[j] * y[j]
                            })
                            .sum();
                        for i in 0..lanes.len {
                            let j = lanes.idx(l, i);
                            gx[j] += y[j] * (g[j] - dot);
                        }
                    }
                }
            }
            Op::LogSoftmax(x, dim) => {
                if let Some(gx) = slot!(*x) {
                    let lanes = Lanes::new(node.shape, *dim);
                    let y = &node.value;
                    for l in 0..lanes.count {
                        let total: S = (0..lanes.len).map(|i| g[lanes.idx(l, i)]).sum();
                        for i in 0..lanes.len {
                            let j = lanes.idx(l, i);
                            gx[j] += g[j] - y[j].exp() * total;
                        }
                    }
                }
            }
            Op::L2Normalize(x, dim, eps) => {
                if let Some(gx) = slot!(*x) {
                    let lanes = Lanes::new(node.shape, *dim);
                    let xv = val(*x);
                    for l in 0..lanes.count {
                        let norm = (0..lanes.len).map(|i| xv[lanes.idx(l, i)].powi(2)).sum::<S>().sqrt();
                        let d = norm + *eps;
                        let dot: S = (0..lanes.len)
                            .map(|i| {
                                let j = lanes.idx(l, i);
                                g[j] * xv[j]
                            })
                            .sum();
                        // d/dx (x / (|x| + eps)) = I/d - x xᵀ / (d² |x|)
                        let coef = if norm > S::zero() {
                            dot / (d * d * norm)
                        } else {
                            S::zero()
                        };
                        for i in 0..lanes.len {
                            let j = lanes.idx(l, i);
                            gx[j] += g[j] / d - xv[j] * coef;
                        }
                    }
                }
            }
            Op::Concat(parts, dim) => {
                if *dim == 0 {
                    let mut offset = 0;
                    for &p in parts {
                        let len = nodes[p.0].value.len();
                        if let Some(gp) = slot!(p) {
                            gp.iter_mut().zip(&g[offset..offset + len]).for_each(|(v, &d)| *v += d);
                        }
                        offset += len;
                    }
                } else {
                    let total = node.shape.cols;
                    let mut col = 0;
                    for &p in parts {
                        let c = nodes[p.0].shape.cols;
                        if let Some(gp) = slot!(p) {
                            for r in 0..node.shape.rows {
                                for j in 0..c {
                                    gp[r * c + j] += g[r * total + col + j];
                                }
                            }
                        }
                        col += c;
                    }
                }
            }
            Op::SegmentSum(x, index) => {
                if let Some(gx) = slot!(*x) {
                    let c = node.shape.cols;
                    for (i, &s) in index.iter().enumerate() {
                        for j in 0..c {
                            gx[i * c + j] += g[s * c + j];
                        }
                    }
                }
            }
            Op::GatherRows(x, index) => {
                if let Some(gx) = slot!(*x) {
                    let c = node.shape.cols;
                    for (m, &i) in index.iter().enumerate() {
                        for j in 0..c {
                            gx[i * c + j] += g[m * c + j];
                        }
                    }
                }
            }
            Op::FrobeniusSq(x) => {
                if let Some(gx) = slot!(*x) {
                    let xv = val(*x);
                    let two = S::lit(2.0);
                    for (i, v) in gx.iter_mut().enumerate() {
                        *v += two * xv[i] * g[0];
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = slot!(*x) {
                    gx.iter_mut().for_each(|v| *v += g[0]);
                }
            }
            Op::Mean(x) => {
                if let Some(gx) = slot!(*x) {
                    let d = g[0] / S::lit(gx.len() as f64);
                    gx.iter_mut().for_each(|v| *v += d);
                }
            }
            Op::SumAlong(x, dim) => {
                if let Some(gx) = slot!(*x) {
                    let lanes = Lanes::new(nodes[x.0].shape, *dim);
                    for l in 0..lanes.count {
                        for i in 0..lanes.len {
                            gx[lanes.idx(l, i)] += g[l];
                        }
                    }
                }
            }
            Op::Transpose(x) => {
                if let Some(gx) = slot!(*x) {
                    let sx = nodes[x.0].shape;
                    for i in 0..sx.rows {
                        for j in 0..sx.cols {
                            gx[i * sx.cols + j] += g[j * sx.rows + i];
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = slot!(*x) {
                    gx.iter_mut().zip(g).for_each(|(v, &d)| *v += d);
                }
            }
        }
    }
}

pub(crate) fn sigmoid<S: Scalar>(v: S) -> S {
    if v >= S::zero() {
        S::one() / (S::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (S::one() + e)
    }
}

fn softmax_lanes<S: Scalar>(x: &[S], shape: Shape, dim: usize, log: bool) -> Vec<S> {
    let lanes = Lanes::new(shape, dim);
    let mut out = vec![S::zero(); x.len()];
    for l in 0..lanes.count {
        let max = (0..lanes.len)
            .map(|i| x[lanes.idx(l, i)])
            .fold(S::neg_infinity(), S::max);
        let total: S = (0..lanes.len).map(|i| (x[lanes.idx(l, i)] - max).exp()).sum();
        let log_total = total.ln();
        for i in 0..lanes.len {
            let j = lanes.idx(l, i);
            out[j] = if log {
                x[j] - max - log_total
            } else {
                (x[j] - max).exp() / total
            };
        }
    }
    out
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<S> {
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient buffer for `v`, or `None` when `v` is constant or unreached.
    pub fn get(&self, v: Var) -> Option<&[S]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `v`, zero-filled when `v` did not influence the root.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<S> {
        self.get(v).map_or_else(|| vec![S::zero(); len], <[S]>::to_vec)
    }
}
