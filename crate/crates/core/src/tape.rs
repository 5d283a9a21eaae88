//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Operations append nodes to a [`Tape`]; each node stores its value and
//! enough structure to push gradients back to its inputs. [`Tape::backward`]
//! seeds the (scalar) loss with gradient 1 and sweeps the tape once in
//! reverse, so every node is visited exactly once and parameters that do not
//! feed the loss simply keep a zero gradient.
//!
//! The op set is deliberately small: elementwise arithmetic and activations,
//! matrix products, a bias-row broadcast, reductions, row/column slicing and
//! concatenation, row scatter-adds, a row-wise softmax, and a "valid" 2-D
//! convolution whose spatial grid is stored row-major as a `(h*w) x channels`
//! matrix. That is exactly what the encoder, pooling, and decoder networks
//! need, and nothing more.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fp::FloatExt;
use crate::tensor::{matmul_raw, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(VarId, VarId),
    Sub(VarId, VarId),
    Mul(VarId, VarId),
    Div(VarId, VarId),
    AddBias(VarId, VarId),
    Matmul(VarId, VarId),
    Transpose(VarId),
    Exp(VarId),
    Log(VarId),
    Tanh(VarId),
    Sigmoid(VarId),
    Relu(VarId),
    Softplus(VarId),
    Scale(VarId, f64),
    AddScalar(VarId),
    SoftmaxRows(VarId),
    Sum(VarId),
    Mean(VarId),
    MeanRows(VarId),
    ConcatCols(Vec<VarId>),
    ConcatRows(Vec<VarId>),
    SliceCols { src: VarId, start: usize },
    SliceRows { src: VarId, start: usize },
    Reshape(VarId),
    ScatterRows { src: VarId, pairs: Vec<(usize, usize)> },
    Conv2dValid { input: VarId, kernel: VarId, h: usize, w: usize, kh: usize, kw: usize },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of a scalar loss with respect to every tape node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    /// Gradient with respect to the node `id`; zero if the node does not
    /// influence the loss.
    pub fn wrt(&self, id: VarId) -> &Tensor {
        &self.grads[id.0]
    }
}

/// A define-by-run computation record.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value computed at a node.
    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn shape(&self, id: VarId) -> (usize, usize) {
        let t = &self.nodes[id.0].value;
        (t.rows(), t.cols())
    }

    fn push(&mut self, value: Tensor, op: Op) -> VarId {
        self.nodes.push(Node { value, op });
        VarId(self.nodes.len() - 1)
    }

    /// Record an input tensor (parameter or data); gradients flow into it.
    pub fn leaf(&mut self, value: Tensor) -> VarId {
        self.push(value, Op::Leaf)
    }

    /// Record a 1x1 constant.
    pub fn scalar(&mut self, value: f64) -> VarId {
        self.leaf(Tensor::scalar(value))
    }

    fn same_shape(&self, op: &'static str, a: VarId, b: VarId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            let (ar, ac) = self.shape(a);
            let (br, bc) = self.shape(b);
            return Err(Error::ShapeMismatch {
                op,
                detail: format!("{ar}x{ac} vs {br}x{bc}"),
            });
        }
        Ok(())
    }

    fn zip_new<F: Fn(f64, f64) -> f64>(&self, a: VarId, b: VarId, f: F) -> Tensor {
        let ta = self.value(a);
        let tb = self.value(b);
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.rows(), ta.cols(), data).expect("shapes checked by caller")
    }

    fn map_new<F: Fn(f64) -> f64>(&self, a: VarId, f: F) -> Tensor {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| f(x)).collect();
        Tensor::new(ta.rows(), ta.cols(), data).expect("same shape")
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.same_shape("add", a, b)?;
        let v = self.zip_new(a, b, |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_new(a, b, |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_new(a, b, |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.same_shape("div", a, b)?;
        let v = self.zip_new(a, b, |x, y| x / y);
        Ok(self.push(v, Op::Div(a, b)))
    }

    /// Add a 1xC bias row to every row of an RxC matrix.
    pub fn add_bias(&mut self, a: VarId, bias: VarId) -> Result<VarId> {
        let (_, ac) = self.shape(a);
        let (br, bc) = self.shape(bias);
        if br != 1 || bc != ac {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                detail: format!("matrix has {ac} columns, bias is {br}x{bc}"),
            });
        }
        let ta = self.value(a);
        let tb = self.value(bias);
        let mut out = ta.clone();
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                let v = out.get(r, c) + tb.get(0, c);
                out.set(r, c, v);
            }
        }
        Ok(self.push(out, Op::AddBias(a, bias)))
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                detail: format!("{ar}x{ac} . {br}x{bc}"),
            });
        }
        let v = matmul_raw(self.value(a), self.value(b));
        Ok(self.push(v, Op::Matmul(a, b)))
    }

    /// `matmul(x, w) + bias` in one call; the ubiquitous dense layer.
    pub fn affine(&mut self, x: VarId, w: VarId, bias: VarId) -> Result<VarId> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, bias)
    }

    pub fn transpose(&mut self, a: VarId) -> VarId {
        let v = self.value(a).transposed();
        self.push(v, Op::Transpose(a))
    }

    pub fn exp(&mut self, a: VarId) -> VarId {
        let v = self.map_new(a, FloatExt::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn log(&mut self, a: VarId) -> VarId {
        let v = self.map_new(a, FloatExt::ln);
        self.push(v, Op::Log(a))
    }

    pub fn tanh(&mut self, a: VarId) -> VarId {
        let v = self.map_new(a, FloatExt::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: VarId) -> VarId {
        let v = self.map_new(a, FloatExt::sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: VarId) -> VarId {
        let v = self.map_new(a, |x| if x > 0.0 { x } else { 0.0 });
        self.push(v, Op::Relu(a))
    }

    pub fn softplus(&mut self, a: VarId) -> VarId {
        let v = self.map_new(a, FloatExt::softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn scale(&mut self, a: VarId, k: f64) -> VarId {
        let v = self.map_new(a, |x| k * x);
        self.push(v, Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: VarId, k: f64) -> VarId {
        let v = self.map_new(a, |x| x + k);
        self.push(v, Op::AddScalar(a))
    }

    /// Row-wise softmax (over the last axis).
    pub fn softmax_rows(&mut self, a: VarId) -> VarId {
        let ta = self.value(a);
        let mut out = ta.clone();
        for r in 0..out.rows() {
            let row = &mut out.data_mut()[r * ta.cols()..(r + 1) * ta.cols()];
            let m = row.iter().fold(f64::NEG_INFINITY, |m, &x| if x > m { x } else { m });
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                s += *x;
            }
            for x in row.iter_mut() {
                *x /= s;
            }
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Sum of all entries, as a 1x1 tensor.
    pub fn sum(&mut self, a: VarId) -> VarId {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Mean of all entries, as a 1x1 tensor.
    pub fn mean(&mut self, a: VarId) -> VarId {
        let t = self.value(a);
        let s: f64 = t.data().iter().sum();
        let v = Tensor::scalar(s / t.len() as f64);
        self.push(v, Op::Mean(a))
    }

    /// Column means: RxC reduces to 1xC.
    pub fn mean_rows(&mut self, a: VarId) -> VarId {
        let t = self.value(a);
        let (r, c) = (t.rows(), t.cols());
        let mut out = Tensor::zeros(1, c);
        for i in 0..r {
            for j in 0..c {
                out.data_mut()[j] += t.get(i, j);
            }
        }
        for v in out.data_mut() {
            *v /= r as f64;
        }
        self.push(out, Op::MeanRows(a))
    }

    /// Concatenate along columns; all parts need equal row counts.
    pub fn concat_cols(&mut self, parts: &[VarId]) -> Result<VarId> {
        if parts.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "concat_cols",
                detail: format!("no parts"),
            });
        }
        let rows = self.shape(parts[0]).0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    detail: format!("expected {rows} rows, found {r}"),
                });
            }
            cols += c;
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut at = 0;
        for &p in parts {
            let t = self.value(p);
            let c = t.cols();
            for r in 0..rows {
                let dst = r * cols + at;
                out.data_mut()[dst..dst + c].copy_from_slice(t.row_slice(r));
            }
            at += c;
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Concatenate along rows; all parts need equal column counts.
    pub fn concat_rows(&mut self, parts: &[VarId]) -> Result<VarId> {
        if parts.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "concat_rows",
                detail: format!("no parts"),
            });
        }
        let cols = self.shape(parts[0]).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    detail: format!("expected {cols} columns, found {}", t.cols()),
                });
            }
            data.extend_from_slice(t.data());
            rows += t.rows();
        }
        let out = Tensor::new(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Columns `[start, start + len)` of a matrix.
    pub fn slice_cols(&mut self, src: VarId, start: usize, len: usize) -> Result<VarId> {
        let (rows, cols) = self.shape(src);
        if start + len > cols {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                detail: format!("columns [{start}, {}) out of 0..{cols}", start + len),
            });
        }
        let t = self.value(src);
        let mut out = Tensor::zeros(rows, len);
        for r in 0..rows {
            out.data_mut()[r * len..(r + 1) * len]
                .copy_from_slice(&t.row_slice(r)[start..start + len]);
        }
        Ok(self.push(out, Op::SliceCols { src, start }))
    }

    /// Rows `[start, start + len)` of a matrix.
    pub fn slice_rows(&mut self, src: VarId, start: usize, len: usize) -> Result<VarId> {
        let (rows, cols) = self.shape(src);
        if start + len > rows {
            return Err(Error::ShapeMismatch {
                op: "slice_rows",
                detail: format!("rows [{start}, {}) out of 0..{rows}", start + len),
            });
        }
        let t = self.value(src);
        let data = t.data()[start * cols..(start + len) * cols].to_vec();
        let out = Tensor::new(len, cols, data)?;
        Ok(self.push(out, Op::SliceRows { src, start }))
    }

    /// Reinterpret the data with a new shape of equal element count.
    pub fn reshape(&mut self, src: VarId, rows: usize, cols: usize) -> Result<VarId> {
        let v = self.value(src).reshaped(rows, cols)?;
        Ok(self.push(v, Op::Reshape(src)))
    }

    /// Scatter-add rows of `src` into a fresh `out_rows x C` matrix:
    /// for every `(from, to)` pair, `out[to] += src[from]`. Rows of `src`
    /// absent from the pairs are dropped; destination rows may repeat.
    pub fn scatter_rows(
        &mut self,
        src: VarId,
        pairs: &[(usize, usize)],
        out_rows: usize,
    ) -> Result<VarId> {
        let (rows, cols) = self.shape(src);
        for &(from, to) in pairs {
            if from >= rows || to >= out_rows {
                return Err(Error::ShapeMismatch {
                    op: "scatter_rows",
                    detail: format!(
                        "pair ({from}, {to}) out of range for {rows} source rows, {out_rows} output rows"
                    ),
                });
            }
        }
        let t = self.value(src);
        let mut out = Tensor::zeros(out_rows, cols);
        for &(from, to) in pairs {
            let dst = to * cols;
            let srow = t.row_slice(from);
            for (o, &s) in out.data_mut()[dst..dst + cols].iter_mut().zip(srow) {
                *o += s;
            }
        }
        Ok(self.push(out, Op::ScatterRows { src, pairs: pairs.to_vec() }))
    }

    /// "Valid" 2-D convolution over a spatial grid stored row-major.
    ///
    /// `input` is `(h*w) x c_in` (cell `(i, j)` at row `i*w + j`), `kernel` is
    /// `(kh*kw*c_in) x c_out` with the row index ordered as
    /// `(di*kw + dj)*c_in + channel`. The output is `(oh*ow) x c_out` with
    /// `oh = h-kh+1`, `ow = w-kw+1`.
    pub fn conv2d_valid(
        &mut self,
        input: VarId,
        kernel: VarId,
        h: usize,
        w: usize,
        kh: usize,
        kw: usize,
    ) -> Result<VarId> {
        let (ir, c_in) = self.shape(input);
        let (kr, c_out) = self.shape(kernel);
        if ir != h * w {
            return Err(Error::ShapeMismatch {
                op: "conv2d_valid",
                detail: format!("input has {ir} rows, expected h*w = {}", h * w),
            });
        }
        if kr != kh * kw * c_in {
            return Err(Error::ShapeMismatch {
                op: "conv2d_valid",
                detail: format!("kernel has {kr} rows, expected kh*kw*c_in = {}", kh * kw * c_in),
            });
        }
        if kh > h || kw > w {
            return Err(Error::ShapeMismatch {
                op: "conv2d_valid",
                detail: format!("kernel {kh}x{kw} larger than grid {h}x{w}"),
            });
        }
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let inp = self.value(input).clone();
        let ker = self.value(kernel).clone();
        let mut out = Tensor::zeros(oh * ow, c_out);
        for oi in 0..oh {
            for oj in 0..ow {
                let orow = (oi * ow + oj) * c_out;
                for di in 0..kh {
                    for dj in 0..kw {
                        let irow = (oi + di) * w + (oj + dj);
                        let icell = inp.row_slice(irow);
                        let kbase = (di * kw + dj) * c_in;
                        for (ch, &x) in icell.iter().enumerate() {
                            if x == 0.0 {
                                continue;
                            }
                            let krow = ker.row_slice(kbase + ch);
                            for (o, &k) in
                                out.data_mut()[orow..orow + c_out].iter_mut().zip(krow)
                            {
                                *o += x * k;
                            }
                        }
                    }
                }
            }
        }
        Ok(self.push(out, Op::Conv2dValid { input, kernel, h, w, kh, kw }))
    }

    /// Reverse sweep from a scalar loss; returns gradients for every node.
    pub fn backward(&self, loss: VarId) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::NonScalarLoss { len: lt.len() });
        }
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.rows(), n.value.cols()))
            .collect();
        grads[loss.0].data_mut()[0] = 1.0;

        for idx in (0..self.nodes.len()).rev() {
            if grads[idx].data().iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = grads[idx].clone();
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    axpy(&mut grads[a.0], 1.0, &g);
                    axpy(&mut grads[b.0], 1.0, &g);
                }
                Op::Sub(a, b) => {
                    axpy(&mut grads[a.0], 1.0, &g);
                    axpy(&mut grads[b.0], -1.0, &g);
                }
                Op::Mul(a, b) => {
                    let gb = elementwise(&g, self.value(*b), |x, y| x * y);
                    let ga = elementwise(&g, self.value(*a), |x, y| x * y);
                    axpy(&mut grads[a.0], 1.0, &gb);
                    axpy(&mut grads[b.0], 1.0, &ga);
                }
                Op::Div(a, b) => {
                    let tb = self.value(*b);
                    let ta = self.value(*a);
                    let ga = elementwise(&g, tb, |x, y| x / y);
                    let mut gb = Tensor::zeros(g.rows(), g.cols());
                    for i in 0..g.len() {
                        let y = tb.data()[i];
                        gb.data_mut()[i] = -g.data()[i] * ta.data()[i] / (y * y);
                    }
                    axpy(&mut grads[a.0], 1.0, &ga);
                    axpy(&mut grads[b.0], 1.0, &gb);
                }
                Op::AddBias(a, bias) => {
                    axpy(&mut grads[a.0], 1.0, &g);
                    let cols = g.cols();
                    for r in 0..g.rows() {
                        for c in 0..cols {
                            grads[bias.0].data_mut()[c] += g.get(r, c);
                        }
                    }
                }
                Op::Matmul(a, b) => {
                    let ga = matmul_raw(&g, &self.value(*b).transposed());
                    let gb = matmul_raw(&self.value(*a).transposed(), &g);
                    axpy(&mut grads[a.0], 1.0, &ga);
                    axpy(&mut grads[b.0], 1.0, &gb);
                }
                Op::Transpose(a) => {
                    let gt = g.transposed();
                    axpy(&mut grads[a.0], 1.0, &gt);
                }
                Op::Exp(a) => {
                    let ga = elementwise(&g, &self.nodes[idx].value, |x, y| x * y);
                    axpy(&mut grads[a.0], 1.0, &ga);
                }
                Op::Log(a) => {
                    let ga = elementwise(&g, self.value(*a), |x, y| x / y);
                    axpy(&mut grads[a.0], 1.0, &ga);
                }
                Op::Tanh(a) => {
                    let ga = elementwise(&g, &self.nodes[idx].value, |x, y| x * (1.0 - y * y));
                    axpy(&mut grads[a.0], 1.0, &ga);
                }
                Op::Sigmoid(a) => {
                    let ga = elementwise(&g, &self.nodes[idx].value, |x, y| x * y * (1.0 - y));
                    axpy(&mut grads[a.0], 1.0, &ga);
                }
                Op::Relu(a) => {
                    let ga = elementwise(&g, self.value(*a), |x, y| if y > 0.0 { x } else { 0.0 });
                    axpy(&mut grads[a.0], 1.0, &ga);
                }
                Op::Softplus(a) => {
                    let ga = elementwise(&g, self.value(*a), |x, y| x * y.sigmoid());
                    axpy(&mut grads[a.0], 1.0, &ga);
                }
                Op::Scale(a, k) => {
                    axpy(&mut grads[a.0], *k, &g);
                }
                Op::AddScalar(a) => {
                    axpy(&mut grads[a.0], 1.0, &g);
                }
                Op::SoftmaxRows(a) => {
                    // dx = (g - <g, y>_row) * y with y the softmax output.
                    let y = &self.nodes[idx].value;
                    let mut ga = Tensor::zeros(g.rows(), g.cols());
                    let cols = g.cols();
                    for r in 0..g.rows() {
                        let dot: f64 = (0..cols).map(|c| g.get(r, c) * y.get(r, c)).sum();
                        for c in 0..cols {
                            ga.set(r, c, (g.get(r, c) - dot) * y.get(r, c));
                        }
                    }
                    axpy(&mut grads[a.0], 1.0, &ga);
                }
                Op::Sum(a) => {
                    let gv = g.data()[0];
                    for x in grads[a.0].data_mut() {
                        *x += gv;
                    }
                }
                Op::Mean(a) => {
                    let gv = g.data()[0] / self.value(*a).len() as f64;
                    for x in grads[a.0].data_mut() {
                        *x += gv;
                    }
                }
                Op::MeanRows(a) => {
                    let (rows, cols) = self.shape(*a);
                    let inv = 1.0 / rows as f64;
                    for r in 0..rows {
                        for c in 0..cols {
                            grads[a.0].data_mut()[r * cols + c] += g.get(0, c) * inv;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let c = self.shape(p).1;
                        for r in 0..g.rows() {
                            for j in 0..c {
                                grads[p.0].data_mut()[r * c + j] += g.get(r, at + j);
                            }
                        }
                        at += c;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let (r, c) = self.shape(p);
                        for i in 0..r {
                            for j in 0..c {
                                grads[p.0].data_mut()[i * c + j] += g.get(at + i, j);
                            }
                        }
                        at += r;
                    }
                }
                Op::SliceCols { src, start } => {
                    let cols = self.shape(*src).1;
                    let len = g.cols();
                    for r in 0..g.rows() {
                        for j in 0..len {
                            grads[src.0].data_mut()[r * cols + start + j] += g.get(r, j);
                        }
                    }
                }
                Op::SliceRows { src, start } => {
                    let cols = g.cols();
                    for i in 0..g.rows() {
                        for j in 0..cols {
                            grads[src.0].data_mut()[(start + i) * cols + j] += g.get(i, j);
                        }
                    }
                }
                Op::Reshape(src) => {
                    for (d, &s) in grads[src.0].data_mut().iter_mut().zip(g.data()) {
                        *d += s;
                    }
                }
                Op::ScatterRows { src, pairs } => {
                    let cols = g.cols();
                    for &(from, to) in pairs {
                        for j in 0..cols {
                            grads[src.0].data_mut()[from * cols + j] += g.get(to, j);
                        }
                    }
                }
                Op::Conv2dValid { input, kernel, h, w, kh, kw } => {
                    let c_in = self.shape(*input).1;
                    let c_out = g.cols();
                    let (oh, ow) = (h - kh + 1, w - kw + 1);
                    let inp = self.value(*input).clone();
                    let ker = self.value(*kernel).clone();
                    for oi in 0..oh {
                        for oj in 0..ow {
                            let go = (oi * ow + oj) * c_out;
                            for di in 0..*kh {
                                for dj in 0..*kw {
                                    let irow = (oi + di) * w + (oj + dj);
                                    let kbase = (di * kw + dj) * c_in;
                                    for ch in 0..c_in {
                                        let x = inp.get(irow, ch);
                                        let krow = ker.row_slice(kbase + ch);
                                        let mut gx = 0.0;
                                        for oc in 0..c_out {
                                            let gv = g.data()[go + oc];
                                            gx += gv * krow[oc];
                                            grads[kernel.0].data_mut()
                                                [(kbase + ch) * c_out + oc] += gv * x;
                                        }
                                        grads[input.0].data_mut()[irow * c_in + ch] += gx;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// `dst += k * src`, shapes equal by construction.
fn axpy(dst: &mut Tensor, k: f64, src: &Tensor) {
    for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += k * s;
    }
}

fn elementwise<F: Fn(f64, f64) -> f64>(a: &Tensor, b: &Tensor, f: F) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("same shape")
}

/// Compare the tape gradient of `f` at `at` against central differences.
///
/// `f` receives a fresh tape and the leaf holding the parameter and must
/// return the scalar loss node. The result is the worst relative error
/// `|analytic - numeric| / max(1, |analytic|, |numeric|)` over all
/// coordinates, with step size `h` for the differences.
pub fn grad_check<F>(mut f: F, at: &Tensor, h: f64) -> Result<f64>
where
    F: FnMut(&mut Tape, VarId) -> Result<VarId>,
{
    let mut tape = Tape::new();
    let x = tape.leaf(at.clone());
    let loss = f(&mut tape, x)?;
    let analytic = tape.backward(loss)?;
    let analytic = analytic.wrt(x).clone();

    let eval = |f: &mut F, t: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.leaf(t.clone());
        let loss = f(&mut tape, x)?;
        tape.value(loss).item()
    };

    let mut worst: f64 = 0.0;
    for i in 0..at.len() {
        let mut plus = at.clone();
        plus.data_mut()[i] += h;
        let mut minus = at.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(&mut f, &plus)? - eval(&mut f, &minus)?) / (2.0 * h);
        let a = analytic.data()[i];
        let denom = 1.0_f64.max(a.abs()).max(numeric.abs());
        let rel = (a - numeric).abs() / denom;
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::rng::{seeded, RngExt};

    #[test]
    fn forward_values_match_hand_computation() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::new(1, 2, vec![1.0, -2.0]).unwrap());
        let b = t.leaf(Tensor::new(1, 2, vec![3.0, 4.0]).unwrap());
        let s = t.add(a, b).unwrap();
        assert_eq!(t.value(s).data(), &[4.0, 2.0]);
        let m = t.mul(s, b).unwrap();
        assert_eq!(t.value(m).data(), &[12.0, 8.0]);
        let total = t.sum(m);
        assert_eq!(t.value(total).item().unwrap(), 20.0);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::zeros(2, 2));
        let err = t.backward(a).unwrap_err();
        assert!(matches!(err, Error::NonScalarLoss { len: 4 }));
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::scalar(3.0));
        let unused = t.leaf(Tensor::new(2, 2, vec![1.0; 4]).unwrap());
        let loss = t.mul(a, a).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(unused).data(), &[0.0; 4]);
        assert!((g.wrt(a).data()[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn fan_out_gradients_accumulate() {
        // loss = x*x + x => d/dx = 2x + 1.
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(1.5));
        let sq = t.mul(x, x).unwrap();
        let loss = t.add(sq, x).unwrap();
        let g = t.backward(loss).unwrap();
        assert!((g.wrt(x).data()[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn matmul_shape_error_names_op() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::zeros(2, 3));
        let b = t.leaf(Tensor::zeros(2, 3));
        match t.matmul(a, b) {
            Err(Error::ShapeMismatch { op: "matmul", .. }) => {}
            other => panic!("expected matmul shape error, got {other:?}"),
        }
    }

    fn rand_tensor(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = seeded(seed);
        // Offset away from zero so relu/log-style kinks and poles are avoided.
        let data = (0..rows * cols)
            .map(|_| {
                let x = rng.uniform_in(0.2, 1.5);
                if rng.uniform() < 0.5 {
                    x
                } else {
                    -x
                }
            })
            .collect();
        Tensor::new(rows, cols, data).unwrap()
    }

    fn positive_tensor(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = seeded(seed);
        let data = (0..rows * cols).map(|_| rng.uniform_in(0.3, 2.0)).collect();
        Tensor::new(rows, cols, data).unwrap()
    }

    #[test]
    fn grad_check_elementwise_chain() {
        // tanh, sigmoid, softplus, exp, mul, sub chained into one scalar.
        let at = rand_tensor(3, 4, 1);
        let err = grad_check(
            |t, x| {
                let th = t.tanh(x);
                let sg = t.sigmoid(x);
                let sp = t.softplus(x);
                let e = t.exp(th);
                let m = t.mul(e, sg)?;
                let d = t.sub(m, sp)?;
                Ok(t.sum(d))
            },
            &at,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "relative error {err}");
    }

    #[test]
    fn grad_check_log_div() {
        let at = positive_tensor(2, 3, 2);
        let err = grad_check(
            |t, x| {
                let l = t.log(x);
                let c = t.leaf(positive_tensor(2, 3, 99));
                let d = t.div(l, c)?;
                let q = t.div(c, x)?;
                let s = t.add(d, q)?;
                Ok(t.sum(s))
            },
            &at,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-7, "relative error {err}");
    }

    #[test]
    fn grad_check_matmul_affine() {
        let at = rand_tensor(4, 3, 3);
        let err = grad_check(
            |t, x| {
                let w = t.leaf(rand_tensor(3, 5, 31));
                let b = t.leaf(rand_tensor(1, 5, 32));
                let y = t.affine(x, w, b)?;
                let z = t.tanh(y);
                Ok(t.mean(z))
            },
            &at,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "relative error {err}");
    }

    #[test]
    fn grad_check_matmul_wrt_weight() {
        let at = rand_tensor(3, 5, 4);
        let err = grad_check(
            |t, w| {
                let x = t.leaf(rand_tensor(4, 3, 41));
                let y = t.matmul(x, w)?;
                let yt = t.transpose(y);
                let sq = t.mul(yt, yt)?;
                Ok(t.sum(sq))
            },
            &at,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "relative error {err}");
    }

    #[test]
    fn grad_check_softmax_reductions() {
        let at = rand_tensor(3, 4, 5);
        let err = grad_check(
            |t, x| {
                let s = t.softmax_rows(x);
                let l = t.log(s);
                let m = t.mean_rows(l);
                let weights = t.leaf(rand_tensor(1, 4, 51));
                let w = t.mul(m, weights)?;
                Ok(t.sum(w))
            },
            &at,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn grad_check_concat_slice_reshape() {
        let at = rand_tensor(2, 6, 6);
        let err = grad_check(
            |t, x| {
                let left = t.slice_cols(x, 0, 2)?;
                let right = t.slice_cols(x, 2, 4)?;
                let sq = t.mul(left, left)?;
                let top = t.slice_rows(right, 0, 1)?;
                let bottom = t.slice_rows(right, 1, 1)?;
                let joined = t.concat_rows(&[bottom, top])?;
                let flat = t.reshape(joined, 1, 8)?;
                let wide = t.concat_cols(&[flat])?;
                let s1 = t.sum(sq);
                let s2 = t.sum(wide);
                let total = t.add(s1, s2)?;
                Ok(total)
            },
            &at,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "relative error {err}");
    }

    #[test]
    fn grad_check_add_bias() {
        let at = rand_tensor(1, 4, 7);
        let err = grad_check(
            |t, bias| {
                let x = t.leaf(rand_tensor(5, 4, 71));
                let y = t.add_bias(x, bias)?;
                let z = t.sigmoid(y);
                Ok(t.sum(z))
            },
            &at,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "relative error {err}");
    }

    #[test]
    fn grad_check_scatter_rows() {
        let at = rand_tensor(4, 3, 8);
        let pairs = [(0, 2), (1, 2), (3, 0), (0, 1)];
        let err = grad_check(
            |t, x| {
                let s = t.scatter_rows(x, &pairs, 3)?;
                let sq = t.mul(s, s)?;
                Ok(t.sum(sq))
            },
            &at,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "relative error {err}");
    }

    #[test]
    fn grad_check_conv2d_wrt_input() {
        // 5x4 grid, 2 input channels, 3x3 kernel, 3 output channels.
        let at = rand_tensor(20, 2, 9);
        let err = grad_check(
            |t, x| {
                let k = t.leaf(rand_tensor(18, 3, 91));
                let y = t.conv2d_valid(x, k, 5, 4, 3, 3)?;
                let z = t.relu(y);
                Ok(t.sum(z))
            },
            &at,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn grad_check_conv2d_wrt_kernel() {
        let at = rand_tensor(18, 3, 10);
        let err = grad_check(
            |t, k| {
                let x = t.leaf(rand_tensor(20, 2, 101));
                let y = t.conv2d_valid(x, k, 5, 4, 3, 3)?;
                let sq = t.mul(y, y)?;
                Ok(t.mean(sq))
            },
            &at,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn grad_check_scale_add_scalar_division() {
        let at = positive_tensor(3, 3, 11);
        let err = grad_check(
            |t, x| {
                let a = t.scale(x, -2.5);
                let b = t.add_scalar(a, 7.0);
                let c = t.div(x, b)?;
                Ok(t.mean(c))
            },
            &at,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-7, "relative error {err}");
    }

    #[test]
    fn conv_output_matches_direct_im2col() {
        // Cross-check the convolution against an explicit im2col matmul.
        let mut rng = seeded(12);
        let (h, w, c_in, kh, kw, c_out) = (6, 5, 3, 3, 2, 4);
        let input = Tensor::randn(h * w, c_in, 1.0, &mut rng);
        let kernel = Tensor::randn(kh * kw * c_in, c_out, 1.0, &mut rng);
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let mut col = Tensor::zeros(oh * ow, kh * kw * c_in);
        for oi in 0..oh {
            for oj in 0..ow {
                for di in 0..kh {
                    for dj in 0..kw {
                        for ch in 0..c_in {
                            col.set(
                                oi * ow + oj,
                                (di * kw + dj) * c_in + ch,
                                input.get((oi + di) * w + (oj + dj), ch),
                            );
                        }
                    }
                }
            }
        }
        let expected = col.matmul(&kernel).unwrap();
        let mut t = Tape::new();
        let x = t.leaf(input);
        let k = t.leaf(kernel);
        let y = t.conv2d_valid(x, k, h, w, kh, kw).unwrap();
        let got = t.value(y);
        assert_eq!((got.rows(), got.cols()), (oh * ow, c_out));
        for (a, b) in got.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lstm_style_step_grad_checks() {
        // One gated recurrent step wired exactly like the networks use it.
        let at = rand_tensor(2, 8, 13); // wh for hidden size 2 with 4 gates
        let err = grad_check(
            |t, wh| {
                let x = t.leaf(rand_tensor(3, 2, 131));
                let wx = t.leaf(rand_tensor(2, 8, 132));
                let b = t.leaf(rand_tensor(1, 8, 133));
                let h0 = t.leaf(rand_tensor(3, 2, 134));
                let c0 = t.leaf(rand_tensor(3, 2, 135));
                let xw = t.matmul(x, wx)?;
                let hw = t.matmul(h0, wh)?;
                let z = t.add(xw, hw)?;
                let z = t.add_bias(z, b)?;
                let i = t.slice_cols(z, 0, 2)?;
                let f = t.slice_cols(z, 2, 2)?;
                let gg = t.slice_cols(z, 4, 2)?;
                let o = t.slice_cols(z, 6, 2)?;
                let i = t.sigmoid(i);
                let f = t.sigmoid(f);
                let gg = t.tanh(gg);
                let o = t.sigmoid(o);
                let fc = t.mul(f, c0)?;
                let ig = t.mul(i, gg)?;
                let c1 = t.add(fc, ig)?;
                let tc = t.tanh(c1);
                let h1 = t.mul(o, tc)?;
                let sq = t.mul(h1, h1)?;
                Ok(t.sum(sq))
            },
            &at,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "relative error {err}");
    }
}
