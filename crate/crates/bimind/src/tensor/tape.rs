//! Operation tape for reverse-mode differentiation.
//!
//! Each forward op appends a node holding the output value and the saved
//! state its backward rule needs. Inputs are always recorded before the ops
//! that consume them, so a single reverse sweep visits every node once.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul {
        a: TensorId,
        b: TensorId,
    },
    Transpose {
        x: TensorId,
    },
    Add {
        a: TensorId,
        b: TensorId,
    },
    Sub {
        a: TensorId,
        b: TensorId,
    },
    Mul {
        a: TensorId,
        b: TensorId,
    },
    /// row[j] added to every row of x.
    AddRow {
        x: TensorId,
        row: TensorId,
    },
    /// col[i] added to every entry of row i of x.
    AddCol {
        x: TensorId,
        col: TensorId,
    },
    Affine {
        x: TensorId,
        mul: f64,
    },
    /// Broadcast multiply by a single-element tensor.
    MulScalarT {
        x: TensorId,
        s: TensorId,
    },
    Recip {
        x: TensorId,
    },
    Softplus {
        x: TensorId,
    },
    Tanh {
        x: TensorId,
    },
    Sigmoid {
        x: TensorId,
    },
    Relu {
        x: TensorId,
    },
    Abs {
        x: TensorId,
    },
    /// ln(max(x, floor)); zero gradient where the clamp is active.
    LogClamped {
        x: TensorId,
        floor: f64,
    },
    SoftmaxRows {
        x: TensorId,
        mask: Option<Vec<bool>>,
    },
    LogSumExp {
        x: TensorId,
    },
    MaskedMaxCols {
        x: TensorId,
        argmax: Vec<usize>,
    },
    MeanAxis {
        x: TensorId,
        axis: usize,
    },
    SumAll {
        x: TensorId,
    },
    MeanAll {
        x: TensorId,
    },
    ConcatLast {
        parts: Vec<TensorId>,
    },
    SliceLast {
        x: TensorId,
        start: usize,
    },
    Reshape {
        x: TensorId,
    },
    GatherRows {
        table: TensorId,
        ids: Vec<usize>,
    },
    Dropout {
        x: TensorId,
        keep: Vec<bool>,
        scale: f64,
    },
    LayerNormRows {
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        /// Normalized input, saved for the backward pass.
        xhat: Vec<f64>,
        /// Per-row √(variance + eps).
        sigma: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    data: Vec<f64>,
    shape: Vec<usize>,
    grad: Option<Vec<f64>>,
    needs_grad: bool,
    op: Op,
}

/// Recording tape. One tape per forward pass; confined to a single worker.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    param_nodes: Vec<(ParamId, TensorId)>,
    check_finite: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    /// Finite checks follow debug assertions by default, so tests get them
    /// and release-mode training does not pay for the scan.
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            param_nodes: Vec::new(),
            check_finite: cfg!(debug_assertions),
        }
    }

    pub fn set_check_finite(&mut self, on: bool) {
        self.check_finite = on;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn data(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn scalar_value(&self, id: TensorId) -> f64 {
        self.nodes[id.0].data[0]
    }

    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn to_tensor(&self, id: TensorId) -> Tensor {
        Tensor {
            shape: self.shape(id).to_vec(),
            data: self.data(id).to_vec(),
            grad: None,
        }
    }

    // ── node plumbing ───────────────────────────────────────────────

    fn push(&mut self, data: Vec<f64>, shape: Vec<usize>, needs_grad: bool, op: Op) -> TensorId {
        self.nodes.push(Node {
            data,
            shape,
            grad: None,
            needs_grad,
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    fn push_checked(
        &mut self,
        name: &'static str,
        data: Vec<f64>,
        shape: Vec<usize>,
        needs_grad: bool,
        op: Op,
    ) -> Result<TensorId> {
        if self.check_finite && data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: name });
        }
        Ok(self.push(data, shape, needs_grad, op))
    }

    fn needs(&self, id: TensorId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Record an input value that does not receive gradients.
    pub fn constant(&mut self, t: &Tensor) -> TensorId {
        self.push(t.data.clone(), t.shape.clone(), false, Op::Leaf)
    }

    pub fn constant_vec(&mut self, data: Vec<f64>) -> TensorId {
        let shape = vec![data.len()];
        self.push(data, shape, false, Op::Leaf)
    }

    pub fn constant_scalar(&mut self, v: f64) -> TensorId {
        self.push(vec![v], vec![1], false, Op::Leaf)
    }

    /// Record an input value that accumulates a gradient.
    pub fn leaf(&mut self, t: &Tensor) -> TensorId {
        self.push(t.data.clone(), t.shape.clone(), true, Op::Leaf)
    }

    /// Record a parameter from the store, remembering the association so
    /// [`Tape::param_grads`] can hand gradients back per parameter.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> TensorId {
        let node = self.leaf(store.get(id));
        self.param_nodes.push((id, node));
        node
    }

    // ── forward ops ─────────────────────────────────────────────────

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        let (da, db) = (self.data(a), self.data(b));
        for i in 0..m {
            for p in 0..k {
                let av = da[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let brow = &db[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += av * brow[j];
                }
            }
        }
        let needs = self.needs(a) || self.needs(b);
        self.push_checked("matmul", out, vec![m, n], needs, Op::MatMul { a, b })
    }

    pub fn transpose(&mut self, x: TensorId) -> Result<TensorId> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "transpose",
                lhs: s,
                rhs: vec![],
            });
        }
        let (m, n) = (s[0], s[1]);
        let d = self.data(x);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = d[i * n + j];
            }
        }
        let needs = self.needs(x);
        self.push_checked("transpose", out, vec![n, m], needs, Op::Transpose { x })
    }

    fn binary_same_shape(
        &mut self,
        name: &'static str,
        a: TensorId,
        b: TensorId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op: name,
                lhs: sa,
                rhs: sb,
            });
        }
        let out: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let needs = self.needs(a) || self.needs(b);
        self.push_checked(name, out, sa, needs, op)
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    /// Add a length-n vector to every row of an m×n matrix.
    pub fn add_row(&mut self, x: TensorId, row: TensorId) -> Result<TensorId> {
        let (sx, sr) = (self.shape(x).to_vec(), self.shape(row).to_vec());
        if sx.len() != 2 || sr != vec![sx[1]] {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                lhs: sx,
                rhs: sr,
            });
        }
        let (m, n) = (sx[0], sx[1]);
        let (dx, dr) = (self.data(x), self.data(row));
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(dx[i * n + j] + dr[j]);
            }
        }
        let needs = self.needs(x) || self.needs(row);
        self.push_checked("add_row", out, sx, needs, Op::AddRow { x, row })
    }

    /// Add col[i] to every entry of row i of an m×n matrix.
    pub fn add_col(&mut self, x: TensorId, col: TensorId) -> Result<TensorId> {
        let (sx, sc) = (self.shape(x).to_vec(), self.shape(col).to_vec());
        if sx.len() != 2 || sc != vec![sx[0]] {
            return Err(Error::ShapeMismatch {
                op: "add_col",
                lhs: sx,
                rhs: sc,
            });
        }
        let (m, n) = (sx[0], sx[1]);
        let (dx, dc) = (self.data(x), self.data(col));
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(dx[i * n + j] + dc[i]);
            }
        }
        let needs = self.needs(x) || self.needs(col);
        self.push_checked("add_col", out, sx, needs, Op::AddCol { x, col })
    }

    /// Elementwise `mul * x + add` with constant coefficients.
    pub fn affine(&mut self, x: TensorId, mul: f64, add: f64) -> Result<TensorId> {
        let shape = self.shape(x).to_vec();
        let out: Vec<f64> = self.data(x).iter().map(|&v| mul * v + add).collect();
        let needs = self.needs(x);
        self.push_checked("affine", out, shape, needs, Op::Affine { x, mul })
    }

    /// Multiply every entry of x by a single-element tensor s.
    pub fn mul_scalar_t(&mut self, x: TensorId, s: TensorId) -> Result<TensorId> {
        let ss = self.shape(s).to_vec();
        if self.data(s).len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "mul_scalar_t",
                lhs: self.shape(x).to_vec(),
                rhs: ss,
            });
        }
        let shape = self.shape(x).to_vec();
        let sv = self.data(s)[0];
        let out: Vec<f64> = self.data(x).iter().map(|&v| v * sv).collect();
        let needs = self.needs(x) || self.needs(s);
        self.push_checked("mul_scalar_t", out, shape, needs, Op::MulScalarT { x, s })
    }

    fn unary(
        &mut self,
        name: &'static str,
        x: TensorId,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<TensorId> {
        let shape = self.shape(x).to_vec();
        let out: Vec<f64> = self.data(x).iter().map(|&v| f(v)).collect();
        let needs = self.needs(x);
        self.push_checked(name, out, shape, needs, op)
    }

    pub fn recip(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary("recip", x, |v| 1.0 / v, Op::Recip { x })
    }

    pub fn softplus(&mut self, x: TensorId) -> Result<TensorId> {
        // ln(1 + e^x), computed from the stable side.
        self.unary(
            "softplus",
            x,
            |v| {
                if v > 0.0 {
                    v + (-v).exp().ln_1p()
                } else {
                    v.exp().ln_1p()
                }
            },
            Op::Softplus { x },
        )
    }

    pub fn tanh(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary("tanh", x, f64::tanh, Op::Tanh { x })
    }

    pub fn sigmoid(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary("sigmoid", x, sigmoid, Op::Sigmoid { x })
    }

    pub fn relu(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary("relu", x, |v| v.max(0.0), Op::Relu { x })
    }

    pub fn abs(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary("abs", x, f64::abs, Op::Abs { x })
    }

    /// ln(max(x, floor)). The clamp keeps logs of probabilities finite.
    pub fn log_clamped(&mut self, x: TensorId, floor: f64) -> Result<TensorId> {
        self.unary(
            "log_clamped",
            x,
            |v| v.max(floor).ln(),
            Op::LogClamped { x, floor },
        )
    }

    /// Row-wise softmax with an optional key mask shared by all rows.
    ///
    /// Masked entries come out exactly 0; each unmasked row sums to 1.
    /// Computed with max subtraction. A row with no unmasked entry is an
    /// error. A 1-d input is treated as a single row.
    pub fn softmax_rows(&mut self, x: TensorId, mask: Option<&[bool]>) -> Result<TensorId> {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().expect("softmax over empty shape");
        let rows = self.data(x).len() / n;
        if let Some(m) = mask {
            if m.len() != n {
                return Err(Error::ShapeMismatch {
                    op: "softmax_rows",
                    lhs: shape,
                    rhs: vec![m.len()],
                });
            }
            if !m.iter().any(|&b| b) {
                return Err(Error::DegenerateRow { row: 0 });
            }
        }
        let d = self.data(x);
        let mut out = vec![0.0; d.len()];
        for r in 0..rows {
            let row = &d[r * n..(r + 1) * n];
            let mut mx = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if mask.is_none_or(|m| m[j]) {
                    mx = mx.max(v);
                }
            }
            if mx == f64::NEG_INFINITY {
                return Err(Error::DegenerateRow { row: r });
            }
            let mut sum = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if mask.is_none_or(|m| m[j]) {
                    let e = (v - mx).exp();
                    out[r * n + j] = e;
                    sum += e;
                }
            }
            for j in 0..n {
                out[r * n + j] /= sum;
            }
        }
        let needs = self.needs(x);
        self.push_checked(
            "softmax_rows",
            out,
            shape,
            needs,
            Op::SoftmaxRows {
                x,
                mask: mask.map(<[bool]>::to_vec),
            },
        )
    }

    /// log Σ exp over a 1-d vector, max-stabilized. Scalar output.
    pub fn logsumexp(&mut self, x: TensorId) -> Result<TensorId> {
        let s = self.shape(x).to_vec();
        if s.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "logsumexp",
                lhs: s,
                rhs: vec![],
            });
        }
        let d = self.data(x);
        let mx = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = d.iter().map(|&v| (v - mx).exp()).sum();
        let out = vec![mx + sum.ln()];
        let needs = self.needs(x);
        self.push_checked("logsumexp", out, vec![1], needs, Op::LogSumExp { x })
    }

    /// Columnwise max over unmasked rows of an L×d matrix; ties go to the
    /// lowest row index and backward routes gradient only there.
    pub fn masked_max_cols(&mut self, x: TensorId, mask: &[bool]) -> Result<TensorId> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || mask.len() != s[0] {
            return Err(Error::ShapeMismatch {
                op: "masked_max_cols",
                lhs: s,
                rhs: vec![mask.len()],
            });
        }
        if !mask.iter().any(|&b| b) {
            return Err(Error::AllMasked);
        }
        let (rows, cols) = (s[0], s[1]);
        let d = self.data(x);
        let mut out = vec![f64::NEG_INFINITY; cols];
        let mut argmax = vec![0usize; cols];
        for j in 0..cols {
            for (i, &keep) in mask.iter().enumerate().take(rows) {
                if !keep {
                    continue;
                }
                let v = d[i * cols + j];
                if v > out[j] {
                    out[j] = v;
                    argmax[j] = i;
                }
            }
        }
        let needs = self.needs(x);
        self.push_checked(
            "masked_max_cols",
            out,
            vec![cols],
            needs,
            Op::MaskedMaxCols { x, argmax },
        )
    }

    /// Mean over one axis of a 2-d tensor (axis 0: column means; axis 1: row means).
    pub fn mean_axis(&mut self, x: TensorId, axis: usize) -> Result<TensorId> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || axis > 1 {
            return Err(Error::ShapeMismatch {
                op: "mean_axis",
                lhs: s,
                rhs: vec![axis],
            });
        }
        let (m, n) = (s[0], s[1]);
        let d = self.data(x);
        let out = if axis == 0 {
            let mut acc = vec![0.0; n];
            for i in 0..m {
                for j in 0..n {
                    acc[j] += d[i * n + j];
                }
            }
            acc.iter_mut().for_each(|v| *v /= m as f64);
            acc
        } else {
            let mut acc = vec![0.0; m];
            for i in 0..m {
                for j in 0..n {
                    acc[i] += d[i * n + j];
                }
            }
            acc.iter_mut().for_each(|v| *v /= n as f64);
            acc
        };
        let len = out.len();
        let needs = self.needs(x);
        self.push_checked("mean_axis", out, vec![len], needs, Op::MeanAxis { x, axis })
    }

    pub fn sum_all(&mut self, x: TensorId) -> Result<TensorId> {
        let total: f64 = self.data(x).iter().sum();
        let needs = self.needs(x);
        self.push_checked("sum_all", vec![total], vec![1], needs, Op::SumAll { x })
    }

    pub fn mean_all(&mut self, x: TensorId) -> Result<TensorId> {
        let n = self.data(x).len() as f64;
        let total: f64 = self.data(x).iter().sum();
        let needs = self.needs(x);
        self.push_checked("mean_all", vec![total / n], vec![1], needs, Op::MeanAll { x })
    }

    /// Concatenate along the last axis. All parts must share leading dims.
    pub fn concat_last(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let lead = self.shape(parts[0])[..self.shape(parts[0]).len() - 1].to_vec();
        let rows: usize = lead.iter().product::<usize>().max(1);
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s[..s.len() - 1] != lead[..] {
                return Err(Error::ShapeMismatch {
                    op: "concat_last",
                    lhs: self.shape(parts[0]).to_vec(),
                    rhs: s.to_vec(),
                });
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (idx, &p) in parts.iter().enumerate() {
                let w = widths[idx];
                let d = self.data(p);
                out.extend_from_slice(&d[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push_checked(
            "concat_last",
            out,
            shape,
            needs,
            Op::ConcatLast {
                parts: parts.to_vec(),
            },
        )
    }

    /// Slice `[start, start+len)` of the last axis.
    pub fn slice_last(&mut self, x: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let s = self.shape(x).to_vec();
        let width = *s.last().unwrap();
        if start + len > width || len == 0 {
            return Err(Error::ShapeMismatch {
                op: "slice_last",
                lhs: s,
                rhs: vec![start, len],
            });
        }
        let rows: usize = s[..s.len() - 1].iter().product::<usize>().max(1);
        let d = self.data(x);
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&d[r * width + start..r * width + start + len]);
        }
        let mut shape = s[..s.len() - 1].to_vec();
        shape.push(len);
        let needs = self.needs(x);
        self.push_checked("slice_last", out, shape, needs, Op::SliceLast { x, start })
    }

    pub fn reshape(&mut self, x: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        let numel: usize = shape.iter().product();
        if numel != self.data(x).len() {
            return Err(Error::BadShape {
                shape,
                len: self.data(x).len(),
            });
        }
        let out = self.data(x).to_vec();
        let needs = self.needs(x);
        self.push_checked("reshape", out, shape, needs, Op::Reshape { x })
    }

    /// Gather rows of a V×d table by id; backward scatters into those rows.
    pub fn gather_rows(&mut self, table: TensorId, ids: &[usize]) -> Result<TensorId> {
        let s = self.shape(table).to_vec();
        if s.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "gather_rows",
                lhs: s,
                rhs: vec![],
            });
        }
        let (v, d) = (s[0], s[1]);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::TokenIdOutOfRange { id, vocab: v });
            }
            out.extend_from_slice(&self.data(table)[id * d..(id + 1) * d]);
        }
        let needs = self.needs(table);
        self.push_checked(
            "gather_rows",
            out,
            vec![ids.len(), d],
            needs,
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    /// Inverted dropout: kept entries are scaled by 1/(1-rate). Evaluation
    /// mode simply never calls this.
    pub fn dropout<R: Rng>(&mut self, x: TensorId, rate: f64, rng: &mut R) -> Result<TensorId> {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0,1)");
        if rate == 0.0 {
            return Ok(x);
        }
        let shape = self.shape(x).to_vec();
        let scale = 1.0 / (1.0 - rate);
        let keep: Vec<bool> = (0..self.data(x).len())
            .map(|_| rng.gen::<f64>() >= rate)
            .collect();
        let out: Vec<f64> = self
            .data(x)
            .iter()
            .zip(&keep)
            .map(|(&v, &k)| if k { v * scale } else { 0.0 })
            .collect();
        let needs = self.needs(x);
        self.push_checked("dropout", out, shape, needs, Op::Dropout { x, keep, scale })
    }

    /// Row-wise layer normalization of an m×n matrix with learnable scale
    /// and shift (each length n): `gamma ⊙ (x - mean) / √(var + eps) + beta`.
    pub fn layer_norm_rows(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        eps: f64,
    ) -> Result<TensorId> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "layer_norm_rows",
                lhs: s,
                rhs: vec![],
            });
        }
        let (m, n) = (s[0], s[1]);
        if self.shape(gamma) != [n] || self.shape(beta) != [n] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm_rows",
                lhs: self.shape(gamma).to_vec(),
                rhs: self.shape(beta).to_vec(),
            });
        }
        let d = self.data(x);
        let (dg, db) = (self.data(gamma), self.data(beta));
        let mut xhat = vec![0.0; m * n];
        let mut sigma = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &d[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let sd = (var + eps).sqrt();
            sigma[i] = sd;
            for j in 0..n {
                let xh = (row[j] - mean) / sd;
                xhat[i * n + j] = xh;
                out[i * n + j] = dg[j] * xh + db[j];
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push_checked(
            "layer_norm_rows",
            out,
            s,
            needs,
            Op::LayerNormRows {
                x,
                gamma,
                beta,
                xhat,
                sigma,
            },
        )
    }

    // ── backward ────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss node. Each node is visited exactly
    /// once; leaf gradients are then available via [`Tape::grad`] /
    /// [`Tape::param_grads`].
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.data(loss).len() != 1 {
            return Err(Error::BadShape {
                shape: self.shape(loss).to_vec(),
                len: 1,
            });
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad || self.nodes[i].grad.is_none() {
                continue;
            }
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            let gout = node.grad.as_ref().unwrap();
            backward_step(node, gout, before);
        }
        Ok(())
    }

    /// Summed gradients per parameter slot, in store order. Parameters
    /// recorded more than once on the tape accumulate across occurrences.
    pub fn param_grads(&self, n_params: usize) -> Vec<Option<Vec<f64>>> {
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n_params];
        for &(pid, node) in &self.param_nodes {
            if let Some(g) = self.grad(node) {
                match &mut grads[pid.0] {
                    Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &v)| *a += v),
                    slot => *slot = Some(g.to_vec()),
                }
            }
        }
        grads
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn accumulate(before: &mut [Node], id: TensorId, add: impl FnOnce(&mut [f64], &[f64]), src: &[f64]) {
    let node = &mut before[id.0];
    if !node.needs_grad {
        return;
    }
    let grad = node.grad.get_or_insert_with(|| vec![0.0; node.data.len()]);
    add(grad, src);
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
}

fn backward_step(node: &Node, gout: &[f64], before: &mut [Node]) {
    match &node.op {
        Op::Leaf => {}
        Op::MatMul { a, b } => {
            let (m, n) = (node.shape[0], node.shape[1]);
            let k = before[a.0].shape[1];
            // dA = dC · Bᵀ
            if before[a.0].needs_grad {
                let db = before[b.0].data.clone();
                let mut ga = vec![0.0; m * k];
                for i in 0..m {
                    for j in 0..n {
                        let g = gout[i * n + j];
                        if g == 0.0 {
                            continue;
                        }
                        for p in 0..k {
                            ga[i * k + p] += g * db[p * n + j];
                        }
                    }
                }
                accumulate(before, *a, add_into, &ga);
            }
            // dB = Aᵀ · dC
            if before[b.0].needs_grad {
                let da = before[a.0].data.clone();
                let mut gb = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let av = da[i * k + p];
                        if av == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            gb[p * n + j] += av * gout[i * n + j];
                        }
                    }
                }
                accumulate(before, *b, add_into, &gb);
            }
        }
        Op::Transpose { x } => {
            let (n, m) = (node.shape[0], node.shape[1]);
            let mut gx = vec![0.0; m * n];
            for j in 0..n {
                for i in 0..m {
                    gx[i * n + j] = gout[j * m + i];
                }
            }
            accumulate(before, *x, add_into, &gx);
        }
        Op::Add { a, b } => {
            accumulate(before, *a, add_into, gout);
            accumulate(before, *b, add_into, gout);
        }
        Op::Sub { a, b } => {
            accumulate(before, *a, add_into, gout);
            let neg: Vec<f64> = gout.iter().map(|&g| -g).collect();
            accumulate(before, *b, add_into, &neg);
        }
        Op::Mul { a, b } => {
            if before[a.0].needs_grad {
                let ga: Vec<f64> = gout
                    .iter()
                    .zip(&before[b.0].data)
                    .map(|(&g, &v)| g * v)
                    .collect();
                accumulate(before, *a, add_into, &ga);
            }
            if before[b.0].needs_grad {
                let gb: Vec<f64> = gout
                    .iter()
                    .zip(&before[a.0].data)
                    .map(|(&g, &v)| g * v)
                    .collect();
                accumulate(before, *b, add_into, &gb);
            }
        }
        Op::AddRow { x, row } => {
            accumulate(before, *x, add_into, gout);
            if before[row.0].needs_grad {
                let n = node.shape[1];
                let m = node.shape[0];
                let mut gr = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        gr[j] += gout[i * n + j];
                    }
                }
                accumulate(before, *row, add_into, &gr);
            }
        }
        Op::AddCol { x, col } => {
            accumulate(before, *x, add_into, gout);
            if before[col.0].needs_grad {
                let n = node.shape[1];
                let m = node.shape[0];
                let mut gc = vec![0.0; m];
                for i in 0..m {
                    for j in 0..n {
                        gc[i] += gout[i * n + j];
                    }
                }
                accumulate(before, *col, add_into, &gc);
            }
        }
        Op::Affine { x, mul } => {
            let gx: Vec<f64> = gout.iter().map(|&g| g * mul).collect();
            accumulate(before, *x, add_into, &gx);
        }
        Op::MulScalarT { x, s } => {
            if before[x.0].needs_grad {
                let sv = before[s.0].data[0];
                let gx: Vec<f64> = gout.iter().map(|&g| g * sv).collect();
                accumulate(before, *x, add_into, &gx);
            }
            if before[s.0].needs_grad {
                let gs: f64 = gout
                    .iter()
                    .zip(&before[x.0].data)
                    .map(|(&g, &v)| g * v)
                    .sum();
                accumulate(before, *s, add_into, &[gs]);
            }
        }
        Op::Recip { x } => {
            let gx: Vec<f64> = gout
                .iter()
                .zip(&before[x.0].data)
                .map(|(&g, &v)| -g / (v * v))
                .collect();
            accumulate(before, *x, add_into, &gx);
        }
        Op::Softplus { x } => {
            let gx: Vec<f64> = gout
                .iter()
                .zip(&before[x.0].data)
                .map(|(&g, &v)| g * sigmoid(v))
                .collect();
            accumulate(before, *x, add_into, &gx);
        }
        Op::Tanh { x } => {
            let gx: Vec<f64> = gout
                .iter()
                .zip(&node.data)
                .map(|(&g, &y)| g * (1.0 - y * y))
                .collect();
            accumulate(before, *x, add_into, &gx);
        }
        Op::Sigmoid { x } => {
            let gx: Vec<f64> = gout
                .iter()
                .zip(&node.data)
                .map(|(&g, &y)| g * y * (1.0 - y))
                .collect();
            accumulate(before, *x, add_into, &gx);
        }
        Op::Relu { x } => {
            let gx: Vec<f64> = gout
                .iter()
                .zip(&before[x.0].data)
                .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
                .collect();
            accumulate(before, *x, add_into, &gx);
        }
        Op::Abs { x } => {
            let gx: Vec<f64> = gout
                .iter()
                .zip(&before[x.0].data)
                .map(|(&g, &v)| {
                    if v > 0.0 {
                        g
                    } else if v < 0.0 {
                        -g
                    } else {
                        0.0
                    }
                })
                .collect();
            accumulate(before, *x, add_into, &gx);
        }
        Op::LogClamped { x, floor } => {
            let gx: Vec<f64> = gout
                .iter()
                .zip(&before[x.0].data)
                .map(|(&g, &v)| if v > *floor { g / v } else { 0.0 })
                .collect();
            accumulate(before, *x, add_into, &gx);
        }
        Op::SoftmaxRows { x, mask } => {
            let n = *node.shape.last().unwrap();
            let rows = node.data.len() / n;
            let mut gx = vec![0.0; node.data.len()];
            for r in 0..rows {
                let p = &node.data[r * n..(r + 1) * n];
                let g = &gout[r * n..(r + 1) * n];
                let dot: f64 = p.iter().zip(g).map(|(&pv, &gv)| pv * gv).sum();
                for j in 0..n {
                    if mask.as_ref().is_none_or(|m| m[j]) {
                        gx[r * n + j] = p[j] * (g[j] - dot);
                    }
                }
            }
            accumulate(before, *x, add_into, &gx);
        }
        Op::LogSumExp { x } => {
            let d = &before[x.0].data;
            let mx = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = d.iter().map(|&v| (v - mx).exp()).sum();
            let g = gout[0];
            let gx: Vec<f64> = d.iter().map(|&v| g * (v - mx).exp() / sum).collect();
            accumulate(before, *x, add_into, &gx);
        }
        Op::MaskedMaxCols { x, argmax } => {
            let cols = node.data.len();
            let n = before[x.0].shape[1];
            let mut gx = vec![0.0; before[x.0].data.len()];
            for (j, &i) in argmax.iter().enumerate().take(cols) {
                gx[i * n + j] += gout[j];
            }
            accumulate(before, *x, add_into, &gx);
        }
        Op::MeanAxis { x, axis } => {
            let (m, n) = (before[x.0].shape[0], before[x.0].shape[1]);
            let mut gx = vec![0.0; m * n];
            if *axis == 0 {
                for i in 0..m {
                    for j in 0..n {
                        gx[i * n + j] = gout[j] / m as f64;
                    }
                }
            } else {
                for i in 0..m {
                    for j in 0..n {
                        gx[i * n + j] = gout[i] / n as f64;
                    }
                }
            }
            accumulate(before, *x, add_into, &gx);
        }
        Op::SumAll { x } => {
            let gx = vec![gout[0]; before[x.0].data.len()];
            accumulate(before, *x, add_into, &gx);
        }
        Op::MeanAll { x } => {
            let len = before[x.0].data.len();
            let gx = vec![gout[0] / len as f64; len];
            accumulate(before, *x, add_into, &gx);
        }
        Op::ConcatLast { parts } => {
            let total = *node.shape.last().unwrap();
            let rows = node.data.len() / total;
            let mut offset = 0;
            for &p in parts {
                let w = *before[p.0].shape.last().unwrap();
                if before[p.0].needs_grad {
                    let mut gp = vec![0.0; before[p.0].data.len()];
                    for r in 0..rows {
                        gp[r * w..(r + 1) * w]
                            .copy_from_slice(&gout[r * total + offset..r * total + offset + w]);
                    }
                    accumulate(before, p, add_into, &gp);
                }
                offset += w;
            }
        }
        Op::SliceLast { x, start } => {
            let len = *node.shape.last().unwrap();
            let width = *before[x.0].shape.last().unwrap();
            let rows = node.data.len() / len;
            let mut gx = vec![0.0; before[x.0].data.len()];
            for r in 0..rows {
                gx[r * width + start..r * width + start + len]
                    .copy_from_slice(&gout[r * len..(r + 1) * len]);
            }
            accumulate(before, *x, add_into, &gx);
        }
        Op::Reshape { x } => {
            accumulate(before, *x, add_into, gout);
        }
        Op::GatherRows { table, ids } => {
            let d = before[table.0].shape[1];
            let mut gt = vec![0.0; before[table.0].data.len()];
            for (i, &id) in ids.iter().enumerate() {
                for j in 0..d {
                    gt[id * d + j] += gout[i * d + j];
                }
            }
            accumulate(before, *table, add_into, &gt);
        }
        Op::Dropout { x, keep, scale } => {
            let gx: Vec<f64> = gout
                .iter()
                .zip(keep)
                .map(|(&g, &k)| if k { g * scale } else { 0.0 })
                .collect();
            accumulate(before, *x, add_into, &gx);
        }
        Op::LayerNormRows {
            x,
            gamma,
            beta,
            xhat,
            sigma,
        } => {
            let (m, n) = (node.shape[0], node.shape[1]);
            if before[gamma.0].needs_grad {
                let mut gg = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        gg[j] += gout[i * n + j] * xhat[i * n + j];
                    }
                }
                accumulate(before, *gamma, add_into, &gg);
            }
            if before[beta.0].needs_grad {
                let mut gb = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        gb[j] += gout[i * n + j];
                    }
                }
                accumulate(before, *beta, add_into, &gb);
            }
            if before[x.0].needs_grad {
                let dg = &before[gamma.0].data;
                let mut gx = vec![0.0; m * n];
                for i in 0..m {
                    // g = dy ⊙ gamma for this row; dx = (g - mean(g)
                    // - xhat · mean(g ⊙ xhat)) / sigma.
                    let mut g_mean = 0.0;
                    let mut gxh_mean = 0.0;
                    for j in 0..n {
                        let g = gout[i * n + j] * dg[j];
                        g_mean += g;
                        gxh_mean += g * xhat[i * n + j];
                    }
                    g_mean /= n as f64;
                    gxh_mean /= n as f64;
                    for j in 0..n {
                        let g = gout[i * n + j] * dg[j];
                        gx[i * n + j] =
                            (g - g_mean - xhat[i * n + j] * gxh_mean) / sigma[i];
                    }
                }
                accumulate(before, *x, add_into, &gx);
            }
        }
    }
}
