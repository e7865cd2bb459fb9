//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation of one forward pass as a node holding
//! its value and the inputs it was computed from. [`Tape::backward`] walks the
//! nodes in reverse creation order and accumulates adjoints, so fan-out
//! (a value consumed by several ops) sums contributions automatically.
//!
//! Shape mismatches are programming errors and panic with both shapes in the
//! message.

use std::sync::Arc;

use super::params::ParamId;
use super::tensor::{dot, matmul_at_into, matmul_bt_into, matmul_into, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Sparse linear map from a flat source buffer to a flat output buffer:
/// `out[k] = Σ weight · src[index]` over the entries of row `k`.
///
/// Covers plain element lookups (one entry of weight 1), linear
/// interpolation between two table slots, and averaging along paths.
#[derive(Debug, Clone, Default)]
pub struct SparseMap {
    offsets: Vec<usize>,
    index: Vec<usize>,
    weight: Vec<f64>,
}

impl SparseMap {
    pub fn new() -> Self {
        Self {
            offsets: vec![0],
            index: Vec::new(),
            weight: Vec::new(),
        }
    }

    pub fn with_capacity(outputs: usize) -> Self {
        let mut offsets = Vec::with_capacity(outputs + 1);
        offsets.push(0);
        Self {
            offsets,
            index: Vec::with_capacity(outputs * 2),
            weight: Vec::with_capacity(outputs * 2),
        }
    }

    /// Appends one output slot built from `(source index, weight)` terms.
    pub fn push<I: IntoIterator<Item = (usize, f64)>>(&mut self, terms: I) {
        for (i, w) in terms {
            self.index.push(i);
            self.weight.push(w);
        }
        self.offsets.push(self.index.len());
    }

    pub fn outputs(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn terms(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[k]..self.offsets[k + 1];
        self.index[span.clone()]
            .iter()
            .copied()
            .zip(self.weight[span].iter().copied())
    }

    pub fn max_index(&self) -> Option<usize> {
        self.index.iter().copied().max()
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Sparse(Var, Arc<SparseMap>),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    SumCols(Var),
    SumSquares(Var),
    RowSoftmax(Var),
    Log(Var),
    Exp(Var),
    RowNorms(Var),
    NormalizeRows(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Vec<f64>,
        count: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Probability floor applied before the log in [`Tape::cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-12;
const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A value that does not receive gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf that receives gradients but is not bound to a parameter slot.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a trainable parameter. Its gradient is reported by
    /// [`Gradients::params`].
    pub fn param(&mut self, id: ParamId, value: &Tensor) -> Var {
        let v = self.push(value.clone(), Op::Param, true);
        self.params.push((id, v));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert_eq!(sa.1, sb.0, "matmul shape mismatch: {sa:?} · {sb:?}");
        let mut out = Tensor::zeros(sa.0, sb.1);
        matmul_into(
            self.value(a).data(),
            self.value(b).data(),
            out.data_mut(),
            sa.0,
            sa.1,
            sb.1,
        );
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert_eq!(sa.1, sb.1, "matmul_bt shape mismatch: {sa:?} · {sb:?}ᵀ");
        let mut out = Tensor::zeros(sa.0, sb.0);
        matmul_bt_into(
            self.value(a).data(),
            self.value(b).data(),
            out.data_mut(),
            sa.0,
            sa.1,
            sb.0,
        );
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMulBt(a, b), ng)
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert_eq!(sa, sb, "{name} shape mismatch: {sa:?} vs {sb:?}");
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        Tensor::from_vec(sa.0, sa.1, data).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_same(a, b, "add", |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Add(a, b), ng)
    }

    /// Sums any number of same-shaped values.
    pub fn add_all(&mut self, vars: &[Var]) -> Var {
        let (first, rest) = vars.split_first().expect("add_all of nothing");
        rest.iter().fold(*first, |acc, &v| self.add(acc, v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_same(a, b, "sub", |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Sub(a, b), ng)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_same(a, b, "mul", |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Mul(a, b), ng)
    }

    /// Adds the `1 × n` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert!(
            sb.0 == 1 && sb.1 == sa.1,
            "add_row shape mismatch: {sa:?} + {sb:?}"
        );
        let mut out = self.value(a).clone();
        let row = self.value(b).data().to_vec();
        for r in 0..sa.0 {
            for (o, x) in out.row_mut(r).iter_mut().zip(&row) {
                *o += x;
            }
        }
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::AddRow(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let src = self.value(a);
        let data = src.data().iter().map(|x| x * factor).collect();
        let out = Tensor::from_vec(src.rows(), src.cols(), data).expect("shape preserved");
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, factor), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.shape(parts[0]).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let s = self.shape(p);
            assert_eq!(s.1, cols, "concat_rows shape mismatch: {s:?} vs (_, {cols})");
            data.extend_from_slice(self.value(p).data());
            rows += s.0;
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        let out = Tensor::from_vec(rows, cols, data).expect("shape preserved");
        self.push(out, Op::ConcatRows(parts.to_vec()), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.shape(parts[0]).0;
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            assert_eq!(s.0, rows, "concat_cols shape mismatch: {s:?} vs ({rows}, _)");
            cols += s.1;
        }
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let src = self.value(p);
                let w = src.cols();
                out.row_mut(r)[offset..offset + w].copy_from_slice(src.row(r));
                offset += w;
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(out, Op::ConcatCols(parts.to_vec()), ng)
    }

    /// Embedding lookup: stacks `table[rows[k]]` for each `k`.
    pub fn gather_rows(&mut self, table: Var, rows: &[usize]) -> Var {
        let src = self.value(table);
        let cols = src.cols();
        let mut out = Tensor::zeros(rows.len(), cols);
        for (k, &r) in rows.iter().enumerate() {
            assert!(
                r < src.rows(),
                "gather_rows index {r} out of bounds for shape {:?}",
                src.shape()
            );
            out.row_mut(k).copy_from_slice(src.row(r));
        }
        let ng = self.ng(table);
        self.push(out, Op::GatherRows(table, rows.to_vec()), ng)
    }

    /// Applies a [`SparseMap`] to the flattened source, producing a
    /// `rows × cols` result.
    pub fn sparse_map(&mut self, src: Var, map: Arc<SparseMap>, rows: usize, cols: usize) -> Var {
        assert_eq!(
            map.outputs(),
            rows * cols,
            "sparse_map produces {} values, requested shape ({rows}, {cols})",
            map.outputs()
        );
        let source = self.value(src).data();
        if let Some(max) = map.max_index() {
            assert!(
                max < source.len(),
                "sparse_map index {max} out of bounds for source of shape {:?}",
                self.shape(src)
            );
        }
        let data = (0..map.outputs())
            .map(|k| map.terms(k).map(|(i, w)| w * source[i]).sum())
            .collect();
        let out = Tensor::from_vec(rows, cols, data).expect("shape preserved");
        let ng = self.ng(src);
        self.push(out, Op::Sparse(src, map), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let s: f64 = src.data().iter().sum::<f64>() / src.len() as f64;
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Mean(a), ng)
    }

    /// Column-wise mean over rows, `m × n → 1 × n`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let (m, n) = src.shape();
        assert!(m > 0, "mean_rows of empty tensor {:?}", src.shape());
        let mut out = vec![0.0; n];
        for r in 0..m {
            for (o, x) in out.iter_mut().zip(src.row(r)) {
                *o += x;
            }
        }
        out.iter_mut().for_each(|o| *o /= m as f64);
        let ng = self.ng(a);
        self.push(Tensor::row_vector(out), Op::MeanRows(a), ng)
    }

    /// Row sums, `m × n → m × 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let data = (0..src.rows()).map(|r| src.row(r).iter().sum()).collect();
        let out = Tensor::from_vec(src.rows(), 1, data).expect("shape preserved");
        let ng = self.ng(a);
        self.push(out, Op::SumCols(a), ng)
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.value(a).sum_squares();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::SumSquares(a), ng)
    }

    /// Softmax of each row, computed with row-max subtraction.
    pub fn row_softmax(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let mut out = src.clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        let ng = self.ng(a);
        self.push(out, Op::RowSoftmax(a), ng)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let data = src.data().iter().map(|x| x.ln()).collect();
        let out = Tensor::from_vec(src.rows(), src.cols(), data).expect("shape preserved");
        let ng = self.ng(a);
        self.push(out, Op::Log(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let data = src.data().iter().map(|x| x.exp()).collect();
        let out = Tensor::from_vec(src.rows(), src.cols(), data).expect("shape preserved");
        let ng = self.ng(a);
        self.push(out, Op::Exp(a), ng)
    }

    /// Euclidean norm of each row, `m × n → m × 1`.
    pub fn row_norms(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let data = (0..src.rows())
            .map(|r| dot(src.row(r), src.row(r)).sqrt())
            .collect();
        let out = Tensor::from_vec(src.rows(), 1, data).expect("shape preserved");
        let ng = self.ng(a);
        self.push(out, Op::RowNorms(a), ng)
    }

    /// Scales every row to unit length (rows shorter than 1e-12 are divided
    /// by 1e-12 instead).
    pub fn normalize_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let n = dot(row, row).sqrt().max(NORM_FLOOR);
            row.iter_mut().for_each(|x| *x /= n);
        }
        let ng = self.ng(a);
        self.push(out, Op::NormalizeRows(a), ng)
    }

    /// Row-wise cosine similarity of two same-shaped matrices, `m × 1`.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Var {
        let na = self.normalize_rows(a);
        let nb = self.normalize_rows(b);
        let prod = self.mul(na, nb);
        self.sum_cols(prod)
    }

    /// Mean negative log-likelihood of `targets` under the row-softmax of
    /// `logits`. Rows whose target is `None` are masked out of both the sum
    /// and the count.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Var {
        let src = self.value(logits);
        let (m, n) = src.shape();
        assert_eq!(
            m,
            targets.len(),
            "cross_entropy: logits {:?} vs {} targets",
            src.shape(),
            targets.len()
        );
        let mut probs = src.data().to_vec();
        let mut total = 0.0;
        let mut count = 0;
        for (r, t) in targets.iter().enumerate() {
            let row = &mut probs[r * n..(r + 1) * n];
            softmax_in_place(row);
            if let Some(t) = *t {
                assert!(t < n, "cross_entropy target {t} out of range for {n} classes");
                total -= row[t].max(PROB_FLOOR).ln();
                count += 1;
            }
        }
        let loss = if count == 0 { 0.0 } else { total / count as f64 };
        let ng = self.ng(logits);
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                count,
            },
            ng,
        )
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(
            self.shape(loss),
            (1, 1),
            "backward requires a scalar loss, got {:?}",
            self.shape(loss)
        );
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.needs_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        let params = self
            .params
            .iter()
            .map(|&(id, v)| {
                let value = &self.nodes[v.0].value;
                let g = grads[v.0]
                    .clone()
                    .unwrap_or_else(|| vec![0.0; value.len()]);
                (id, Tensor::from_vec(value.rows(), value.cols(), g).expect("shape"))
            })
            .collect();
        Gradients { grads, params }
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = self.shape(*b).1;
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    // dA = G · Bᵀ
                    matmul_bt_into(g, bv, ga, m, n, k);
                }
                if let Some(gb) = slot(&self.nodes, grads, *b) {
                    // dB = Aᵀ · G
                    matmul_at_into(av, g, gb, m, k, n);
                }
            }
            Op::MatMulBt(a, b) => {
                let (m, k) = self.shape(*a);
                let n = self.shape(*b).0;
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    // dA = G · B
                    matmul_into(g, bv, ga, m, n, k);
                }
                if let Some(gb) = slot(&self.nodes, grads, *b) {
                    // dB = Gᵀ · A
                    matmul_at_into(g, av, gb, m, n, k);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(gv) = slot(&self.nodes, grads, v) {
                        add_into(gv, g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = slot(&self.nodes, grads, *b) {
                    gb.iter_mut().zip(g).for_each(|(o, x)| *o -= x);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    for ((o, gx), y) in ga.iter_mut().zip(g).zip(bv) {
                        *o += gx * y;
                    }
                }
                if let Some(gb) = slot(&self.nodes, grads, *b) {
                    for ((o, gx), x) in gb.iter_mut().zip(g).zip(av) {
                        *o += gx * x;
                    }
                }
            }
            Op::AddRow(a, b) => {
                let n = self.shape(*a).1;
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = slot(&self.nodes, grads, *b) {
                    for chunk in g.chunks(n) {
                        add_into(gb, chunk);
                    }
                }
            }
            Op::Scale(a, f) => {
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(o, x)| *o += f * x);
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if let Some(gp) = slot(&self.nodes, grads, p) {
                        add_into(gp, &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let (rows, w) = self.shape(p);
                    if let Some(gp) = slot(&self.nodes, grads, p) {
                        for r in 0..rows {
                            let src = &g[r * total + offset..r * total + offset + w];
                            add_into(&mut gp[r * w..(r + 1) * w], src);
                        }
                    }
                    offset += w;
                }
            }
            Op::GatherRows(table, rows) => {
                let n = self.shape(*table).1;
                if let Some(gt) = slot(&self.nodes, grads, *table) {
                    for (k, &r) in rows.iter().enumerate() {
                        add_into(&mut gt[r * n..(r + 1) * n], &g[k * n..(k + 1) * n]);
                    }
                }
            }
            Op::Sparse(src, map) => {
                if let Some(gs) = slot(&self.nodes, grads, *src) {
                    for (k, gk) in g.iter().enumerate() {
                        for (i, w) in map.terms(k) {
                            gs[i] += w * gk;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    ga.iter_mut().for_each(|o| *o += g[0]);
                }
            }
            Op::Mean(a) => {
                let len = self.value(*a).len() as f64;
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    ga.iter_mut().for_each(|o| *o += g[0] / len);
                }
            }
            Op::MeanRows(a) => {
                let (m, n) = self.shape(*a);
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    for r in 0..m {
                        for (o, x) in ga[r * n..(r + 1) * n].iter_mut().zip(g) {
                            *o += x / m as f64;
                        }
                    }
                }
            }
            Op::SumCols(a) => {
                let (m, n) = self.shape(*a);
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    for r in 0..m {
                        ga[r * n..(r + 1) * n].iter_mut().for_each(|o| *o += g[r]);
                    }
                }
            }
            Op::SumSquares(a) => {
                let av = self.value(*a).data();
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    for (o, x) in ga.iter_mut().zip(av) {
                        *o += 2.0 * x * g[0];
                    }
                }
            }
            Op::RowSoftmax(a) => {
                let y = &node.value;
                let n = y.cols();
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = &g[r * n..(r + 1) * n];
                        let s = dot(yr, gr);
                        for ((o, yi), gi) in ga[r * n..(r + 1) * n].iter_mut().zip(yr).zip(gr) {
                            *o += yi * (gi - s);
                        }
                    }
                }
            }
            Op::Log(a) => {
                let av = self.value(*a).data();
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    for ((o, gx), x) in ga.iter_mut().zip(g).zip(av) {
                        *o += gx / x;
                    }
                }
            }
            Op::Exp(a) => {
                let y = node.value.data();
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    for ((o, gx), yx) in ga.iter_mut().zip(g).zip(y) {
                        *o += gx * yx;
                    }
                }
            }
            Op::RowNorms(a) => {
                let x = self.value(*a);
                let n = x.cols();
                let norms = node.value.data();
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    for r in 0..x.rows() {
                        if norms[r] == 0.0 {
                            continue;
                        }
                        for (o, xi) in ga[r * n..(r + 1) * n].iter_mut().zip(x.row(r)) {
                            *o += g[r] * xi / norms[r];
                        }
                    }
                }
            }
            Op::NormalizeRows(a) => {
                let x = self.value(*a);
                let y = &node.value;
                let n = x.cols();
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    for r in 0..x.rows() {
                        let raw = dot(x.row(r), x.row(r)).sqrt();
                        let gr = &g[r * n..(r + 1) * n];
                        let out = &mut ga[r * n..(r + 1) * n];
                        if raw < NORM_FLOOR {
                            out.iter_mut().zip(gr).for_each(|(o, gi)| *o += gi / NORM_FLOOR);
                            continue;
                        }
                        let yr = y.row(r);
                        let s = dot(yr, gr);
                        for ((o, gi), yi) in out.iter_mut().zip(gr).zip(yr) {
                            *o += (gi - yi * s) / raw;
                        }
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                count,
            } => {
                if *count == 0 {
                    return;
                }
                let n = self.shape(*logits).1;
                let scale = g[0] / *count as f64;
                if let Some(gl) = slot(&self.nodes, grads, *logits) {
                    for (r, t) in targets.iter().enumerate() {
                        let Some(t) = *t else { continue };
                        let p = &probs[r * n..(r + 1) * n];
                        if p[t] < PROB_FLOOR {
                            // clamped: loss is locally constant
                            continue;
                        }
                        let out = &mut gl[r * n..(r + 1) * n];
                        for (j, (o, pj)) in out.iter_mut().zip(p).enumerate() {
                            let indicator = if j == t { 1.0 } else { 0.0 };
                            *o += scale * (pj - indicator);
                        }
                    }
                }
            }
        }
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, Tensor)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` when `v` did not
    /// influence the loss.
    pub fn of(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Per-parameter gradients in binding order. A parameter bound more than
    /// once appears once per binding.
    pub fn params(&self) -> &[(ParamId, Tensor)] {
        &self.params
    }

    pub fn into_params(self) -> Vec<(ParamId, Tensor)> {
        self.params
    }
}

fn slot<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    let node = &nodes[v.0];
    if !node.needs_grad {
        return None;
    }
    let len = node.value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    row.iter_mut().for_each(|x| *x /= total);
}
