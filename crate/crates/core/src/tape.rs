//! Reverse-mode differentiation over vector-valued nodes.
//!
//! A [`Tape`] records every primitive applied during a forward pass. Matrix
//! parameters are referenced by [`ParamId`] and never copied onto the tape.
//! [`Tape::backward`] walks the record in exact reverse order and returns a
//! [`Gradients`] map holding `∂loss/∂θ` for every parameter of the store.
//! Contributions from repeated uses of a parameter (every LSTM timestep)
//! are summed.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU32, Ordering};

use crate::error::{Error, Result};
use crate::head::pool_values;
use crate::params::{ParamId, ParamStore};
use crate::tensor::{self, Matrix, Vector};

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(0);

/// Handle to a node on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u32,
    index: u32,
}

/// Deliberate derivative errors, used to check that the gradient checker
/// detects a broken backward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Uses `1 - y` instead of `1 - y²` as the derivative of `tanh`.
    TanhDerivative,
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Row { table: ParamId, row: usize },
    Affine { w: ParamId, x: Var, b: Option<Var> },
    Sigmoid(Var),
    Tanh(Var),
    Hadamard(Var, Var),
    Add(Var, Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Scale(Var, f64),
    Dot(Var, Var),
    Pool(Vec<Var>),
    NegLogSoftmax { logits: Var, target: usize },
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'a> {
    id: u32,
    store: &'a ParamStore,
    nodes: Vec<Node>,
    fault: Option<Fault>,
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            store,
            nodes: Vec::new(),
            fault: None,
        }
    }

    pub fn with_fault(store: &'a ParamStore, fault: Fault) -> Self {
        let mut t = Tape::new(store);
        t.fault = Some(fault);
        t
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        let index = self.nodes.len() as u32;
        self.nodes.push(Node { value, op });
        Var { tape: self.id, index }
    }

    fn node(&self, v: Var) -> Result<&Node> {
        if v.tape != self.id {
            return Err(Error::Tape("variable belongs to a different tape".into()));
        }
        self.nodes
            .get(v.index as usize)
            .ok_or_else(|| Error::Tape("variable index out of range".into()))
    }

    /// Value of a recorded node.
    pub fn value(&self, v: Var) -> Result<&[f64]> {
        Ok(&self.node(v)?.value)
    }

    pub fn dim(&self, v: Var) -> Result<usize> {
        Ok(self.node(v)?.value.len())
    }

    /// An input that receives no gradient.
    pub fn constant(&mut self, value: impl Into<Vec<f64>>) -> Var {
        self.push(value.into(), Op::Constant)
    }

    /// A whole parameter, flattened row-major, as a vector node.
    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.store.value(id).as_slice().to_vec();
        self.push(value, Op::Param(id))
    }

    /// One row of a lookup-table parameter.
    pub fn row(&mut self, table: ParamId, row: usize) -> Result<Var> {
        let m = self.store.value(table);
        if row >= m.rows() {
            return Err(Error::shape("row", m.shape(), format!("row {row}")));
        }
        let value = m.row(row).to_vec();
        Ok(self.push(value, Op::Row { table, row }))
    }

    /// `W · x (+ b)` with `W` a parameter matrix.
    pub fn affine(&mut self, w: ParamId, x: Var, b: Option<Var>) -> Result<Var> {
        let wm = self.store.value(w);
        let xv = &self.node(x)?.value;
        let value = match b {
            Some(b) => tensor::affine(wm, xv, &self.node(b)?.value)?,
            None => wm.matvec(xv)?,
        };
        Ok(self.push(value.into_inner(), Op::Affine { w, x, b }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let v = tensor::sigmoid(&self.node(x)?.value);
        Ok(self.push(v.into_inner(), Op::Sigmoid(x)))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let v = tensor::tanh(&self.node(x)?.value);
        Ok(self.push(v.into_inner(), Op::Tanh(x)))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::hadamard(&self.node(a)?.value, &self.node(b)?.value)?;
        Ok(self.push(v.into_inner(), Op::Hadamard(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::add(&self.node(a)?.value, &self.node(b)?.value)?;
        Ok(self.push(v.into_inner(), Op::Add(a, b)))
    }

    /// Concatenation in argument order.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut v = Vec::new();
        for &p in parts {
            v.extend_from_slice(&self.node(p)?.value);
        }
        Ok(self.push(v, Op::Concat(parts.to_vec())))
    }

    /// Components `[start, start + len)`.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = &self.node(x)?.value;
        if start + len > xv.len() {
            return Err(Error::shape("slice", format!("dim {}", xv.len()), format!("{start}..{}", start + len)));
        }
        let v = xv[start..start + len].to_vec();
        Ok(self.push(v, Op::Slice { x, start }))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let v = self.node(x)?.value.iter().map(|e| e * factor).collect();
        Ok(self.push(v, Op::Scale(x, factor)))
    }

    /// Scalar `a · b`.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let av = &self.node(a)?.value;
        let bv = &self.node(b)?.value;
        if av.len() != bv.len() {
            return Err(Error::shape("dot", format!("dim {}", av.len()), format!("dim {}", bv.len())));
        }
        let s = av.iter().zip(bv).map(|(x, y)| x * y).sum();
        Ok(self.push(vec![s], Op::Dot(a, b)))
    }

    /// `max ⊕ min ⊕ avg ⊕ rss` over a non-empty set of equal-dimension vectors.
    /// See [`crate::head::pool`].
    pub fn pool(&mut self, items: &[Var]) -> Result<Var> {
        if items.is_empty() {
            return Err(Error::Tape("pool over an empty set must use a constant".into()));
        }
        let dim = self.dim(items[0])?;
        let mut rows = Vec::with_capacity(items.len());
        for &it in items {
            let v = &self.node(it)?.value;
            if v.len() != dim {
                return Err(Error::shape("pool", format!("dim {dim}"), format!("dim {}", v.len())));
            }
            rows.push(v.as_slice());
        }
        let v = pool_values(&rows, dim);
        Ok(self.push(v.into_inner(), Op::Pool(items.to_vec())))
    }

    /// Scalar `−log softmax(logits)[target]`.
    pub fn neg_log_softmax(&mut self, logits: Var, target: usize) -> Result<Var> {
        let z = &self.node(logits)?.value;
        if target >= z.len() {
            return Err(Error::shape("neg_log_softmax", format!("{} classes", z.len()), format!("target {target}")));
        }
        let loss = tensor::log_sum_exp(z) - z[target];
        Ok(self.push(vec![loss], Op::NegLogSoftmax { logits, target }))
    }

    /// Gradients of the scalar node `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let node = self
            .node(loss)
            .map_err(|_| Error::Tape("loss is not on this tape".into()))?;
        if node.value.len() != 1 {
            return Err(Error::Tape(format!("loss must be scalar, got dim {}", node.value.len())));
        }
        let mut grads = Gradients::zeros(self.store);
        let mut adj: Vec<Option<Vec<f64>>> = Vec::with_capacity(loss.index as usize + 1);
        adj.resize_with(loss.index as usize + 1, || None);
        adj[loss.index as usize] = Some(vec![1.0]);

        for idx in (0..=loss.index as usize).rev() {
            let Some(dy) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => grads.add_dense(*id, &dy),
                Op::Row { table, row } => grads.add_row(*table, *row, &dy),
                Op::Affine { w, x, b } => {
                    let wm = self.store.value(*w);
                    let xv = &self.nodes[x.index as usize].value;
                    grads.add_outer(*w, &dy, xv);
                    let dx = accumulate(&mut adj, *x, xv.len());
                    for (i, &g) in dy.iter().enumerate() {
                        if g != 0.0 {
                            for (d, wv) in dx.iter_mut().zip(wm.row(i)) {
                                *d += g * wv;
                            }
                        }
                    }
                    if let Some(b) = b {
                        add_into(accumulate(&mut adj, *b, dy.len()), &dy);
                    }
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    let dx = accumulate(&mut adj, *x, y.len());
                    for ((d, g), s) in dx.iter_mut().zip(&dy).zip(y) {
                        *d += g * s * (1.0 - s);
                    }
                }
                Op::Tanh(x) => {
                    let y = &node.value;
                    let corrupt = self.fault == Some(Fault::TanhDerivative);
                    let dx = accumulate(&mut adj, *x, y.len());
                    for ((d, g), t) in dx.iter_mut().zip(&dy).zip(y) {
                        let deriv = if corrupt { 1.0 - t } else { 1.0 - t * t };
                        *d += g * deriv;
                    }
                }
                Op::Hadamard(a, b) => {
                    let av = &self.nodes[a.index as usize].value;
                    let bv = &self.nodes[b.index as usize].value;
                    let da: Vec<f64> = dy.iter().zip(bv).map(|(g, v)| g * v).collect();
                    let db: Vec<f64> = dy.iter().zip(av).map(|(g, v)| g * v).collect();
                    add_into(accumulate(&mut adj, *a, da.len()), &da);
                    add_into(accumulate(&mut adj, *b, db.len()), &db);
                }
                Op::Add(a, b) => {
                    add_into(accumulate(&mut adj, *a, dy.len()), &dy);
                    add_into(accumulate(&mut adj, *b, dy.len()), &dy);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.nodes[p.index as usize].value.len();
                        add_into(accumulate(&mut adj, *p, n), &dy[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::Slice { x, start } => {
                    let n = self.nodes[x.index as usize].value.len();
                    let dx = accumulate(&mut adj, *x, n);
                    add_into(&mut dx[*start..*start + dy.len()], &dy);
                }
                Op::Scale(x, f) => {
                    let scaled: Vec<f64> = dy.iter().map(|g| g * f).collect();
                    add_into(accumulate(&mut adj, *x, scaled.len()), &scaled);
                }
                Op::Dot(a, b) => {
                    let g = dy[0];
                    let av = &self.nodes[a.index as usize].value;
                    let bv = &self.nodes[b.index as usize].value;
                    let da: Vec<f64> = bv.iter().map(|v| g * v).collect();
                    let db: Vec<f64> = av.iter().map(|v| g * v).collect();
                    add_into(accumulate(&mut adj, *a, da.len()), &da);
                    add_into(accumulate(&mut adj, *b, db.len()), &db);
                }
                Op::Pool(items) => self.pool_backward(&mut adj, items, &node.value, &dy),
                Op::NegLogSoftmax { logits, target } => {
                    let z = &self.nodes[logits.index as usize].value;
                    let p = tensor::softmax(z);
                    let dz = accumulate(&mut adj, *logits, z.len());
                    for (k, (d, pk)) in dz.iter_mut().zip(p.iter()).enumerate() {
                        let onehot = if k == *target { 1.0 } else { 0.0 };
                        *d += dy[0] * (pk - onehot);
                    }
                }
            }
        }
        Ok(grads)
    }

    fn pool_backward(&self, adj: &mut [Option<Vec<f64>>], items: &[Var], out: &[f64], dy: &[f64]) {
        let dim = out.len() / 4;
        let k = items.len() as f64;
        let (dmax, rest) = dy.split_at(dim);
        let (dmin, rest) = rest.split_at(dim);
        let (davg, drss) = rest.split_at(dim);
        let rss = &out[3 * dim..];
        let values: Vec<&[f64]> = items
            .iter()
            .map(|v| self.nodes[v.index as usize].value.as_slice())
            .collect();
        // First index wins on ties, same as the forward selection.
        let mut argmax = vec![0usize; dim];
        let mut argmin = vec![0usize; dim];
        for j in 0..dim {
            for (t, v) in values.iter().enumerate().skip(1) {
                if v[j] > values[argmax[j]][j] {
                    argmax[j] = t;
                }
                if v[j] < values[argmin[j]][j] {
                    argmin[j] = t;
                }
            }
        }
        for (t, (item, v)) in items.iter().zip(&values).enumerate() {
            let mut g = vec![0.0; dim];
            for j in 0..dim {
                g[j] += davg[j] / k;
                if argmax[j] == t {
                    g[j] += dmax[j];
                }
                if argmin[j] == t {
                    g[j] += dmin[j];
                }
                if rss[j] > 0.0 {
                    g[j] += drss[j] * v[j] / rss[j];
                }
            }
            add_into(accumulate(adj, *item, dim), &g);
        }
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], v: Var, dim: usize) -> &mut [f64] {
    adj[v.index as usize].get_or_insert_with(|| vec![0.0; dim])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Gradient of one parameter block.
#[derive(Clone, Debug, PartialEq)]
pub enum GradBlock {
    /// Not reached from the loss; the gradient is the zero tensor.
    Zero,
    Dense(Vec<f64>),
    /// Sparse rows of a lookup table, keyed by row index.
    Rows(BTreeMap<usize, Vec<f64>>),
}

/// `∂loss/∂θ` for every parameter of a store, indexed by [`ParamId`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    shapes: Vec<(usize, usize)>,
    blocks: Vec<GradBlock>,
}

impl Gradients {
    pub fn zeros(store: &ParamStore) -> Self {
        Gradients {
            shapes: store.iter().map(|(_, p)| (p.value.rows(), p.value.cols())).collect(),
            blocks: vec![GradBlock::Zero; store.len()],
        }
    }

    pub fn block(&self, id: ParamId) -> &GradBlock {
        &self.blocks[id.index()]
    }

    /// Dense same-shaped gradient for `id`.
    pub fn get(&self, id: ParamId) -> Matrix {
        let (rows, cols) = self.shapes[id.index()];
        let mut m = Matrix::zeros(rows, cols);
        match &self.blocks[id.index()] {
            GradBlock::Zero => {}
            GradBlock::Dense(d) => m.as_mut_slice().copy_from_slice(d),
            GradBlock::Rows(rs) => {
                for (&r, g) in rs {
                    m.row_mut(r).copy_from_slice(g);
                }
            }
        }
        m
    }

    /// Gradient entry at flat row-major offset.
    pub fn at(&self, id: ParamId, offset: usize) -> f64 {
        let (_, cols) = self.shapes[id.index()];
        match &self.blocks[id.index()] {
            GradBlock::Zero => 0.0,
            GradBlock::Dense(d) => d[offset],
            GradBlock::Rows(rs) => rs.get(&(offset / cols)).map_or(0.0, |g| g[offset % cols]),
        }
    }

    /// Rows holding a (possibly) nonzero gradient; all rows for dense blocks.
    pub fn touched_rows(&self, id: ParamId) -> Vec<usize> {
        let (rows, _) = self.shapes[id.index()];
        match &self.blocks[id.index()] {
            GradBlock::Zero => Vec::new(),
            GradBlock::Dense(_) => (0..rows).collect(),
            GradBlock::Rows(rs) => rs.keys().copied().collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| match b {
            GradBlock::Zero => true,
            GradBlock::Dense(d) => d.iter().all(|v| v.is_finite()),
            GradBlock::Rows(rs) => rs.values().flatten().all(|v| v.is_finite()),
        })
    }

    /// Adds `other` into `self`; both must come from the same store.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (i, b) in other.blocks.iter().enumerate() {
            let id = ParamId(i);
            match b {
                GradBlock::Zero => {}
                GradBlock::Dense(d) => self.add_dense(id, d),
                GradBlock::Rows(rs) => {
                    for (&r, g) in rs {
                        self.add_row(id, r, g);
                    }
                }
            }
        }
    }

    fn add_dense(&mut self, id: ParamId, g: &[f64]) {
        let (rows, cols) = self.shapes[id.index()];
        let block = &mut self.blocks[id.index()];
        if let GradBlock::Rows(_) | GradBlock::Zero = block {
            let dense = match std::mem::replace(block, GradBlock::Zero) {
                GradBlock::Rows(rs) => {
                    let mut d = vec![0.0; rows * cols];
                    for (r, v) in rs {
                        d[r * cols..(r + 1) * cols].copy_from_slice(&v);
                    }
                    d
                }
                _ => vec![0.0; rows * cols],
            };
            *block = GradBlock::Dense(dense);
        }
        if let GradBlock::Dense(d) = block {
            add_into(d, g);
        }
    }

    fn add_row(&mut self, id: ParamId, row: usize, g: &[f64]) {
        let (_, cols) = self.shapes[id.index()];
        let block = &mut self.blocks[id.index()];
        match block {
            GradBlock::Zero => {
                let mut rs = BTreeMap::new();
                rs.insert(row, g.to_vec());
                *block = GradBlock::Rows(rs);
            }
            GradBlock::Rows(rs) => add_into(rs.entry(row).or_insert_with(|| vec![0.0; cols]), g),
            GradBlock::Dense(d) => add_into(&mut d[row * cols..(row + 1) * cols], g),
        }
    }

    fn add_outer(&mut self, id: ParamId, dy: &[f64], x: &[f64]) {
        let (rows, cols) = self.shapes[id.index()];
        let block = &mut self.blocks[id.index()];
        if !matches!(block, GradBlock::Dense(_)) {
            let mut dense = vec![0.0; rows * cols];
            if let GradBlock::Rows(rs) = block {
                for (r, v) in rs.iter() {
                    dense[r * cols..(r + 1) * cols].copy_from_slice(v);
                }
            }
            *block = GradBlock::Dense(dense);
        }
        if let GradBlock::Dense(d) = block {
            for (i, &g) in dy.iter().enumerate() {
                if g != 0.0 {
                    for (dv, xv) in d[i * cols..(i + 1) * cols].iter_mut().zip(x) {
                        *dv += g * xv;
                    }
                }
            }
        }
    }
}

/// Convenience for reading a node as an owned [`Vector`].
pub fn to_vector(tape: &Tape<'_>, v: Var) -> Result<Vector> {
    Ok(Vector::new(tape.value(v)?.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn store_with(values: &[(&str, Matrix)]) -> (ParamStore, Vec<ParamId>) {
        let mut s = ParamStore::new();
        let ids = values
            .iter()
            .map(|(n, m)| s.add(*n, m.clone(), false).unwrap())
            .collect();
        (s, ids)
    }

    #[test]
    fn linear_loss_gradient_is_input() {
        let (store, ids) = store_with(&[("w", Matrix::from_vec(3, 1, vec![0.3, -0.2, 0.9]).unwrap())]);
        let mut t = Tape::new(&store);
        let w = t.param(ids[0]);
        let x = t.constant(vec![1.0, 2.0, -3.0]);
        let loss = t.dot(w, x).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(ids[0]).as_slice(), &[1.0, 2.0, -3.0]);
    }

    #[test]
    fn sigmoid_at_zero_has_quarter_slope() {
        // w·x = 0 with nonzero x.
        let (store, ids) = store_with(&[("w", Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap())]);
        let mut t = Tape::new(&store);
        let w = t.param(ids[0]);
        let x = t.constant(vec![2.0, -2.0]);
        let z = t.dot(w, x).unwrap();
        let loss = t.sigmoid(z).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(ids[0]).as_slice(), &[0.5, -0.5]);
    }

    #[test]
    fn untouched_parameter_gets_zero() {
        let (store, ids) = store_with(&[
            ("a", Matrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap()),
            ("b", Matrix::zeros(4, 3)),
        ]);
        let mut t = Tape::new(&store);
        let a = t.param(ids[0]);
        let loss = t.dot(a, a).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.block(ids[1]), &GradBlock::Zero);
        assert_eq!(g.get(ids[1]), Matrix::zeros(4, 3));
        assert_eq!(g.get(ids[0]).as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_and_foreign_loss() {
        let store = ParamStore::new();
        let mut t1 = Tape::new(&store);
        let v = t1.constant(vec![1.0, 2.0]);
        assert!(matches!(t1.backward(v), Err(Error::Tape(_))));
        let mut t2 = Tape::new(&store);
        let s = t2.constant(vec![1.0]);
        assert!(matches!(t1.backward(s), Err(Error::Tape(_))));
    }

    #[test]
    fn repeated_use_accumulates() {
        let (store, ids) = store_with(&[("w", Matrix::from_vec(1, 2, vec![0.5, -1.0]).unwrap())]);
        let mut t = Tape::new(&store);
        let x1 = t.constant(vec![1.0, 0.0]);
        let x2 = t.constant(vec![0.0, 3.0]);
        let y1 = t.affine(ids[0], x1, None).unwrap();
        let y2 = t.affine(ids[0], x2, None).unwrap();
        let loss = t.add(y1, y2).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(ids[0]).as_slice(), &[1.0, 3.0]);
    }

    #[test]
    fn row_gradients_stay_sparse() {
        let (store, ids) = store_with(&[("E", Matrix::from_vec(4, 2, (0..8).map(f64::from).collect()).unwrap())]);
        let mut t = Tape::new(&store);
        let r1 = t.row(ids[0], 1).unwrap();
        let r3 = t.row(ids[0], 3).unwrap();
        let s = t.add(r1, r3).unwrap();
        let ones = t.constant(vec![1.0, 1.0]);
        let loss = t.dot(s, ones).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.touched_rows(ids[0]), vec![1, 3]);
        assert_eq!(g.get(ids[0]).row(0), &[0.0, 0.0]);
        assert_eq!(g.get(ids[0]).row(1), &[1.0, 1.0]);
    }

    // Builds a random scalar function exercising every primitive; returns the
    // loss value and the gradients.
    fn composite(store: &ParamStore, ids: &[ParamId], scale: f64) -> (f64, Gradients) {
        let mut t = Tape::new(store);
        let x = t.constant(vec![0.3, -0.7, 0.2]);
        let b = t.param(ids[1]);
        let a = t.affine(ids[0], x, Some(b)).unwrap();
        let s = t.sigmoid(a).unwrap();
        let th = t.tanh(a).unwrap();
        let h = t.hadamard(s, th).unwrap();
        let sum = t.add(h, s).unwrap();
        let row = t.row(ids[2], 1).unwrap();
        let cat = t.concat(&[sum, row]).unwrap();
        let sl = t.slice(cat, 1, 4).unwrap();
        let sl2 = t.slice(cat, 0, 4).unwrap();
        let pooled = t.pool(&[sl, sl2]).unwrap();
        let logits = t.affine(ids[3], pooled, None).unwrap();
        let nll = t.neg_log_softmax(logits, 1).unwrap();
        let d = t.dot(sl, sl2).unwrap();
        let total = t.add(nll, d).unwrap();
        let loss = t.scale(total, scale).unwrap();
        let v = t.value(loss).unwrap()[0];
        (v, t.backward(loss).unwrap())
    }

    fn random_store(seed: u64) -> (ParamStore, Vec<ParamId>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = |r: usize, c: usize| {
            Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
        };
        let values = vec![("W", m(3, 3)), ("b", m(3, 1)), ("E", m(3, 2)), ("V", m(3, 16))];
        let mut s = ParamStore::new();
        let ids = values.into_iter().map(|(n, v)| s.add(n, v, false).unwrap()).collect();
        (s, ids)
    }

    #[test]
    fn every_primitive_matches_central_differences() {
        for seed in 0..5 {
            let (mut store, ids) = random_store(seed);
            let (_, grads) = composite(&store, &ids, 1.0);
            for &id in &ids {
                for k in 0..store.value(id).as_slice().len() {
                    let orig = store.value(id).as_slice()[k];
                    let h = 1e-4;
                    store.value_mut(id).as_mut_slice()[k] = orig + h;
                    let (plus, _) = composite(&store, &ids, 1.0);
                    store.value_mut(id).as_mut_slice()[k] = orig - h;
                    let (minus, _) = composite(&store, &ids, 1.0);
                    store.value_mut(id).as_mut_slice()[k] = orig;
                    let numeric = (plus - minus) / (2.0 * h);
                    let analytic = grads.at(id, k);
                    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                    assert!(
                        (analytic - numeric).abs() / denom <= 1e-4,
                        "seed {seed} param {} k {k}: {analytic} vs {numeric}",
                        store.get(id).name
                    );
                }
            }
        }
    }

    #[test]
    fn backward_is_deterministic_and_linear() {
        let (store, ids) = random_store(11);
        let (_, g1) = composite(&store, &ids, 1.0);
        let (_, g1b) = composite(&store, &ids, 1.0);
        assert_eq!(g1, g1b);
        for alpha in [2.0, -1.0] {
            let (_, ga) = composite(&store, &ids, alpha);
            for &id in &ids {
                let a = g1.get(id);
                let b = ga.get(id);
                for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                    assert!((x * alpha - y).abs() <= 1e-15 * x.abs().max(1.0));
                }
            }
        }
    }
}
