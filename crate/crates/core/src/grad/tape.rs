//! Graph construction, forward evaluation and reverse-mode differentiation.
//!
//! A [`Tape`] is a static, topologically ordered list of primitive
//! operations over dense `f64` matrices (rows = batch, cols = features).
//! Leaves are either named inputs or named parameters; both are supplied at
//! evaluation time through [`Bindings`]. [`forward`] caches every node value
//! and [`backward`] sweeps the tape in reverse to produce [`Gradients`] for
//! the parameter leaves.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};

use ndarray::{s, Array2, Axis, Zip};

use super::{Matrix, LOG_PROB_FLOOR, PROB_FLOOR};
use crate::error::{Error, Result};

/// Index of a node inside a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafKind {
    Input,
    Param,
}

/// Primitive operations. Every operand precedes its consumer on the tape.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Leaf { kind: LeafKind, name: String },
    MatMul(NodeId, NodeId),
    /// `x (n×m) + b (1×m)`, broadcast over rows.
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `scale * x + shift`, elementwise.
    Affine { x: NodeId, scale: f64, shift: f64 },
    LeakyRelu { x: NodeId, slope: f64 },
    Tanh(NodeId),
    Exp(NodeId),
    /// `ln(max(x, PROB_FLOOR))`.
    Log(NodeId),
    /// Logistic function clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]`.
    Sigmoid(NodeId),
    /// Row-wise softmax.
    Softmax(NodeId),
    /// Row-wise log-softmax via log-sum-exp, floored at `ln(PROB_FLOOR)`.
    LogSoftmax(NodeId),
    SliceCols { x: NodeId, start: usize, end: usize },
    /// Row-wise `sum_j |a_ij - b_ij|`, an `n×1` column.
    RowL1Diff(NodeId, NodeId),
    /// Row-wise sum, an `n×1` column.
    RowSum(NodeId),
    /// Mean of all entries, `1×1`.
    Mean(NodeId),
    /// Sum of all entries, `1×1`.
    Sum(NodeId),
    /// Identity on values, blocks gradients.
    StopGradient(NodeId),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf { kind: LeafKind::Input, .. } => "input",
            Op::Leaf { kind: LeafKind::Param, .. } => "param",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Affine { .. } => "affine",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Sigmoid(_) => "sigmoid",
            Op::Softmax(_) => "softmax",
            Op::LogSoftmax(_) => "log_softmax",
            Op::SliceCols { .. } => "slice_cols",
            Op::RowL1Diff(..) => "row_l1_diff",
            Op::RowSum(_) => "row_sum",
            Op::Mean(_) => "mean",
            Op::Sum(_) => "sum",
            Op::StopGradient(_) => "stop_gradient",
        }
    }

    fn operands(&self) -> Operands {
        match *self {
            Op::Leaf { .. } => Operands::None,
            Op::MatMul(a, b)
            | Op::AddBias(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::RowL1Diff(a, b) => Operands::Two(a, b),
            Op::Affine { x, .. }
            | Op::LeakyRelu { x, .. }
            | Op::SliceCols { x, .. }
            | Op::Tanh(x)
            | Op::Exp(x)
            | Op::Log(x)
            | Op::Sigmoid(x)
            | Op::Softmax(x)
            | Op::LogSoftmax(x)
            | Op::RowSum(x)
            | Op::Mean(x)
            | Op::Sum(x)
            | Op::StopGradient(x) => Operands::One(x),
        }
    }
}

enum Operands {
    None,
    One(NodeId),
    Two(NodeId, NodeId),
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Op>,
    leaves: HashMap<String, NodeId>,
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

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0]
    }

    fn push(&mut self, op: Op) -> NodeId {
        if let Some(max) = match op.operands() {
            Operands::None => None,
            Operands::One(a) => Some(a.0),
            Operands::Two(a, b) => Some(a.0.max(b.0)),
        } {
            assert!(max < self.nodes.len(), "operand {max} not on tape");
        }
        self.nodes.push(op);
        NodeId(self.nodes.len() - 1)
    }

    fn leaf(&mut self, kind: LeafKind, name: &str) -> NodeId {
        if let Some(&id) = self.leaves.get(name) {
            match &self.nodes[id.0] {
                Op::Leaf { kind: k, .. } if *k == kind => return id,
                _ => panic!("leaf `{name}` declared as both input and parameter"),
            }
        }
        let id = self.push(Op::Leaf {
            kind,
            name: name.to_owned(),
        });
        self.leaves.insert(name.to_owned(), id);
        id
    }

    /// Declares (or reuses) a named input leaf. Inputs receive no gradient.
    pub fn input(&mut self, name: &str) -> NodeId {
        self.leaf(LeafKind::Input, name)
    }

    /// Declares (or reuses) a named parameter leaf.
    pub fn param(&mut self, name: &str) -> NodeId {
        self.leaf(LeafKind::Param, name)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul(a, b))
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        self.push(Op::AddBias(x, bias))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        self.push(Op::Affine { x, scale, shift })
    }

    pub fn scale(&mut self, x: NodeId, scale: f64) -> NodeId {
        self.affine(x, scale, 0.0)
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        self.push(Op::LeakyRelu { x, slope })
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Tanh(x))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Exp(x))
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Log(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sigmoid(x))
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Softmax(x))
    }

    pub fn log_softmax(&mut self, x: NodeId) -> NodeId {
        self.push(Op::LogSoftmax(x))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> NodeId {
        self.push(Op::SliceCols { x, start, end })
    }

    pub fn row_l1_diff(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::RowL1Diff(a, b))
    }

    pub fn row_sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::RowSum(x))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Mean(x))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sum(x))
    }

    pub fn stop_gradient(&mut self, x: NodeId) -> NodeId {
        self.push(Op::StopGradient(x))
    }

    /// Names of all parameter leaves, in tape order.
    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().filter_map(|op| match op {
            Op::Leaf {
                kind: LeafKind::Param,
                name,
            } => Some(name.as_str()),
            _ => None,
        })
    }
}

/// Leaf values for one evaluation, borrowed from their owners.
#[derive(Debug, Default, Clone)]
pub struct Bindings<'a> {
    map: HashMap<String, &'a Matrix>,
}

impl<'a> Bindings<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, name: impl Into<String>, value: &'a Matrix) -> &mut Self {
        self.map.insert(name.into(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&'a Matrix> {
        self.map.get(name).copied()
    }
}

/// Cached node values from a forward pass.
#[derive(Debug, Clone)]
pub struct Values<'a> {
    values: Vec<Cow<'a, Matrix>>,
}

impl Values<'_> {
    pub fn get(&self, id: NodeId) -> &Matrix {
        &self.values[id.0]
    }

    /// The single entry of a `1×1` node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.get(id);
        assert_eq!(v.dim(), (1, 1), "node {} is not scalar", id.0);
        v[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Owned copies of every node value, in tape order.
    pub fn to_vec(&self) -> Vec<Matrix> {
        self.values.iter().map(|v| v.as_ref().clone()).collect()
    }
}

/// Gradient of a scalar with respect to each parameter, keyed by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients(BTreeMap<String, Matrix>);

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.0.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, grad: Matrix) {
        self.0.insert(name.into(), grad);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Keeps only gradients whose name satisfies `keep`.
    pub fn retain(&mut self, mut keep: impl FnMut(&str) -> bool) {
        self.0.retain(|k, _| keep(k));
    }
}

fn shape_str(m: &Matrix) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

fn mismatch(node: usize, op: &Op, expected: String, actual: &Matrix) -> Error {
    Error::ShapeMismatch {
        node,
        op: op.name(),
        expected,
        actual: shape_str(actual),
    }
}

fn same_shape(node: usize, op: &Op, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.dim() == b.dim() {
        Ok(())
    } else {
        Err(mismatch(node, op, shape_str(a), b))
    }
}

fn row_softmax(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    out
}

fn row_log_softmax_raw(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

fn sigmoid_clamped(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

fn eval_node(index: usize, op: &Op, vals: &[Cow<'_, Matrix>]) -> Result<Matrix> {
    let v = |id: NodeId| -> &Matrix { vals[id.0].as_ref() };
    let out = match *op {
        Op::Leaf { .. } => unreachable!("leaves are bound, not evaluated"),
        Op::MatMul(a, b) => {
            let (a, b) = (v(a), v(b));
            if a.ncols() != b.nrows() {
                return Err(mismatch(index, op, format!("{}x_", a.ncols()), b));
            }
            a.dot(b)
        }
        Op::AddBias(x, bias) => {
            let (x, bias) = (v(x), v(bias));
            if bias.nrows() != 1 || bias.ncols() != x.ncols() {
                return Err(mismatch(index, op, format!("1x{}", x.ncols()), bias));
            }
            x + bias
        }
        Op::Add(a, b) => {
            same_shape(index, op, v(a), v(b))?;
            v(a) + v(b)
        }
        Op::Sub(a, b) => {
            same_shape(index, op, v(a), v(b))?;
            v(a) - v(b)
        }
        Op::Mul(a, b) => {
            same_shape(index, op, v(a), v(b))?;
            v(a) * v(b)
        }
        Op::Affine { x, scale, shift } => v(x).mapv(|e| scale * e + shift),
        Op::LeakyRelu { x, slope } => v(x).mapv(|e| if e > 0.0 { e } else { slope * e }),
        Op::Tanh(x) => v(x).mapv(f64::tanh),
        Op::Exp(x) => v(x).mapv(f64::exp),
        Op::Log(x) => v(x).mapv(|e| e.max(PROB_FLOOR).ln()),
        Op::Sigmoid(x) => v(x).mapv(sigmoid_clamped),
        Op::Softmax(x) => row_softmax(v(x)),
        Op::LogSoftmax(x) => row_log_softmax_raw(v(x)).mapv(|e| e.max(LOG_PROB_FLOOR)),
        Op::SliceCols { x, start, end } => {
            let x = v(x);
            if start >= end || end > x.ncols() {
                return Err(mismatch(index, op, format!("_x>={end}"), x));
            }
            x.slice(s![.., start..end]).to_owned()
        }
        Op::RowL1Diff(a, b) => {
            let (a, b) = (v(a), v(b));
            same_shape(index, op, a, b)?;
            let mut out = Array2::zeros((a.nrows(), 1));
            Zip::from(out.rows_mut())
                .and(a.rows())
                .and(b.rows())
                .for_each(|mut o, ra, rb| {
                    o[0] = ra.iter().zip(rb.iter()).map(|(p, q)| (p - q).abs()).sum();
                });
            out
        }
        Op::RowSum(x) => v(x).sum_axis(Axis(1)).insert_axis(Axis(1)),
        Op::Mean(x) => {
            let x = v(x);
            if x.is_empty() {
                return Err(mismatch(index, op, "nonempty".into(), x));
            }
            Array2::from_elem((1, 1), x.sum() / x.len() as f64)
        }
        Op::Sum(x) => Array2::from_elem((1, 1), v(x).sum()),
        Op::StopGradient(x) => v(x).clone(),
    };
    if out.iter().all(|e| e.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NonFinite {
            node: index,
            op: op.name(),
        })
    }
}

/// Evaluates every node of `tape` given leaf values.
pub fn forward<'a>(tape: &Tape, bindings: &Bindings<'a>) -> Result<Values<'a>> {
    let mut values: Vec<Cow<'a, Matrix>> = Vec::with_capacity(tape.len());
    for (index, op) in tape.nodes.iter().enumerate() {
        let value = match op {
            Op::Leaf { name, .. } => {
                let m = bindings
                    .get(name)
                    .ok_or_else(|| Error::Unbound(name.clone()))?;
                if !m.iter().all(|e| e.is_finite()) {
                    return Err(Error::NonFinite {
                        node: index,
                        op: op.name(),
                    });
                }
                Cow::Borrowed(m)
            }
            _ => Cow::Owned(eval_node(index, op, &values)?),
        };
        values.push(value);
    }
    Ok(Values { values })
}

/// Gradients of the scalar `loss` with respect to every parameter leaf.
pub fn backward(tape: &Tape, values: &Values<'_>, loss: NodeId) -> Result<Gradients> {
    backward_filtered(tape, values, loss, |_| true)
}

/// Like [`backward`], restricted to parameters whose name satisfies `wants`.
///
/// Nodes that cannot reach a wanted parameter are skipped entirely. Wanted
/// parameters unreachable from `loss` get an all-zero gradient.
pub fn backward_filtered(
    tape: &Tape,
    values: &Values<'_>,
    loss: NodeId,
    wants: impl Fn(&str) -> bool,
) -> Result<Gradients> {
    if values.len() != tape.len() {
        return Err(Error::NotEvaluated {
            evaluated: values.len(),
            nodes: tape.len(),
        });
    }
    let lv = values.get(loss);
    if lv.dim() != (1, 1) {
        return Err(Error::NotScalar {
            node: loss.0,
            rows: lv.nrows(),
            cols: lv.ncols(),
        });
    }

    let n = tape.len();
    let mut needs = vec![false; n];
    for (i, op) in tape.nodes.iter().enumerate() {
        needs[i] = match op {
            Op::Leaf {
                kind: LeafKind::Param,
                name,
            } => wants(name),
            Op::Leaf { .. } | Op::StopGradient(_) => false,
            other => match other.operands() {
                Operands::None => false,
                Operands::One(a) => needs[a.0],
                Operands::Two(a, b) => needs[a.0] || needs[b.0],
            },
        };
    }

    let mut adj: Vec<Option<Matrix>> = vec![None; n];
    if needs[loss.0] {
        adj[loss.0] = Some(Array2::ones((1, 1)));
    }

    fn accumulate(adj: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
        match &mut adj[id.0] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }

    for i in (0..=loss.0).rev() {
        if !needs[i] {
            continue;
        }
        let Some(g) = adj[i].take() else { continue };
        let op = &tape.nodes[i];
        let out = values.values[i].as_ref();
        let v = |id: NodeId| -> &Matrix { values.get(id) };
        match *op {
            Op::Leaf { .. } => {
                adj[i] = Some(g);
            }
            Op::MatMul(a, b) => {
                if needs[a.0] {
                    accumulate(&mut adj, a, g.dot(&v(b).t()));
                }
                if needs[b.0] {
                    accumulate(&mut adj, b, v(a).t().dot(&g));
                }
            }
            Op::AddBias(x, bias) => {
                if needs[bias.0] {
                    accumulate(&mut adj, bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if needs[x.0] {
                    accumulate(&mut adj, x, g);
                }
            }
            Op::Add(a, b) => {
                if needs[a.0] {
                    accumulate(&mut adj, a, g.clone());
                }
                if needs[b.0] {
                    accumulate(&mut adj, b, g);
                }
            }
            Op::Sub(a, b) => {
                if needs[a.0] {
                    accumulate(&mut adj, a, g.clone());
                }
                if needs[b.0] {
                    accumulate(&mut adj, b, -g);
                }
            }
            Op::Mul(a, b) => {
                if needs[a.0] {
                    accumulate(&mut adj, a, &g * v(b));
                }
                if needs[b.0] {
                    accumulate(&mut adj, b, &g * v(a));
                }
            }
            Op::Affine { x, scale, .. } => accumulate(&mut adj, x, g * scale),
            Op::LeakyRelu { x, slope } => {
                let mut d = g;
                Zip::from(&mut d).and(v(x)).for_each(|d, &e| {
                    if e <= 0.0 {
                        *d *= slope;
                    }
                });
                accumulate(&mut adj, x, d);
            }
            Op::Tanh(x) => {
                let mut d = g;
                Zip::from(&mut d).and(out).for_each(|d, &y| *d *= 1.0 - y * y);
                accumulate(&mut adj, x, d);
            }
            Op::Exp(x) => accumulate(&mut adj, x, g * out),
            Op::Log(x) => {
                let mut d = g;
                Zip::from(&mut d).and(v(x)).for_each(|d, &e| {
                    *d = if e > PROB_FLOOR { *d / e } else { 0.0 };
                });
                accumulate(&mut adj, x, d);
            }
            Op::Sigmoid(x) => {
                let mut d = g;
                Zip::from(&mut d).and(out).for_each(|d, &y| {
                    *d = if y > PROB_FLOOR && y < 1.0 - PROB_FLOOR {
                        *d * y * (1.0 - y)
                    } else {
                        0.0
                    };
                });
                accumulate(&mut adj, x, d);
            }
            Op::Softmax(x) => {
                let mut d = g;
                Zip::from(d.rows_mut())
                    .and(out.rows())
                    .for_each(|mut dr, yr| {
                        let dot: f64 = dr.iter().zip(yr.iter()).map(|(a, b)| a * b).sum();
                        Zip::from(&mut dr).and(&yr).for_each(|d, &y| *d = y * (*d - dot));
                    });
                accumulate(&mut adj, x, d);
            }
            Op::LogSoftmax(x) => {
                let probs = row_softmax(v(x));
                let mut d = g;
                Zip::from(&mut d).and(out).for_each(|d, &y| {
                    if y <= LOG_PROB_FLOOR {
                        *d = 0.0;
                    }
                });
                Zip::from(d.rows_mut())
                    .and(probs.rows())
                    .for_each(|mut dr, pr| {
                        let total = dr.sum();
                        Zip::from(&mut dr).and(&pr).for_each(|d, &p| *d -= p * total);
                    });
                accumulate(&mut adj, x, d);
            }
            Op::SliceCols { x, start, end } => {
                let mut d = Array2::zeros(v(x).raw_dim());
                d.slice_mut(s![.., start..end]).assign(&g);
                accumulate(&mut adj, x, d);
            }
            Op::RowL1Diff(a, b) => {
                let mut d = v(a) - v(b);
                Zip::from(d.rows_mut()).and(g.rows()).for_each(|mut dr, gr| {
                    let gi = gr[0];
                    dr.mapv_inplace(|e| {
                        if e > 0.0 {
                            gi
                        } else if e < 0.0 {
                            -gi
                        } else {
                            0.0
                        }
                    });
                });
                if needs[b.0] {
                    accumulate(&mut adj, b, -&d);
                }
                if needs[a.0] {
                    accumulate(&mut adj, a, d);
                }
            }
            Op::RowSum(x) => {
                let shape = v(x).raw_dim();
                let d = g.broadcast(shape).expect("column broadcast").to_owned();
                accumulate(&mut adj, x, d);
            }
            Op::Mean(x) => {
                let shape = v(x).raw_dim();
                let scale = g[[0, 0]] / v(x).len() as f64;
                accumulate(&mut adj, x, Array2::from_elem(shape, scale));
            }
            Op::Sum(x) => {
                let shape = v(x).raw_dim();
                accumulate(&mut adj, x, Array2::from_elem(shape, g[[0, 0]]));
            }
            Op::StopGradient(_) => {}
        }
    }

    let mut grads = Gradients::new();
    for (i, op) in tape.nodes.iter().enumerate() {
        if let Op::Leaf {
            kind: LeafKind::Param,
            name,
        } = op
        {
            if !wants(name) {
                continue;
            }
            let g = adj[i]
                .take()
                .unwrap_or_else(|| Array2::zeros(values.get(NodeId(i)).raw_dim()));
            grads.insert(name.clone(), g);
        }
    }
    Ok(grads)
}
