//! Reverse-mode automatic differentiation over explicit computation graphs.
//!
//! A [`Graph`] is an arena of vector-valued nodes built define-by-run: every
//! builder evaluates its node eagerly, so values are always current after
//! construction. Graphs are also re-evaluable: overwrite inputs with
//! [`Graph::set_leaf`] and call [`Graph::recompute`], which lets training
//! loops build a loss graph once and re-run it with fresh data each step.
//!
//! Backpropagation comes in two flavours. [`Graph::grad`] returns plain
//! gradient values. [`Graph::grad_as_graph`] instead *emits the backward pass
//! as new graph nodes*, so the gradient itself stays differentiable — that is
//! what makes a gradient-penalty term trainable with respect to the
//! discriminator weights (the penalty contains a gradient norm that must be
//! differentiated again).

mod adam;

pub use adam::AdamState;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("gradient output must be a scalar node, got length {0}")]
    NonScalarOutput(usize),
    #[error("node id {0} is out of bounds for this graph")]
    UnknownNode(usize),
    #[error("node id {0} is not a leaf")]
    NotALeaf(usize),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

/// Handle to a node inside one specific [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    /// Mutable input (parameter or data); the only node kind `set_leaf` accepts.
    Leaf,
    /// Immutable input.
    Const,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    /// Compile-time scalar times vector.
    Scale(f64, NodeId),
    /// Scalar node times vector node.
    SMul(NodeId, NodeId),
    Dot(NodeId, NodeId),
    /// `w` is a row-major `rows x cols` matrix stored flat; output `W x`.
    MatVec {
        w: NodeId,
        rows: usize,
        cols: usize,
        x: NodeId,
    },
    /// Output `W^T x` (length `cols`).
    MatVecT {
        w: NodeId,
        rows: usize,
        cols: usize,
        x: NodeId,
    },
    /// Flattened outer product `a b^T`, row-major with `a` indexing rows.
    Outer(NodeId, NodeId),
    /// `W x + b` in one node.
    Affine {
        w: NodeId,
        rows: usize,
        cols: usize,
        x: NodeId,
        b: NodeId,
    },
    Tanh(NodeId),
    LeakyRelu {
        a: NodeId,
        slope: f64,
    },
    /// Elementwise derivative of the leaky rectifier; its own derivative is zero.
    LeakyStep {
        a: NodeId,
        slope: f64,
    },
    Square(NodeId),
    Sqrt(NodeId),
    Abs(NodeId),
    /// Elementwise sign with sign(0) = 0; derivative treated as zero.
    Sign(NodeId),
    Sum(NodeId),
    /// Euclidean norm, scalar output.
    Norm(NodeId),
    /// Elementwise Huber function with knee `delta`.
    Huber {
        a: NodeId,
        delta: f64,
    },
    /// Elementwise Huber derivative, clamp(a/delta, -1, 1).
    HuberGrad {
        a: NodeId,
        delta: f64,
    },
    /// Second derivative band of Huber: 1/delta inside |a| < delta, else 0.
    HuberBand {
        a: NodeId,
        delta: f64,
    },
    Concat(Vec<NodeId>),
    Slice {
        a: NodeId,
        start: usize,
        len: usize,
    },
    /// Embed a vector into a zero vector at offset `start`; output length is
    /// fixed at construction.
    Pad {
        a: NodeId,
        start: usize,
    },
    /// Repeat a scalar; output length is fixed at construction.
    Broadcast(NodeId),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Vec<f64>,
}

/// Arena-allocated computation graph over `f64` vectors.
///
/// Construction order is the topological order: operands always precede their
/// consumers, so a single forward sweep re-evaluates everything.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Cached value of a node.
    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    /// Value of a length-1 node.
    pub fn scalar_value(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.len(), 1, "scalar_value on node of length {}", v.len());
        v[0]
    }

    pub fn len(&self, id: NodeId) -> usize {
        self.nodes[id.0].value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].op, Op::Leaf)
    }

    /// Overwrite a leaf's value. Downstream nodes are stale until
    /// [`Graph::recompute`] runs.
    pub fn set_leaf(&mut self, id: NodeId, vals: &[f64]) -> Result<(), DiffError> {
        if id.0 >= self.nodes.len() {
            return Err(DiffError::UnknownNode(id.0));
        }
        if !matches!(self.nodes[id.0].op, Op::Leaf) {
            return Err(DiffError::NotALeaf(id.0));
        }
        if vals.len() != self.nodes[id.0].value.len() {
            return Err(DiffError::LengthMismatch(format!(
                "set_leaf: node has length {}, got {}",
                self.nodes[id.0].value.len(),
                vals.len()
            )));
        }
        self.nodes[id.0].value.copy_from_slice(vals);
        Ok(())
    }

    /// Re-evaluate every non-input node in topological order, in place.
    /// With unchanged leaves this reproduces the cached values bit-for-bit.
    pub fn recompute(&mut self) {
        for i in 0..self.nodes.len() {
            let (done, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            eval_into(&node.op, done, &mut node.value);
        }
    }

    /// Drop every node with index >= `keep`; used to undo temporary backward
    /// emission. Callers must not retain ids past the truncation point.
    pub fn truncate(&mut self, keep: usize) {
        self.nodes.truncate(keep);
    }

    fn push(&mut self, op: Op, len: usize) -> NodeId {
        let mut value = vec![0.0; len];
        eval_into(&op, &self.nodes, &mut value);
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    // ----- input nodes -----

    pub fn leaf(&mut self, vals: Vec<f64>) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value: vals,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf_scalar(&mut self, v: f64) -> NodeId {
        self.leaf(vec![v])
    }

    pub fn constant(&mut self, vals: Vec<f64>) -> NodeId {
        self.nodes.push(Node {
            op: Op::Const,
            value: vals,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant_scalar(&mut self, v: f64) -> NodeId {
        self.constant(vec![v])
    }

    // ----- elementwise and linear algebra builders -----
    //
    // Shape mismatches are programmer errors and panic.

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let n = self.same_len(a, b, "add");
        self.push(Op::Add(a, b), n)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let n = self.same_len(a, b, "sub");
        self.push(Op::Sub(a, b), n)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let n = self.same_len(a, b, "mul");
        self.push(Op::Mul(a, b), n)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let n = self.same_len(a, b, "div");
        self.push(Op::Div(a, b), n)
    }

    pub fn scale(&mut self, c: f64, a: NodeId) -> NodeId {
        let n = self.len(a);
        self.push(Op::Scale(c, a), n)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.scale(-1.0, a)
    }

    /// Scalar node times vector node.
    pub fn smul(&mut self, s: NodeId, a: NodeId) -> NodeId {
        assert_eq!(self.len(s), 1, "smul: scalar operand must have length 1");
        let n = self.len(a);
        self.push(Op::SMul(s, a), n)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_len(a, b, "dot");
        self.push(Op::Dot(a, b), 1)
    }

    pub fn matvec(&mut self, w: NodeId, rows: usize, cols: usize, x: NodeId) -> NodeId {
        assert_eq!(self.len(w), rows * cols, "matvec: matrix length mismatch");
        assert_eq!(self.len(x), cols, "matvec: vector length mismatch");
        self.push(Op::MatVec { w, rows, cols, x }, rows)
    }

    pub fn matvec_t(&mut self, w: NodeId, rows: usize, cols: usize, x: NodeId) -> NodeId {
        assert_eq!(self.len(w), rows * cols, "matvec_t: matrix length mismatch");
        assert_eq!(self.len(x), rows, "matvec_t: vector length mismatch");
        self.push(Op::MatVecT { w, rows, cols, x }, cols)
    }

    pub fn outer(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let n = self.len(a) * self.len(b);
        self.push(Op::Outer(a, b), n)
    }

    /// `W x + b` for a row-major flat matrix node.
    pub fn affine(&mut self, w: NodeId, rows: usize, cols: usize, x: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.len(w), rows * cols, "affine: matrix length mismatch");
        assert_eq!(self.len(x), cols, "affine: input length mismatch");
        assert_eq!(self.len(b), rows, "affine: bias length mismatch");
        self.push(Op::Affine { w, rows, cols, x, b }, rows)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let n = self.len(a);
        self.push(Op::Tanh(a), n)
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        let n = self.len(a);
        self.push(Op::LeakyRelu { a, slope }, n)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let n = self.len(a);
        self.push(Op::Square(a), n)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let n = self.len(a);
        self.push(Op::Sqrt(a), n)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let n = self.len(a);
        self.push(Op::Abs(a), n)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a), 1)
    }

    pub fn norm(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Norm(a), 1)
    }

    /// Elementwise Huber function: `|p| - delta/2` outside the knee,
    /// `p^2 / (2 delta)` inside.
    pub fn huber(&mut self, a: NodeId, delta: f64) -> NodeId {
        assert!(delta > 0.0, "huber: knee must be positive");
        let n = self.len(a);
        self.push(Op::Huber { a, delta }, n)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat: empty part list");
        let n = parts.iter().map(|&p| self.len(p)).sum();
        self.push(Op::Concat(parts.to_vec()), n)
    }

    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        assert!(start + len <= self.len(a), "slice: out of bounds");
        self.push(Op::Slice { a, start, len }, len)
    }

    pub fn pad(&mut self, a: NodeId, start: usize, total: usize) -> NodeId {
        assert!(start + self.len(a) <= total, "pad: out of bounds");
        self.push(Op::Pad { a, start }, total)
    }

    pub fn broadcast(&mut self, s: NodeId, n: usize) -> NodeId {
        assert_eq!(self.len(s), 1, "broadcast: operand must have length 1");
        self.push(Op::Broadcast(s), n)
    }

    fn same_len(&self, a: NodeId, b: NodeId, what: &str) -> usize {
        let (la, lb) = (self.len(a), self.len(b));
        assert_eq!(la, lb, "{what}: operand lengths {la} and {lb} differ");
        la
    }

    // ----- backpropagation -----

    /// Gradient of a scalar `output` with respect to each requested leaf,
    /// as plain values. The graph is left unchanged.
    ///
    /// Uses the values currently cached in the graph; call
    /// [`Graph::recompute`] first if leaves were overwritten.
    pub fn grad(&mut self, output: NodeId, leaves: &[NodeId]) -> Result<Vec<Vec<f64>>, DiffError> {
        let keep = self.nodes.len();
        let ids = self.grad_as_graph(output, leaves)?;
        let out = ids.iter().map(|id| self.nodes[id.0].value.clone()).collect();
        self.truncate(keep);
        Ok(out)
    }

    /// Emit the backward pass of a scalar `output` as graph nodes and return,
    /// for each requested leaf, the node computing `d output / d leaf`.
    ///
    /// The returned nodes participate in further differentiation like any
    /// other node, which is how second-order terms (a penalty on a gradient
    /// norm, say) stay trainable.
    pub fn grad_as_graph(
        &mut self,
        output: NodeId,
        leaves: &[NodeId],
    ) -> Result<Vec<NodeId>, DiffError> {
        if output.0 >= self.nodes.len() {
            return Err(DiffError::UnknownNode(output.0));
        }
        if self.len(output) != 1 {
            return Err(DiffError::NonScalarOutput(self.len(output)));
        }
        for &l in leaves {
            if l.0 >= self.nodes.len() {
                return Err(DiffError::UnknownNode(l.0));
            }
            if !matches!(self.nodes[l.0].op, Op::Leaf) {
                return Err(DiffError::NotALeaf(l.0));
            }
        }

        let n0 = self.nodes.len();

        // Restrict propagation to nodes that actually depend on a requested
        // leaf, so reused graphs carry no dead backward nodes.
        let mut needs = vec![false; n0];
        for &l in leaves {
            needs[l.0] = true;
        }
        for i in 0..n0 {
            if !needs[i] {
                needs[i] = each_operand_any(&self.nodes[i].op, |o| needs[o.0]);
            }
        }

        let mut adj: Vec<Option<NodeId>> = vec![None; n0];
        if needs[output.0] {
            let seed = self.constant_scalar(1.0);
            adj[output.0] = Some(seed);
        }

        for i in (0..n0).rev() {
            let Some(g) = adj[i] else { continue };
            let op = self.nodes[i].op.clone();
            let y = NodeId(i);
            match op {
                Op::Leaf | Op::Const => {}
                Op::Add(a, b) => {
                    self.accumulate(&mut adj, &needs, a, g);
                    self.accumulate(&mut adj, &needs, b, g);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut adj, &needs, a, g);
                    if needs[b.0] {
                        let db = self.neg(g);
                        self.accumulate(&mut adj, &needs, b, db);
                    }
                }
                Op::Mul(a, b) => {
                    if needs[a.0] {
                        let da = self.mul(g, b);
                        self.accumulate(&mut adj, &needs, a, da);
                    }
                    if needs[b.0] {
                        let db = self.mul(g, a);
                        self.accumulate(&mut adj, &needs, b, db);
                    }
                }
                Op::Div(a, b) => {
                    if needs[a.0] {
                        let da = self.div(g, b);
                        self.accumulate(&mut adj, &needs, a, da);
                    }
                    if needs[b.0] {
                        // d/db (a/b) = -y/b with y = a/b
                        let q = self.div(y, b);
                        let gq = self.mul(g, q);
                        let db = self.neg(gq);
                        self.accumulate(&mut adj, &needs, b, db);
                    }
                }
                Op::Scale(c, a) => {
                    if needs[a.0] {
                        let da = self.scale(c, g);
                        self.accumulate(&mut adj, &needs, a, da);
                    }
                }
                Op::SMul(s, a) => {
                    if needs[s.0] {
                        let ds = self.dot(g, a);
                        self.accumulate(&mut adj, &needs, s, ds);
                    }
                    if needs[a.0] {
                        let da = self.smul(s, g);
                        self.accumulate(&mut adj, &needs, a, da);
                    }
                }
                Op::Dot(a, b) => {
                    if needs[a.0] {
                        let da = self.smul(g, b);
                        self.accumulate(&mut adj, &needs, a, da);
                    }
                    if needs[b.0] {
                        let db = self.smul(g, a);
                        self.accumulate(&mut adj, &needs, b, db);
                    }
                }
                Op::MatVec { w, rows, cols, x } => {
                    if needs[w.0] {
                        let dw = self.outer(g, x);
                        self.accumulate(&mut adj, &needs, w, dw);
                    }
                    if needs[x.0] {
                        let dx = self.matvec_t(w, rows, cols, g);
                        self.accumulate(&mut adj, &needs, x, dx);
                    }
                }
                Op::MatVecT { w, rows, cols, x } => {
                    if needs[w.0] {
                        let dw = self.outer(x, g);
                        self.accumulate(&mut adj, &needs, w, dw);
                    }
                    if needs[x.0] {
                        let dx = self.matvec(w, rows, cols, g);
                        self.accumulate(&mut adj, &needs, x, dx);
                    }
                }
                Op::Outer(a, b) => {
                    let (la, lb) = (self.len(a), self.len(b));
                    if needs[a.0] {
                        let da = self.matvec(g, la, lb, b);
                        self.accumulate(&mut adj, &needs, a, da);
                    }
                    if needs[b.0] {
                        let db = self.matvec_t(g, la, lb, a);
                        self.accumulate(&mut adj, &needs, b, db);
                    }
                }
                Op::Affine { w, rows, cols, x, b } => {
                    if needs[w.0] {
                        let dw = self.outer(g, x);
                        self.accumulate(&mut adj, &needs, w, dw);
                    }
                    if needs[x.0] {
                        let dx = self.matvec_t(w, rows, cols, g);
                        self.accumulate(&mut adj, &needs, x, dx);
                    }
                    self.accumulate(&mut adj, &needs, b, g);
                }
                Op::Tanh(a) => {
                    if needs[a.0] {
                        let ones = self.constant(vec![1.0; self.len(a)]);
                        let y2 = self.square(y);
                        let m = self.sub(ones, y2);
                        let da = self.mul(g, m);
                        self.accumulate(&mut adj, &needs, a, da);
                    }
                }
                Op::LeakyRelu { a, slope } => {
                    if needs[a.0] {
                        let n = self.len(a);
                        let mask = self.push(Op::LeakyStep { a, slope }, n);
                        let da = self.mul(g, mask);
                        self.accumulate(&mut adj, &needs, a, da);
                    }
                }
                Op::LeakyStep { .. } | Op::Sign(_) | Op::HuberBand { .. } => {
                    // Piecewise-constant; derivative is zero almost everywhere.
                }
                Op::Square(a) => {
                    if needs[a.0] {
                        let ga = self.mul(g, a);
                        let da = self.scale(2.0, ga);
                        self.accumulate(&mut adj, &needs, a, da);
                    }
                }
                Op::Sqrt(a) => {
                    if needs[a.0] {
                        let twoy = self.scale(2.0, y);
                        let da = self.div(g, twoy);
                        self.accumulate(&mut adj, &needs, a, da);
                    }
                }
                Op::Abs(a) => {
                    if needs[a.0] {
                        let n = self.len(a);
                        let s = self.push(Op::Sign(a), n);
                        let da = self.mul(g, s);
                        self.accumulate(&mut adj, &needs, a, da);
                    }
                }
                Op::Sum(a) => {
                    if needs[a.0] {
                        let da = self.broadcast(g, self.len(a));
                        self.accumulate(&mut adj, &needs, a, da);
                    }
                }
                Op::Norm(a) => {
                    if needs[a.0] {
                        let q = self.div(g, y);
                        let da = self.smul(q, a);
                        self.accumulate(&mut adj, &needs, a, da);
                    }
                }
                Op::Huber { a, delta } => {
                    if needs[a.0] {
                        let n = self.len(a);
                        let hg = self.push(Op::HuberGrad { a, delta }, n);
                        let da = self.mul(g, hg);
                        self.accumulate(&mut adj, &needs, a, da);
                    }
                }
                Op::HuberGrad { a, delta } => {
                    if needs[a.0] {
                        let n = self.len(a);
                        let band = self.push(Op::HuberBand { a, delta }, n);
                        let da = self.mul(g, band);
                        self.accumulate(&mut adj, &needs, a, da);
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in &parts {
                        let plen = self.len(p);
                        if needs[p.0] {
                            let dp = self.slice(g, off, plen);
                            self.accumulate(&mut adj, &needs, p, dp);
                        }
                        off += plen;
                    }
                }
                Op::Slice { a, start, len: _ } => {
                    if needs[a.0] {
                        let da = self.pad(g, start, self.len(a));
                        self.accumulate(&mut adj, &needs, a, da);
                    }
                }
                Op::Pad { a, start } => {
                    if needs[a.0] {
                        let da = self.slice(g, start, self.len(a));
                        self.accumulate(&mut adj, &needs, a, da);
                    }
                }
                Op::Broadcast(s) => {
                    if needs[s.0] {
                        let ds = self.sum(g);
                        self.accumulate(&mut adj, &needs, s, ds);
                    }
                }
            }
        }

        Ok(leaves
            .iter()
            .map(|&l| match adj[l.0] {
                Some(id) => id,
                None => {
                    let n = self.len(l);
                    self.constant(vec![0.0; n])
                }
            })
            .collect())
    }

    fn accumulate(
        &mut self,
        adj: &mut [Option<NodeId>],
        needs: &[bool],
        target: NodeId,
        contrib: NodeId,
    ) {
        if !needs[target.0] {
            return;
        }
        adj[target.0] = Some(match adj[target.0] {
            None => contrib,
            Some(prev) => self.add(prev, contrib),
        });
    }
}

fn each_operand_any(op: &Op, mut f: impl FnMut(NodeId) -> bool) -> bool {
    match op {
        Op::Leaf | Op::Const => false,
        Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::Div(a, b)
        | Op::SMul(a, b)
        | Op::Dot(a, b)
        | Op::Outer(a, b) => f(*a) || f(*b),
        Op::Scale(_, a)
        | Op::Tanh(a)
        | Op::Square(a)
        | Op::Sqrt(a)
        | Op::Abs(a)
        | Op::Sign(a)
        | Op::Sum(a)
        | Op::Norm(a) => f(*a),
        Op::LeakyRelu { a, .. }
        | Op::LeakyStep { a, .. }
        | Op::Huber { a, .. }
        | Op::HuberGrad { a, .. }
        | Op::HuberBand { a, .. }
        | Op::Slice { a, .. }
        | Op::Pad { a, .. } => f(*a),
        Op::MatVec { w, x, .. } | Op::MatVecT { w, x, .. } => f(*w) || f(*x),
        Op::Affine { w, x, b, .. } => f(*w) || f(*x) || f(*b),
        Op::Concat(parts) => parts.iter().any(|&p| f(p)),
        Op::Broadcast(s) => f(*s),
    }
}

fn eval_into(op: &Op, prefix: &[Node], out: &mut [f64]) {
    let v = |id: &NodeId| -> &[f64] { &prefix[id.0].value };
    match op {
        Op::Leaf | Op::Const => {}
        Op::Add(a, b) => {
            let (a, b) = (v(a), v(b));
            for i in 0..out.len() {
                out[i] = a[i] + b[i];
            }
        }
        Op::Sub(a, b) => {
            let (a, b) = (v(a), v(b));
            for i in 0..out.len() {
                out[i] = a[i] - b[i];
            }
        }
        Op::Mul(a, b) => {
            let (a, b) = (v(a), v(b));
            for i in 0..out.len() {
                out[i] = a[i] * b[i];
            }
        }
        Op::Div(a, b) => {
            let (a, b) = (v(a), v(b));
            for i in 0..out.len() {
                out[i] = a[i] / b[i];
            }
        }
        Op::Scale(c, a) => {
            let a = v(a);
            for i in 0..out.len() {
                out[i] = c * a[i];
            }
        }
        Op::SMul(s, a) => {
            let (s, a) = (v(s)[0], v(a));
            for i in 0..out.len() {
                out[i] = s * a[i];
            }
        }
        Op::Dot(a, b) => {
            let (a, b) = (v(a), v(b));
            let mut acc = 0.0;
            for i in 0..a.len() {
                acc += a[i] * b[i];
            }
            out[0] = acc;
        }
        Op::MatVec { w, rows, cols, x } => {
            let (w, x) = (v(w), v(x));
            for r in 0..*rows {
                let row = &w[r * cols..(r + 1) * cols];
                let mut acc = 0.0;
                for c in 0..*cols {
                    acc += row[c] * x[c];
                }
                out[r] = acc;
            }
        }
        Op::MatVecT { w, rows, cols, x } => {
            let (w, x) = (v(w), v(x));
            out.fill(0.0);
            for r in 0..*rows {
                let row = &w[r * cols..(r + 1) * cols];
                let xr = x[r];
                for c in 0..*cols {
                    out[c] += row[c] * xr;
                }
            }
        }
        Op::Outer(a, b) => {
            let (a, b) = (v(a), v(b));
            let lb = b.len();
            for i in 0..a.len() {
                for j in 0..lb {
                    out[i * lb + j] = a[i] * b[j];
                }
            }
        }
        Op::Affine { w, rows, cols, x, b } => {
            let (w, x, b) = (v(w), v(x), v(b));
            for r in 0..*rows {
                let row = &w[r * cols..(r + 1) * cols];
                let mut acc = 0.0;
                for c in 0..*cols {
                    acc += row[c] * x[c];
                }
                out[r] = acc + b[r];
            }
        }
        Op::Tanh(a) => {
            let a = v(a);
            for i in 0..out.len() {
                out[i] = a[i].tanh();
            }
        }
        Op::LeakyRelu { a, slope } => {
            let a = v(a);
            for i in 0..out.len() {
                out[i] = if a[i] > 0.0 { a[i] } else { slope * a[i] };
            }
        }
        Op::LeakyStep { a, slope } => {
            let a = v(a);
            for i in 0..out.len() {
                out[i] = if a[i] > 0.0 { 1.0 } else { *slope };
            }
        }
        Op::Square(a) => {
            let a = v(a);
            for i in 0..out.len() {
                out[i] = a[i] * a[i];
            }
        }
        Op::Sqrt(a) => {
            let a = v(a);
            for i in 0..out.len() {
                out[i] = a[i].sqrt();
            }
        }
        Op::Abs(a) => {
            let a = v(a);
            for i in 0..out.len() {
                out[i] = a[i].abs();
            }
        }
        Op::Sign(a) => {
            let a = v(a);
            for i in 0..out.len() {
                out[i] = if a[i] > 0.0 {
                    1.0
                } else if a[i] < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
        }
        Op::Sum(a) => {
            let a = v(a);
            let mut acc = 0.0;
            for &x in a {
                acc += x;
            }
            out[0] = acc;
        }
        Op::Norm(a) => {
            let a = v(a);
            let mut acc = 0.0;
            for &x in a {
                acc += x * x;
            }
            out[0] = acc.sqrt();
        }
        Op::Huber { a, delta } => {
            let a = v(a);
            for i in 0..out.len() {
                let p = a[i];
                out[i] = if p.abs() > *delta {
                    p.abs() - delta / 2.0
                } else {
                    p * p / (2.0 * delta)
                };
            }
        }
        Op::HuberGrad { a, delta } => {
            let a = v(a);
            for i in 0..out.len() {
                let p = a[i];
                out[i] = if p > *delta {
                    1.0
                } else if p < -*delta {
                    -1.0
                } else {
                    p / delta
                };
            }
        }
        Op::HuberBand { a, delta } => {
            let a = v(a);
            for i in 0..out.len() {
                out[i] = if a[i].abs() < *delta { 1.0 / delta } else { 0.0 };
            }
        }
        Op::Concat(parts) => {
            let mut off = 0;
            for p in parts {
                let pv = v(p);
                out[off..off + pv.len()].copy_from_slice(pv);
                off += pv.len();
            }
        }
        Op::Slice { a, start, len } => {
            let a = v(a);
            out.copy_from_slice(&a[*start..start + len]);
        }
        Op::Pad { a, start } => {
            let a = v(a);
            out.fill(0.0);
            out[*start..start + a.len()].copy_from_slice(a);
        }
        Op::Broadcast(s) => {
            let s = v(s)[0];
            out.fill(s);
        }
    }
}
