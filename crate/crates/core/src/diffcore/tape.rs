//! Computation tapes: programs over a fixed primitive set.
//!
//! A [`Tape`] is built once (topological order by construction), then
//! evaluated any number of times with different input bindings. Shapes are
//! inferred and checked at build time so malformed graphs fail early with the
//! offending primitive named. Constants are stored at `f64` and cast to the
//! evaluation precision, which keeps a single tape usable at both `f32` and
//! `f64`.

use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// Index of a node within its tape.
pub type NodeId = usize;

/// Primitive operations the engine knows how to evaluate and differentiate.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Prim {
    /// Rank-2 matrix product `[n,k] x [k,m] -> [n,m]`.
    MatMul,
    /// 2-D convolution, valid padding, stride 1, layout `[n,h,w,c]` with
    /// kernel `[kh,kw,c_in,c_out]`.
    Conv2d,
    /// 2x2 max-pool, stride 2; odd edges keep a partial window (ceil mode).
    MaxPool2x2,
    Relu,
    /// Elementwise add; the right operand may be a rank-1 vector broadcast
    /// over the last axis (bias add).
    Add,
    /// Elementwise product of same-shaped arrays.
    Mul,
    Scale(f64),
    AddScalar(f64),
    Clamp { lo: f64, hi: f64 },
    /// Elementwise sign with `sign(0) = 0`; gradient is zero everywhere.
    Sign,
    Abs,
    /// Row-wise max-subtracted softmax on a rank-2 array.
    Softmax,
    /// Mean categorical cross-entropy of probability rows against one-hot
    /// (or soft) label rows; probabilities are floored at `PROB_FLOOR`.
    CrossEntropy,
    /// Mean row-wise KL divergence `KL(p || q)`, both arguments floored.
    KlDiv,
    /// Hard threshold `1(v > b)` with a triangular surrogate pseudo-derivative
    /// of width `b` and height `dampening` applied to `v` on the backward
    /// pass; `b` receives no gradient.
    SpikeStep { dampening: f64 },
    /// Structural view with a new shape over the same row-major data.
    Reshape,
    /// Total sum of all elements, yielding a scalar.
    Sum,
}

impl Prim {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Prim::MatMul => "matmul",
            Prim::Conv2d => "conv2d",
            Prim::MaxPool2x2 => "maxpool2x2",
            Prim::Relu => "relu",
            Prim::Add => "add",
            Prim::Mul => "mul",
            Prim::Scale(_) => "scale",
            Prim::AddScalar(_) => "add_scalar",
            Prim::Clamp { .. } => "clamp",
            Prim::Sign => "sign",
            Prim::Abs => "abs",
            Prim::Softmax => "softmax",
            Prim::CrossEntropy => "cross_entropy",
            Prim::KlDiv => "kl_div",
            Prim::SpikeStep { .. } => "spike_step",
            Prim::Reshape => "reshape",
            Prim::Sum => "sum",
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Node {
    Input { name: String },
    Const { data: Vec<f64> },
    Prim { prim: Prim, args: Vec<NodeId> },
}

/// A program over primitives, with named inputs and outputs.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    pub(crate) shapes: Vec<Vec<usize>>,
    inputs: BTreeMap<String, NodeId>,
    outputs: BTreeMap<String, NodeId>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.shapes[id]
    }

    /// Declared inputs in name order.
    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.inputs.keys().map(|s| s.as_str())
    }

    pub fn input_id(&self, name: &str) -> Result<NodeId> {
        self.inputs
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownInput(name.to_string()))
    }

    pub fn output_id(&self, name: &str) -> Result<NodeId> {
        self.outputs
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownInput(name.to_string()))
    }

    pub(crate) fn inputs(&self) -> &BTreeMap<String, NodeId> {
        &self.inputs
    }

    /// Declare a named input of fixed shape.
    pub fn input(&mut self, name: &str, shape: &[usize]) -> Result<NodeId> {
        if self.inputs.contains_key(name) {
            return Err(Error::invalid(format!("duplicate input name `{name}`")));
        }
        let id = self.push(
            Node::Input {
                name: name.to_string(),
            },
            shape.to_vec(),
        );
        self.inputs.insert(name.to_string(), id);
        Ok(id)
    }

    /// Embed a constant array (stored at f64, cast on evaluation).
    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<NodeId> {
        if super::tensor::shape_len(shape) != data.len() {
            return Err(Error::shape(
                "constant",
                format!("shape {:?} vs {} elements", shape, data.len()),
            ));
        }
        Ok(self.push(Node::Const { data }, shape.to_vec()))
    }

    /// Give a node a stable name for retrieval from evaluations.
    pub fn mark_output(&mut self, name: &str, id: NodeId) {
        self.outputs.insert(name.to_string(), id);
    }

    fn push(&mut self, node: Node, shape: Vec<usize>) -> NodeId {
        self.nodes.push(node);
        self.shapes.push(shape);
        self.nodes.len() - 1
    }

    fn push_prim(&mut self, prim: Prim, args: Vec<NodeId>, shape: Vec<usize>) -> NodeId {
        self.push(Node::Prim { prim, args }, shape)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}")));
        }
        let shape = vec![sa[0], sb[1]];
        Ok(self.push_prim(Prim::MatMul, vec![a, b], shape))
    }

    pub fn conv2d(&mut self, x: NodeId, kernel: NodeId) -> Result<NodeId> {
        let (sx, sk) = (self.shape(x), self.shape(kernel));
        if sx.len() != 4 || sk.len() != 4 || sx[3] != sk[2] {
            return Err(Error::shape("conv2d", format!("input {sx:?}, kernel {sk:?}")));
        }
        if sk[0] > sx[1] || sk[1] > sx[2] {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {:?} larger than image {:?}", &sk[..2], &sx[1..3]),
            ));
        }
        let shape = vec![sx[0], sx[1] - sk[0] + 1, sx[2] - sk[1] + 1, sk[3]];
        Ok(self.push_prim(Prim::Conv2d, vec![x, kernel], shape))
    }

    pub fn maxpool2x2(&mut self, x: NodeId) -> Result<NodeId> {
        let sx = self.shape(x);
        if sx.len() != 4 || sx[1] == 0 || sx[2] == 0 {
            return Err(Error::shape("maxpool2x2", format!("{sx:?}")));
        }
        let shape = vec![sx[0], sx[1].div_ceil(2), sx[2].div_ceil(2), sx[3]];
        Ok(self.push_prim(Prim::MaxPool2x2, vec![x], shape))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let shape = self.shape(x).to_vec();
        Ok(self.push_prim(Prim::Relu, vec![x], shape))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let broadcast_ok = sb.len() == 1 && !sa.is_empty() && sa[sa.len() - 1] == sb[0];
        if sa != sb && !broadcast_ok {
            return Err(Error::shape("add", format!("{sa:?} + {sb:?}")));
        }
        let shape = sa.to_vec();
        Ok(self.push_prim(Prim::Add, vec![a, b], shape))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape("mul", format!("{sa:?} * {sb:?}")));
        }
        let shape = sa.to_vec();
        Ok(self.push_prim(Prim::Mul, vec![a, b], shape))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let shape = self.shape(x).to_vec();
        Ok(self.push_prim(Prim::Scale(c), vec![x], shape))
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let shape = self.shape(x).to_vec();
        Ok(self.push_prim(Prim::AddScalar(c), vec![x], shape))
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        if !(lo <= hi) {
            return Err(Error::invalid(format!("clamp bounds [{lo}, {hi}]")));
        }
        let shape = self.shape(x).to_vec();
        Ok(self.push_prim(Prim::Clamp { lo, hi }, vec![x], shape))
    }

    pub fn sign(&mut self, x: NodeId) -> Result<NodeId> {
        let shape = self.shape(x).to_vec();
        Ok(self.push_prim(Prim::Sign, vec![x], shape))
    }

    pub fn abs(&mut self, x: NodeId) -> Result<NodeId> {
        let shape = self.shape(x).to_vec();
        Ok(self.push_prim(Prim::Abs, vec![x], shape))
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let sx = self.shape(x);
        if sx.len() != 2 {
            return Err(Error::shape("softmax", format!("{sx:?}")));
        }
        let shape = sx.to_vec();
        Ok(self.push_prim(Prim::Softmax, vec![x], shape))
    }

    pub fn cross_entropy(&mut self, probs: NodeId, labels: NodeId) -> Result<NodeId> {
        let (sp, sl) = (self.shape(probs), self.shape(labels));
        if sp.len() != 2 || sp != sl {
            return Err(Error::shape("cross_entropy", format!("{sp:?} vs {sl:?}")));
        }
        Ok(self.push_prim(Prim::CrossEntropy, vec![probs, labels], vec![]))
    }

    pub fn kl_div(&mut self, p: NodeId, q: NodeId) -> Result<NodeId> {
        let (sp, sq) = (self.shape(p), self.shape(q));
        if sp.len() != 2 || sp != sq {
            return Err(Error::shape("kl_div", format!("{sp:?} vs {sq:?}")));
        }
        Ok(self.push_prim(Prim::KlDiv, vec![p, q], vec![]))
    }

    pub fn spike_step(&mut self, v: NodeId, b: NodeId, dampening: f64) -> Result<NodeId> {
        let (sv, sb) = (self.shape(v), self.shape(b));
        if sv != sb {
            return Err(Error::shape("spike_step", format!("{sv:?} vs {sb:?}")));
        }
        let shape = sv.to_vec();
        Ok(self.push_prim(Prim::SpikeStep { dampening }, vec![v, b], shape))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let sx = self.shape(x);
        if super::tensor::shape_len(sx) != super::tensor::shape_len(shape) {
            return Err(Error::shape("reshape", format!("{sx:?} -> {shape:?}")));
        }
        Ok(self.push_prim(Prim::Reshape, vec![x], shape.to_vec()))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        Ok(self.push_prim(Prim::Sum, vec![x], vec![]))
    }
}
