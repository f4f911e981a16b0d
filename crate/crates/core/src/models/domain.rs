//! The operation set network definitions are written against.
//!
//! [`NetDomain`] abstracts over *how* values are represented: the tape domain
//! builds differentiable graphs (values are node ids), while the interval
//! domain in `verify` propagates rigorous bounds (values are interval
//! arrays). Because both instantiate the identical generic network code, any
//! divergence between concrete evaluation and bound propagation would be a
//! bug in a domain, not in a duplicated network definition.

use crate::diffcore::tape::{NodeId, Tape};
use crate::error::Result;
use std::collections::BTreeMap;

/// Abstract operations sufficient to express all supported architectures.
///
/// Semantics mirror the tape primitives: `add` broadcasts a rank-1 right
/// operand over the last axis, `maxpool2x2` uses stride 2 with ceil-mode
/// edges, `spike` is the hard threshold `1(v > b)` (with a triangular
/// surrogate derivative in differentiable domains), and `reshape` is a
/// structural view over unchanged row-major data.
pub trait NetDomain {
    type Value: Clone;

    fn matmul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn conv2d(&mut self, x: &Self::Value, kernel: &Self::Value) -> Result<Self::Value>;
    fn maxpool2x2(&mut self, x: &Self::Value) -> Result<Self::Value>;
    fn relu(&mut self, x: &Self::Value) -> Result<Self::Value>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn scale(&mut self, x: &Self::Value, c: f64) -> Result<Self::Value>;
    fn add_scalar(&mut self, x: &Self::Value, c: f64) -> Result<Self::Value>;
    fn clamp(&mut self, x: &Self::Value, lo: f64, hi: f64) -> Result<Self::Value>;
    fn spike(&mut self, v: &Self::Value, b: &Self::Value, dampening: f64) -> Result<Self::Value>;
    fn reshape(&mut self, x: &Self::Value, shape: &[usize]) -> Result<Self::Value>;
    /// An all-zero value of the given shape (initial recurrent state).
    fn zeros(&mut self, shape: &[usize]) -> Self::Value;
    /// Record a named intermediate for later inspection. Domains that do not
    /// track intermediates may ignore this.
    fn tag(&mut self, name: &str, v: &Self::Value);
}

/// [`NetDomain`] that appends primitives to a [`Tape`].
pub struct TapeDomain<'t> {
    tape: &'t mut Tape,
    tags: BTreeMap<String, NodeId>,
}

impl<'t> TapeDomain<'t> {
    pub fn new(tape: &'t mut Tape) -> Self {
        TapeDomain {
            tape,
            tags: BTreeMap::new(),
        }
    }

    /// Named intermediates collected while the network was appended.
    pub fn into_tags(self) -> BTreeMap<String, NodeId> {
        self.tags
    }
}

impl NetDomain for TapeDomain<'_> {
    type Value = NodeId;

    fn matmul(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        self.tape.matmul(*a, *b)
    }

    fn conv2d(&mut self, x: &NodeId, kernel: &NodeId) -> Result<NodeId> {
        self.tape.conv2d(*x, *kernel)
    }

    fn maxpool2x2(&mut self, x: &NodeId) -> Result<NodeId> {
        self.tape.maxpool2x2(*x)
    }

    fn relu(&mut self, x: &NodeId) -> Result<NodeId> {
        self.tape.relu(*x)
    }

    fn add(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        self.tape.add(*a, *b)
    }

    fn mul(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        self.tape.mul(*a, *b)
    }

    fn scale(&mut self, x: &NodeId, c: f64) -> Result<NodeId> {
        self.tape.scale(*x, c)
    }

    fn add_scalar(&mut self, x: &NodeId, c: f64) -> Result<NodeId> {
        self.tape.add_scalar(*x, c)
    }

    fn clamp(&mut self, x: &NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        self.tape.clamp(*x, lo, hi)
    }

    fn spike(&mut self, v: &NodeId, b: &NodeId, dampening: f64) -> Result<NodeId> {
        self.tape.spike_step(*v, *b, dampening)
    }

    fn reshape(&mut self, x: &NodeId, shape: &[usize]) -> Result<NodeId> {
        self.tape.reshape(*x, shape)
    }

    fn zeros(&mut self, shape: &[usize]) -> NodeId {
        let len = crate::diffcore::tensor::shape_len(shape);
        self.tape
            .constant(shape, vec![0.0; len])
            .expect("zero constant always matches its shape")
    }

    fn tag(&mut self, name: &str, v: &NodeId) {
        self.tags.insert(name.to_string(), *v);
    }
}
