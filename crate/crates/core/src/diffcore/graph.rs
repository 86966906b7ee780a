use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::tensor::{Shape, Tensor};

/// Handle to a node inside a [`Graph`]. Nodes are append-only, so ids are
/// already in topological order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct NodeId(pub(crate) u32);

impl NodeId {
    pub(crate) fn idx(self) -> usize {
        self.0 as usize
    }
}

/// The primitive set. Everything the network and the losses need, nothing
/// more: elementwise arithmetic, a few nonlinearities, 3×3/1×1 convolution,
/// bilinear resize, channel concat, pooling, full reductions, clamping and
/// per-channel normalization.
#[derive(Clone, Debug)]
pub enum Op {
    Var(String),
    Const(Tensor),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddConst(NodeId, f64),
    MulConst(NodeId, f64),
    /// Elementwise x^k for a fixed exponent k.
    PowConst(NodeId, f64),
    Ln(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Clamp(NodeId, f64, f64),
    /// 2-D convolution with zero padding k/2 so stride-1 output keeps the
    /// input resolution. Kernel 1×1 or 3×3, stride 1 or 2.
    Conv2d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
    },
    /// Bilinear resize with half-pixel center alignment.
    Resize {
        x: NodeId,
        oh: usize,
        ow: usize,
    },
    ConcatChannels(Vec<NodeId>),
    /// (B,C,H,W) -> (B,C,1,1) spatial mean.
    GlobalMeanPool(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    /// Per-channel standardization over (B,H,W) statistics of the input.
    Normalize {
        x: NodeId,
        eps: f64,
    },
    /// y[b,c,h,w] = x[b,c,h,w] * scale[c] + shift[c].
    ChannelAffine {
        x: NodeId,
        scale: NodeId,
        shift: NodeId,
    },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Var(_) => "var",
            Op::Const(_) => "const",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddConst(..) => "add_const",
            Op::MulConst(..) => "mul_const",
            Op::PowConst(..) => "pow_const",
            Op::Ln(_) => "ln",
            Op::Sigmoid(_) => "sigmoid",
            Op::Relu(_) => "relu",
            Op::Clamp(..) => "clamp",
            Op::Conv2d { .. } => "conv2d",
            Op::Resize { .. } => "resize",
            Op::ConcatChannels(_) => "concat_channels",
            Op::GlobalMeanPool(_) => "global_mean_pool",
            Op::SumAll(_) => "sum_all",
            Op::MeanAll(_) => "mean_all",
            Op::Normalize { .. } => "normalize",
            Op::ChannelAffine { .. } => "channel_affine",
        }
    }
}

pub(crate) struct Node {
    pub op: Op,
    pub shape: Shape,
}

/// Acyclic computation graph over named tensor variables. Node shapes are
/// derived at construction time, so any shape error surfaces while the graph
/// is being built, not mid-training. Immutable once built; evaluation is a
/// pure function of the bindings.
#[derive(Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    pub(crate) vars: BTreeMap<String, NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> &Shape {
        &self.nodes[id.idx()].shape
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.idx()].op
    }

    pub fn var_names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(|s| s.as_str())
    }

    pub fn var_node(&self, name: &str) -> Option<NodeId> {
        self.vars.get(name).copied()
    }

    fn push(&mut self, op: Op, shape: Shape) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { op, shape });
        id
    }

    fn same_shape(&self, context: &str, a: NodeId, b: NodeId) -> Result<Shape> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::ShapeMismatch {
                context: context.into(),
                left: sa.dims().to_vec(),
                right: sb.dims().to_vec(),
            });
        }
        Ok(sa.clone())
    }

    pub fn var(&mut self, name: &str, shape: Shape) -> Result<NodeId> {
        if self.vars.contains_key(name) {
            return Err(Error::DuplicateVariable(name.into()));
        }
        let id = self.push(Op::Var(name.into()), shape);
        self.vars.insert(name.into(), id);
        Ok(id)
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        let shape = t.shape().clone();
        self.push(Op::Const(t), shape)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.same_shape("add", a, b)?;
        Ok(self.push(Op::Add(a, b), s))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.same_shape("sub", a, b)?;
        Ok(self.push(Op::Sub(a, b), s))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.same_shape("mul", a, b)?;
        Ok(self.push(Op::Mul(a, b), s))
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let s = self.shape(a).clone();
        self.push(Op::AddConst(a, c), s)
    }

    pub fn mul_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let s = self.shape(a).clone();
        self.push(Op::MulConst(a, c), s)
    }

    pub fn pow_const(&mut self, a: NodeId, k: f64) -> NodeId {
        let s = self.shape(a).clone();
        self.push(Op::PowConst(a, k), s)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a).clone();
        self.push(Op::Ln(a), s)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a).clone();
        self.push(Op::Sigmoid(a), s)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a).clone();
        self.push(Op::Relu(a), s)
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        debug_assert!(lo < hi);
        let s = self.shape(a).clone();
        self.push(Op::Clamp(a, lo, hi), s)
    }

    /// `1 - a`, a common subexpression in the losses.
    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        let neg = self.mul_const(a, -1.0);
        self.add_const(neg, 1.0)
    }

    /// `a / b` expressed inside the primitive set as a * b^(-1).
    /// The caller is responsible for keeping b positive (clamp first).
    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let inv = self.pow_const(b, -1.0);
        self.mul(a, inv)
    }

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize) -> Result<NodeId> {
        let (bs, ci, h, wd) = self.shape(x).as_bchw()?;
        let wdims = self.shape(w).dims().to_vec();
        let (co, wci, kh, kw) = match wdims.as_slice() {
            [co, ci, kh, kw] => (*co, *ci, *kh, *kw),
            _ => {
                return Err(Error::InvalidShape {
                    context: "conv2d weight must be (Co,Ci,K,K)".into(),
                    shape: wdims,
                })
            }
        };
        if kh != kw || !(kh == 1 || kh == 3) {
            return Err(Error::InvalidShape {
                context: "conv2d kernel must be 1x1 or 3x3".into(),
                shape: wdims,
            });
        }
        if !(stride == 1 || stride == 2) {
            return Err(Error::Config(format!("conv2d stride must be 1 or 2, got {stride}")));
        }
        if wci != ci {
            return Err(Error::ShapeMismatch {
                context: "conv2d input channels".into(),
                left: vec![ci],
                right: vec![wci],
            });
        }
        if self.shape(b).dims() != [co] {
            return Err(Error::ShapeMismatch {
                context: "conv2d bias".into(),
                left: self.shape(b).dims().to_vec(),
                right: vec![co],
            });
        }
        let pad = kh / 2;
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wd + 2 * pad - kw) / stride + 1;
        let shape = Shape::new(&[bs, co, oh, ow]);
        Ok(self.push(Op::Conv2d { x, w, b, stride }, shape))
    }

    pub fn resize(&mut self, x: NodeId, oh: usize, ow: usize) -> Result<NodeId> {
        let (bs, c, _, _) = self.shape(x).as_bchw()?;
        if oh == 0 || ow == 0 {
            return Err(Error::Config("resize target must be nonzero".into()));
        }
        let shape = Shape::new(&[bs, c, oh, ow]);
        Ok(self.push(Op::Resize { x, oh, ow }, shape))
    }

    pub fn concat_channels(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        if xs.is_empty() {
            return Err(Error::Config("concat of zero inputs".into()));
        }
        let (bs, mut c, h, w) = self.shape(xs[0]).as_bchw()?;
        for &x in &xs[1..] {
            let (b2, c2, h2, w2) = self.shape(x).as_bchw()?;
            if (b2, h2, w2) != (bs, h, w) {
                return Err(Error::ShapeMismatch {
                    context: "concat_channels".into(),
                    left: vec![bs, h, w],
                    right: vec![b2, h2, w2],
                });
            }
            c += c2;
        }
        let shape = Shape::new(&[bs, c, h, w]);
        Ok(self.push(Op::ConcatChannels(xs.to_vec()), shape))
    }

    pub fn global_mean_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let (bs, c, _, _) = self.shape(x).as_bchw()?;
        let shape = Shape::new(&[bs, c, 1, 1]);
        Ok(self.push(Op::GlobalMeanPool(x), shape))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        self.push(Op::SumAll(x), Shape::scalar())
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        self.push(Op::MeanAll(x), Shape::scalar())
    }

    pub fn normalize(&mut self, x: NodeId, eps: f64) -> Result<NodeId> {
        let shape = self.shape(x).clone();
        shape.as_bchw()?;
        Ok(self.push(Op::Normalize { x, eps }, shape))
    }

    pub fn channel_affine(&mut self, x: NodeId, scale: NodeId, shift: NodeId) -> Result<NodeId> {
        let (_, c, _, _) = self.shape(x).as_bchw()?;
        if self.shape(scale).dims() != [c] || self.shape(shift).dims() != [c] {
            return Err(Error::ShapeMismatch {
                context: "channel_affine scale/shift".into(),
                left: self.shape(scale).dims().to_vec(),
                right: vec![c],
            });
        }
        let shape = self.shape(x).clone();
        Ok(self.push(Op::ChannelAffine { x, scale, shift }, shape))
    }

    pub(crate) fn inputs_of(&self, id: NodeId) -> Vec<NodeId> {
        match &self.nodes[id.idx()].op {
            Op::Var(_) | Op::Const(_) => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::AddConst(a, _)
            | Op::MulConst(a, _)
            | Op::PowConst(a, _)
            | Op::Ln(a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::Clamp(a, _, _)
            | Op::Resize { x: a, .. }
            | Op::GlobalMeanPool(a)
            | Op::SumAll(a)
            | Op::MeanAll(a)
            | Op::Normalize { x: a, .. } => vec![*a],
            Op::Conv2d { x, w, b, .. } => vec![*x, *w, *b],
            Op::ConcatChannels(xs) => xs.clone(),
            Op::ChannelAffine { x, scale, shift } => vec![*x, *scale, *shift],
        }
    }
}
