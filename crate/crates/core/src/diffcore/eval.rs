use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::graph::{Graph, NodeId, Op};
use super::tensor::{bilinear_resize_plane, Shape, Tensor};

/// Named tensors bound to a graph's variables for one evaluation.
pub type Bindings = BTreeMap<String, Tensor>;

impl Graph {
    /// Forward-evaluate a single node. Deterministic: identical bindings give
    /// bitwise-identical outputs.
    pub fn eval(&self, root: NodeId, bindings: &Bindings) -> Result<Tensor> {
        let values = self.eval_all(bindings)?;
        Ok(values[root.idx()].clone())
    }

    /// Forward-evaluate every node, returning the full value table. Each
    /// node's output is checked for finiteness; the first offending node is
    /// reported.
    pub fn eval_all(&self, bindings: &Bindings) -> Result<Vec<Tensor>> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let out = self.forward_node(i, &node.op, &node.shape, &values, bindings)?;
            if !out.is_finite() {
                return Err(Error::NonFinite {
                    node: i,
                    op: node.op.name().into(),
                });
            }
            values.push(out);
        }
        Ok(values)
    }

    fn forward_node(
        &self,
        idx: usize,
        op: &Op,
        shape: &Shape,
        values: &[Tensor],
        bindings: &Bindings,
    ) -> Result<Tensor> {
        let v = |id: NodeId| &values[id.idx()];
        let out = match op {
            Op::Var(name) => {
                let t = bindings
                    .get(name)
                    .ok_or_else(|| Error::UnboundVariable(name.clone()))?;
                if t.shape() != shape {
                    return Err(Error::ShapeMismatch {
                        context: format!("binding for `{name}` (node {idx})"),
                        left: t.shape().dims().to_vec(),
                        right: shape.dims().to_vec(),
                    });
                }
                t.clone()
            }
            Op::Const(t) => t.clone(),
            Op::Add(a, b) => v(*a).zip_map(v(*b), |x, y| x + y)?,
            Op::Sub(a, b) => v(*a).zip_map(v(*b), |x, y| x - y)?,
            Op::Mul(a, b) => v(*a).zip_map(v(*b), |x, y| x * y)?,
            Op::AddConst(a, c) => v(*a).map(|x| x + c),
            Op::MulConst(a, c) => v(*a).map(|x| x * c),
            Op::PowConst(a, k) => v(*a).map(|x| x.powf(*k)),
            Op::Ln(a) => v(*a).map(f64::ln),
            Op::Sigmoid(a) => v(*a).map(sigmoid),
            Op::Relu(a) => v(*a).map(|x| if x > 0.0 { x } else { 0.0 }),
            Op::Clamp(a, lo, hi) => v(*a).map(|x| x.clamp(*lo, *hi)),
            Op::Conv2d { x, w, b, stride } => conv2d_forward(v(*x), v(*w), v(*b), *stride),
            Op::Resize { x, oh, ow } => resize_forward(v(*x), *oh, *ow),
            Op::ConcatChannels(xs) => concat_forward(xs.iter().map(|id| v(*id)), shape),
            Op::GlobalMeanPool(x) => global_mean_pool_forward(v(*x)),
            Op::SumAll(x) => Tensor::scalar(v(*x).sum()),
            Op::MeanAll(x) => Tensor::scalar(v(*x).mean()),
            Op::Normalize { x, eps } => normalize_forward(v(*x), *eps),
            Op::ChannelAffine { x, scale, shift } => {
                channel_affine_forward(v(*x), v(*scale), v(*shift))
            }
        };
        Ok(out)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Direct convolution. The inner loop runs over contiguous output/input rows
/// (scalar weight times shifted row), which the compiler vectorizes well.
pub(crate) fn conv2d_forward(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize) -> Tensor {
    let (bs, ci, h, wd) = x.shape().as_bchw().expect("conv input");
    let wdims = w.shape().dims();
    let (co, _, k, _) = (wdims[0], wdims[1], wdims[2], wdims[3]);
    let pad = k / 2;
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;

    let xd = x.data();
    let wdat = w.data();
    let bd = b.data();
    let mut out = vec![0.0f64; bs * co * oh * ow];

    for bi in 0..bs {
        for coi in 0..co {
            let out_base = (bi * co + coi) * oh * ow;
            let bias = bd[coi];
            out[out_base..out_base + oh * ow].fill(bias);
            for cii in 0..ci {
                let x_base = (bi * ci + cii) * h * wd;
                for kh in 0..k {
                    for kw in 0..k {
                        let wv = wdat[((coi * ci + cii) * k + kh) * k + kw];
                        if wv == 0.0 {
                            continue;
                        }
                        // input row index iy = oy*stride + kh - pad
                        for oy in 0..oh {
                            let iy = (oy * stride + kh) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let xrow = x_base + iy as usize * wd;
                            let orow = out_base + oy * ow;
                            // ix = ox*stride + kw - pad must lie in [0, wd)
                            let off = kw as isize - pad as isize;
                            for ox in 0..ow {
                                let ix = (ox * stride) as isize + off;
                                if ix < 0 || ix >= wd as isize {
                                    continue;
                                }
                                out[orow + ox] += wv * xd[xrow + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(Shape::new(&[bs, co, oh, ow]), out).expect("conv shape")
}

fn resize_forward(x: &Tensor, oh: usize, ow: usize) -> Tensor {
    let (bs, c, h, w) = x.shape().as_bchw().expect("resize input");
    let mut data = Vec::with_capacity(bs * c * oh * ow);
    for p in 0..bs * c {
        let plane = &x.data()[p * h * w..(p + 1) * h * w];
        data.extend(bilinear_resize_plane(plane, h, w, oh, ow));
    }
    Tensor::from_vec(Shape::new(&[bs, c, oh, ow]), data).expect("resize shape")
}

fn concat_forward<'a>(xs: impl Iterator<Item = &'a Tensor>, shape: &Shape) -> Tensor {
    let xs: Vec<&Tensor> = xs.collect();
    let (bs, _, h, w) = shape.as_bchw().expect("concat shape");
    let mut data = Vec::with_capacity(shape.numel());
    for bi in 0..bs {
        for x in &xs {
            let (_, c, _, _) = x.shape().as_bchw().expect("concat input");
            let plane = c * h * w;
            data.extend_from_slice(&x.data()[bi * plane..(bi + 1) * plane]);
        }
    }
    Tensor::from_vec(shape.clone(), data).expect("concat out")
}

fn global_mean_pool_forward(x: &Tensor) -> Tensor {
    let (bs, c, h, w) = x.shape().as_bchw().expect("pool input");
    let area = (h * w) as f64;
    let mut data = Vec::with_capacity(bs * c);
    for p in 0..bs * c {
        let plane = &x.data()[p * h * w..(p + 1) * h * w];
        data.push(plane.iter().sum::<f64>() / area);
    }
    Tensor::from_vec(Shape::new(&[bs, c, 1, 1]), data).expect("pool shape")
}

pub(crate) fn channel_stats(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (bs, c, h, w) = x.shape().as_bchw().expect("stats input");
    let n = (bs * h * w) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for bi in 0..bs {
        for ci in 0..c {
            let plane = &x.data()[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
            mean[ci] += plane.iter().sum::<f64>();
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    for bi in 0..bs {
        for ci in 0..c {
            let plane = &x.data()[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
            var[ci] += plane.iter().map(|&v| (v - mean[ci]) * (v - mean[ci])).sum::<f64>();
        }
    }
    for v in var.iter_mut() {
        *v /= n;
    }
    (mean, var)
}

fn normalize_forward(x: &Tensor, eps: f64) -> Tensor {
    let (bs, c, h, w) = x.shape().as_bchw().expect("normalize input");
    let (mean, var) = channel_stats(x);
    let inv: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
    let mut data = Vec::with_capacity(x.numel());
    for bi in 0..bs {
        for ci in 0..c {
            let plane = &x.data()[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
            data.extend(plane.iter().map(|&v| (v - mean[ci]) * inv[ci]));
        }
    }
    Tensor::from_vec(x.shape().clone(), data).expect("normalize shape")
}

fn channel_affine_forward(x: &Tensor, scale: &Tensor, shift: &Tensor) -> Tensor {
    let (bs, c, h, w) = x.shape().as_bchw().expect("affine input");
    let sc = scale.data();
    let sh = shift.data();
    let mut data = Vec::with_capacity(x.numel());
    for bi in 0..bs {
        for ci in 0..c {
            let plane = &x.data()[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
            data.extend(plane.iter().map(|&v| v * sc[ci] + sh[ci]));
        }
    }
    Tensor::from_vec(x.shape().clone(), data).expect("affine shape")
}
