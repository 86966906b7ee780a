use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::eval::Bindings;
use super::graph::{Graph, NodeId, Op};
use super::tensor::{Shape, Tensor};

impl Graph {
    /// Reverse-mode gradient of a scalar root with respect to the named
    /// variables. Returns one tensor per requested variable, shaped like it.
    pub fn gradients(
        &self,
        root: NodeId,
        bindings: &Bindings,
        wrt: &[String],
    ) -> Result<BTreeMap<String, Tensor>> {
        if !self.shape(root).is_scalar() {
            return Err(Error::NonScalarRoot {
                shape: self.shape(root).dims().to_vec(),
            });
        }
        let values = self.eval_all(bindings)?;
        self.backward(&values, &[(root, 1.0)], wrt)
    }

    /// One forward pass, then a backward pass seeded at scalar roots chosen
    /// *after* inspecting the forward values (winner-take-all selection needs
    /// this). `seed_fn` receives the full value table and returns
    /// (root, weight) pairs; the backward computes d(Σ wᵢ·rootᵢ)/d(wrt).
    pub fn forward_backward<F>(
        &self,
        bindings: &Bindings,
        wrt: &[String],
        seed_fn: F,
    ) -> Result<(Vec<Tensor>, BTreeMap<String, Tensor>)>
    where
        F: FnOnce(&[Tensor]) -> Vec<(NodeId, f64)>,
    {
        let values = self.eval_all(bindings)?;
        let seeds = seed_fn(&values);
        let grads = self.backward(&values, &seeds, wrt)?;
        Ok((values, grads))
    }

    fn backward(
        &self,
        values: &[Tensor],
        seeds: &[(NodeId, f64)],
        wrt: &[String],
    ) -> Result<BTreeMap<String, Tensor>> {
        let mut adjoint: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (root, weight) in seeds {
            if !self.shape(*root).is_scalar() {
                return Err(Error::NonScalarRoot {
                    shape: self.shape(*root).dims().to_vec(),
                });
            }
            match &mut adjoint[root.idx()] {
                Some(t) => t.data_mut()[0] += weight,
                slot => *slot = Some(Tensor::scalar(*weight)),
            }
        }

        for idx in (0..self.nodes.len()).rev() {
            let g = match adjoint[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[idx];
            let mut push = |id: NodeId, t: Tensor, adj: &mut Vec<Option<Tensor>>| {
                match &mut adj[id.idx()] {
                    Some(acc) => {
                        let acc_data = acc.data_mut();
                        for (a, b) in acc_data.iter_mut().zip(t.data()) {
                            *a += b;
                        }
                    }
                    slot => *slot = Some(t),
                }
            };

            match &node.op {
                // Variable adjoints are kept for the final collection pass.
                Op::Var(_) => adjoint[idx] = Some(g),
                Op::Const(_) => {}
                Op::Add(a, b) => {
                    push(*a, g.clone(), &mut adjoint);
                    push(*b, g, &mut adjoint);
                }
                Op::Sub(a, b) => {
                    push(*a, g.clone(), &mut adjoint);
                    push(*b, g.map(|v| -v), &mut adjoint);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(&values[b.idx()], |gv, bv| gv * bv)?;
                    let gb = g.zip_map(&values[a.idx()], |gv, av| gv * av)?;
                    push(*a, ga, &mut adjoint);
                    push(*b, gb, &mut adjoint);
                }
                Op::AddConst(a, _) => push(*a, g, &mut adjoint),
                Op::MulConst(a, c) => {
                    let c = *c;
                    push(*a, g.map(|v| v * c), &mut adjoint)
                }
                Op::PowConst(a, k) => {
                    let k = *k;
                    let ga = g.zip_map(&values[a.idx()], |gv, x| gv * k * x.powf(k - 1.0))?;
                    push(*a, ga, &mut adjoint);
                }
                Op::Ln(a) => {
                    let ga = g.zip_map(&values[a.idx()], |gv, x| gv / x)?;
                    push(*a, ga, &mut adjoint);
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&values[idx], |gv, y| gv * y * (1.0 - y))?;
                    push(*a, ga, &mut adjoint);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(&values[a.idx()], |gv, x| if x > 0.0 { gv } else { 0.0 })?;
                    push(*a, ga, &mut adjoint);
                }
                Op::Clamp(a, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    let ga = g.zip_map(&values[a.idx()], |gv, x| {
                        if x > lo && x < hi {
                            gv
                        } else {
                            0.0
                        }
                    })?;
                    push(*a, ga, &mut adjoint);
                }
                Op::Conv2d { x, w, b, stride } => {
                    let (gx, gw, gb) =
                        conv2d_backward(&values[x.idx()], &values[w.idx()], &g, *stride);
                    push(*x, gx, &mut adjoint);
                    push(*w, gw, &mut adjoint);
                    push(*b, gb, &mut adjoint);
                }
                Op::Resize { x, .. } => {
                    let gx = resize_backward(&values[x.idx()], &g);
                    push(*x, gx, &mut adjoint);
                }
                Op::ConcatChannels(xs) => {
                    let grads = concat_backward(xs, values, &g, self);
                    for (id, gx) in xs.iter().zip(grads) {
                        push(*id, gx, &mut adjoint);
                    }
                }
                Op::GlobalMeanPool(x) => {
                    let gx = pool_backward(&values[x.idx()], &g);
                    push(*x, gx, &mut adjoint);
                }
                Op::SumAll(x) => {
                    let gv = g.item();
                    let shape = values[x.idx()].shape().clone();
                    push(*x, Tensor::full(shape, gv), &mut adjoint);
                }
                Op::MeanAll(x) => {
                    let n = values[x.idx()].numel() as f64;
                    let gv = g.item() / n;
                    let shape = values[x.idx()].shape().clone();
                    push(*x, Tensor::full(shape, gv), &mut adjoint);
                }
                Op::Normalize { x, eps } => {
                    let gx = normalize_backward(&values[x.idx()], &values[idx], &g, *eps);
                    push(*x, gx, &mut adjoint);
                }
                Op::ChannelAffine { x, scale, shift } => {
                    let (gx, gsc, gsh) =
                        affine_backward(&values[x.idx()], &values[scale.idx()], &g);
                    push(*x, gx, &mut adjoint);
                    push(*scale, gsc, &mut adjoint);
                    push(*shift, gsh, &mut adjoint);
                }
            }
        }

        let mut out = BTreeMap::new();
        for name in wrt {
            let id = self
                .vars
                .get(name.as_str())
                .copied()
                .ok_or_else(|| Error::UnboundVariable(name.clone()))?;
            let grad = adjoint[id.idx()]
                .take()
                .unwrap_or_else(|| Tensor::zeros(self.shape(id).clone()));
            out.insert(name.clone(), grad);
        }
        Ok(out)
    }
}

fn conv2d_backward(x: &Tensor, w: &Tensor, g: &Tensor, stride: usize) -> (Tensor, Tensor, Tensor) {
    let (bs, ci, h, wd) = x.shape().as_bchw().expect("conv input");
    let wdims = w.shape().dims();
    let (co, _, k, _) = (wdims[0], wdims[1], wdims[2], wdims[3]);
    let (_, _, oh, ow) = g.shape().as_bchw().expect("conv grad");
    let pad = k / 2;

    let xd = x.data();
    let wdat = w.data();
    let gd = g.data();
    let mut gx = vec![0.0f64; xd.len()];
    let mut gw = vec![0.0f64; wdat.len()];
    let mut gb = vec![0.0f64; co];

    for bi in 0..bs {
        for coi in 0..co {
            let g_base = (bi * co + coi) * oh * ow;
            gb[coi] += gd[g_base..g_base + oh * ow].iter().sum::<f64>();
            for cii in 0..ci {
                let x_base = (bi * ci + cii) * h * wd;
                for kh in 0..k {
                    for kw in 0..k {
                        let widx = ((coi * ci + cii) * k + kh) * k + kw;
                        let wv = wdat[widx];
                        let mut wacc = 0.0;
                        let off = kw as isize - pad as isize;
                        for oy in 0..oh {
                            let iy = (oy * stride + kh) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let xrow = x_base + iy as usize * wd;
                            let grow = g_base + oy * ow;
                            for ox in 0..ow {
                                let ix = (ox * stride) as isize + off;
                                if ix < 0 || ix >= wd as isize {
                                    continue;
                                }
                                let gv = gd[grow + ox];
                                wacc += gv * xd[xrow + ix as usize];
                                gx[xrow + ix as usize] += wv * gv;
                            }
                        }
                        gw[widx] += wacc;
                    }
                }
            }
        }
    }
    (
        Tensor::from_vec(x.shape().clone(), gx).expect("gx"),
        Tensor::from_vec(w.shape().clone(), gw).expect("gw"),
        Tensor::from_vec(Shape::new(&[co]), gb).expect("gb"),
    )
}

/// Adjoint of bilinear resize: scatter each output gradient to the four
/// source pixels with the interpolation weights.
fn resize_backward(x: &Tensor, g: &Tensor) -> Tensor {
    let (bs, c, h, w) = x.shape().as_bchw().expect("resize input");
    let (_, _, oh, ow) = g.shape().as_bchw().expect("resize grad");
    let sy = h as f64 / oh as f64;
    let sx = w as f64 / ow as f64;
    let mut gx = vec![0.0f64; x.numel()];
    let gd = g.data();
    for p in 0..bs * c {
        let src_base = p * h * w;
        let g_base = p * oh * ow;
        for y in 0..oh {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let wy = fy - y0 as f64;
            for x_ in 0..ow {
                let fx = ((x_ as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(w - 1);
                let wx = fx - x0 as f64;
                let gv = gd[g_base + y * ow + x_];
                gx[src_base + y0 * w + x0] += gv * (1.0 - wy) * (1.0 - wx);
                gx[src_base + y0 * w + x1] += gv * (1.0 - wy) * wx;
                gx[src_base + y1 * w + x0] += gv * wy * (1.0 - wx);
                gx[src_base + y1 * w + x1] += gv * wy * wx;
            }
        }
    }
    Tensor::from_vec(x.shape().clone(), gx).expect("resize gx")
}

fn concat_backward(xs: &[NodeId], values: &[Tensor], g: &Tensor, graph: &Graph) -> Vec<Tensor> {
    let (bs, _, h, w) = g.shape().as_bchw().expect("concat grad");
    let gd = g.data();
    let mut grads: Vec<Vec<f64>> = xs
        .iter()
        .map(|id| vec![0.0; values[id.idx()].numel()])
        .collect();
    let channels: Vec<usize> = xs
        .iter()
        .map(|id| graph.shape(*id).as_bchw().expect("concat input").1)
        .collect();
    let total_c: usize = channels.iter().sum();
    for bi in 0..bs {
        let mut c_off = 0;
        for (i, &c) in channels.iter().enumerate() {
            let src = &gd[(bi * total_c + c_off) * h * w..(bi * total_c + c_off + c) * h * w];
            let dst = &mut grads[i][bi * c * h * w..(bi + 1) * c * h * w];
            dst.copy_from_slice(src);
            c_off += c;
        }
    }
    xs.iter()
        .zip(grads)
        .map(|(id, data)| Tensor::from_vec(values[id.idx()].shape().clone(), data).expect("gc"))
        .collect()
}

fn pool_backward(x: &Tensor, g: &Tensor) -> Tensor {
    let (bs, c, h, w) = x.shape().as_bchw().expect("pool input");
    let area = (h * w) as f64;
    let gd = g.data();
    let mut gx = Vec::with_capacity(x.numel());
    for p in 0..bs * c {
        let gv = gd[p] / area;
        gx.extend(std::iter::repeat(gv).take(h * w));
    }
    Tensor::from_vec(x.shape().clone(), gx).expect("pool gx")
}

/// Standard batch-norm input gradient (no affine):
/// dx = inv · (g − mean(g) − y·mean(g·y)), statistics per channel.
fn normalize_backward(x: &Tensor, y: &Tensor, g: &Tensor, eps: f64) -> Tensor {
    let (bs, c, h, w) = x.shape().as_bchw().expect("norm input");
    let n = (bs * h * w) as f64;
    let (_, var) = super::eval::channel_stats(x);
    let mut mean_g = vec![0.0; c];
    let mut mean_gy = vec![0.0; c];
    for bi in 0..bs {
        for ci in 0..c {
            let base = (bi * c + ci) * h * w;
            for i in 0..h * w {
                mean_g[ci] += g.data()[base + i];
                mean_gy[ci] += g.data()[base + i] * y.data()[base + i];
            }
        }
    }
    for ci in 0..c {
        mean_g[ci] /= n;
        mean_gy[ci] /= n;
    }
    let inv: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
    let mut gx = vec![0.0; x.numel()];
    for bi in 0..bs {
        for ci in 0..c {
            let base = (bi * c + ci) * h * w;
            for i in 0..h * w {
                gx[base + i] = inv[ci]
                    * (g.data()[base + i] - mean_g[ci] - y.data()[base + i] * mean_gy[ci]);
            }
        }
    }
    Tensor::from_vec(x.shape().clone(), gx).expect("norm gx")
}

fn affine_backward(x: &Tensor, scale: &Tensor, g: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (bs, c, h, w) = x.shape().as_bchw().expect("affine input");
    let sc = scale.data();
    let gd = g.data();
    let xd = x.data();
    let mut gx = vec![0.0; x.numel()];
    let mut gsc = vec![0.0; c];
    let mut gsh = vec![0.0; c];
    for bi in 0..bs {
        for ci in 0..c {
            let base = (bi * c + ci) * h * w;
            for i in 0..h * w {
                gx[base + i] = gd[base + i] * sc[ci];
                gsc[ci] += gd[base + i] * xd[base + i];
                gsh[ci] += gd[base + i];
            }
        }
    }
    (
        Tensor::from_vec(x.shape().clone(), gx).expect("gx"),
        Tensor::from_vec(Shape::new(&[c]), gsc).expect("gsc"),
        Tensor::from_vec(Shape::new(&[c]), gsh).expect("gsh"),
    )
}
