use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tensor shape, rank 0 (scalar) through 4 (batch, channels, height, width).
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: &[usize]) -> Self {
        assert!(dims.len() <= 4, "rank > 4 unsupported: {dims:?}");
        Shape(dims.to_vec())
    }

    pub fn scalar() -> Self {
        Shape(Vec::new())
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    /// Dims as (batch, channels, height, width); fails unless rank 4.
    pub fn as_bchw(&self) -> Result<(usize, usize, usize, usize)> {
        match self.0.as_slice() {
            [b, c, h, w] => Ok((*b, *c, *h, *w)),
            _ => Err(Error::InvalidShape {
                context: "expected rank-4 (B,C,H,W)".into(),
                shape: self.0.clone(),
            }),
        }
    }

    pub fn as_hw(&self) -> Result<(usize, usize)> {
        match self.0.as_slice() {
            [h, w] => Ok((*h, *w)),
            _ => Err(Error::InvalidShape {
                context: "expected rank-2 (H,W)".into(),
                shape: self.0.clone(),
            }),
        }
    }
}

impl std::fmt::Debug for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<&[usize]> for Shape {
    fn from(dims: &[usize]) -> Self {
        Shape::new(dims)
    }
}

/// Dense row-major tensor of f64 values. Training and gradient checks share
/// the same 64-bit element type so finite-difference verification stays
/// meaningful.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if shape.numel() != data.len() {
            return Err(Error::InvalidShape {
                context: format!("element count {} vs shape", data.len()),
                shape: shape.dims().to_vec(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        let n = shape.numel();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        let n = shape.numel();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Shape::scalar(),
            data: vec![value],
        }
    }

    /// Rank-2 (H,W) tensor built from a per-pixel function of (row, col).
    pub fn from_fn_2d(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                data.push(f(y, x));
            }
        }
        Tensor {
            shape: Shape::new(&[h, w]),
            data,
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1, "item() on non-scalar");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                context: "zip_map".into(),
                left: self.shape.dims().to_vec(),
                right: other.shape.dims().to_vec(),
            });
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    /// Reinterpret a rank-2 (H,W) tensor as (1,1,H,W).
    pub fn to_bchw(&self) -> Result<Tensor> {
        let (h, w) = self.shape.as_hw()?;
        Ok(Tensor {
            shape: Shape::new(&[1, 1, h, w]),
            data: self.data.clone(),
        })
    }

    /// Reshape without moving data; element counts must agree.
    pub fn reshaped(&self, shape: Shape) -> Result<Tensor> {
        if shape.numel() != self.data.len() {
            return Err(Error::InvalidShape {
                context: "reshape".into(),
                shape: shape.dims().to_vec(),
            });
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    /// Horizontal flip over the last (width) axis; rank ≥ 2.
    pub fn flip_h(&self) -> Tensor {
        let dims = self.shape.dims();
        let w = *dims.last().expect("flip_h on scalar");
        let rows = self.data.len() / w;
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..rows {
            let row = &self.data[r * w..(r + 1) * w];
            data.extend(row.iter().rev());
        }
        Tensor {
            shape: self.shape.clone(),
            data,
        }
    }

    /// Vertical flip over the height axis (second-to-last); rank ≥ 2.
    pub fn flip_v(&self) -> Tensor {
        let dims = self.shape.dims();
        let rank = dims.len();
        assert!(rank >= 2, "flip_v needs rank >= 2");
        let w = dims[rank - 1];
        let h = dims[rank - 2];
        let planes = self.data.len() / (h * w);
        let mut data = Vec::with_capacity(self.data.len());
        for p in 0..planes {
            let plane = &self.data[p * h * w..(p + 1) * h * w];
            for y in (0..h).rev() {
                data.extend_from_slice(&plane[y * w..(y + 1) * w]);
            }
        }
        Tensor {
            shape: self.shape.clone(),
            data,
        }
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 8 {
            write!(f, " {:?}", self.data)
        } else {
            write!(f, " [{} elements]", self.data.len())
        }
    }
}

/// Bilinear resample with half-pixel center alignment. Shared by the graph
/// node and host-side raster plumbing so both use one convention.
pub fn bilinear_resize_plane(src: &[f64], sh: usize, sw: usize, oh: usize, ow: usize) -> Vec<f64> {
    assert_eq!(src.len(), sh * sw);
    let mut out = Vec::with_capacity(oh * ow);
    let sy = sh as f64 / oh as f64;
    let sx = sw as f64 / ow as f64;
    for y in 0..oh {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let wy = fy - y0 as f64;
        for x in 0..ow {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let wx = fx - x0 as f64;
            let v00 = src[y0 * sw + x0];
            let v01 = src[y0 * sw + x1];
            let v10 = src[y1 * sw + x0];
            let v11 = src[y1 * sw + x1];
            let top = v00 + (v01 - v00) * wx;
            let bot = v10 + (v11 - v10) * wx;
            out.push(top + (bot - top) * wy);
        }
    }
    out
}

/// Resize every (H,W) plane of a rank-2/3/4 tensor to (oh, ow).
pub fn bilinear_resize(src: &Tensor, oh: usize, ow: usize) -> Tensor {
    let dims = src.shape().dims();
    let rank = dims.len();
    assert!(rank >= 2, "resize needs rank >= 2");
    let w = dims[rank - 1];
    let h = dims[rank - 2];
    let planes = src.numel() / (h * w);
    let mut data = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let plane = &src.data()[p * h * w..(p + 1) * h * w];
        data.extend(bilinear_resize_plane(plane, h, w, oh, ow));
    }
    let mut out_dims = dims.to_vec();
    out_dims[rank - 1] = ow;
    out_dims[rank - 2] = oh;
    Tensor::from_vec(Shape::new(&out_dims), data).expect("resize shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flip_h_roundtrip() {
        let t = Tensor::from_fn_2d(3, 4, |y, x| (y * 4 + x) as f64);
        assert_eq!(t.flip_h().flip_h(), t);
        assert_eq!(t.flip_h().data()[0], 3.0);
    }

    #[test]
    fn flip_v_roundtrip() {
        let t = Tensor::from_fn_2d(3, 4, |y, x| (y * 4 + x) as f64);
        assert_eq!(t.flip_v().flip_v(), t);
        assert_eq!(t.flip_v().data()[0], 8.0);
    }

    #[test]
    fn resize_constant_field_is_self_inverse() {
        let t = Tensor::full(Shape::new(&[8, 8]), 0.37);
        let up = bilinear_resize(&t, 16, 16);
        let down = bilinear_resize(&up, 8, 8);
        assert!(down.data().iter().all(|&v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn resize_identity_when_same_size() {
        let t = Tensor::from_fn_2d(5, 7, |y, x| (y as f64).sin() + x as f64);
        let r = bilinear_resize(&t, 5, 7);
        for (a, b) in t.data().iter().zip(r.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
