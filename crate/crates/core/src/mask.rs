//! Binary raster masks and the small set of operations the pipeline needs:
//! IoU, flips, resizing, and 4-connectivity component labeling.

use crate::diffcore::{bilinear_resize, Shape, Tensor};

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BinaryMask {
    h: usize,
    w: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(h: usize, w: usize) -> Self {
        BinaryMask {
            h,
            w,
            data: vec![false; h * w],
        }
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                data.push(f(y, x));
            }
        }
        BinaryMask { h, w, data }
    }

    pub fn from_vec(h: usize, w: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), h * w);
        BinaryMask { h, w, data }
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.w + x] = v;
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    pub fn intersection_area(&self, other: &BinaryMask) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    pub fn union_area(&self, other: &BinaryMask) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a || b)
            .count()
    }

    /// Binary IoU; two empty masks agree vacuously (1.0).
    pub fn iou(&self, other: &BinaryMask) -> f64 {
        let union = self.union_area(other);
        if union == 0 {
            return 1.0;
        }
        self.intersection_area(other) as f64 / union as f64
    }

    pub fn flip_h(&self) -> BinaryMask {
        BinaryMask::from_fn(self.h, self.w, |y, x| self.get(y, self.w - 1 - x))
    }

    pub fn flip_v(&self) -> BinaryMask {
        BinaryMask::from_fn(self.h, self.w, |y, x| self.get(self.h - 1 - y, x))
    }

    /// Translate by (dy, dx), filling vacated pixels with background.
    pub fn translate(&self, dy: isize, dx: isize) -> BinaryMask {
        BinaryMask::from_fn(self.h, self.w, |y, x| {
            let sy = y as isize - dy;
            let sx = x as isize - dx;
            if sy < 0 || sx < 0 || sy >= self.h as isize || sx >= self.w as isize {
                false
            } else {
                self.get(sy as usize, sx as usize)
            }
        })
    }

    /// Rotate 90° clockwise (exact; used only by invariance tests).
    pub fn rotate90(&self) -> BinaryMask {
        BinaryMask::from_fn(self.w, self.h, |y, x| self.get(self.h - 1 - x, y))
    }

    /// Rank-2 (H,W) tensor with 0.0/1.0 values.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            Shape::new(&[self.h, self.w]),
            self.data.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask tensor")
    }

    /// Threshold a soft rank-2 tensor: foreground where value >= threshold.
    pub fn from_tensor(t: &Tensor, threshold: f64) -> BinaryMask {
        let (h, w) = t.shape().as_hw().expect("rank-2 mask tensor");
        BinaryMask {
            h,
            w,
            data: t.data().iter().map(|&v| v >= threshold).collect(),
        }
    }

    /// Bilinear resize of the indicator field, re-thresholded at 0.5.
    pub fn resize(&self, oh: usize, ow: usize) -> BinaryMask {
        if oh == self.h && ow == self.w {
            return self.clone();
        }
        let soft = bilinear_resize(&self.to_tensor(), oh, ow);
        BinaryMask::from_tensor(&soft, 0.5)
    }

    /// Areas of 4-connected foreground components, in discovery order
    /// (row-major scan of seeds).
    pub fn component_areas(&self) -> Vec<usize> {
        let mut seen = vec![false; self.data.len()];
        let mut areas = Vec::new();
        let mut stack = Vec::new();
        for start in 0..self.data.len() {
            if !self.data[start] || seen[start] {
                continue;
            }
            let mut area = 0usize;
            seen[start] = true;
            stack.push(start);
            while let Some(i) = stack.pop() {
                area += 1;
                let y = i / self.w;
                let x = i % self.w;
                if x > 0 {
                    let j = i - 1;
                    if self.data[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
                if x + 1 < self.w {
                    let j = i + 1;
                    if self.data[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
                if y > 0 {
                    let j = i - self.w;
                    if self.data[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
                if y + 1 < self.h {
                    let j = i + self.w;
                    if self.data[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            areas.push(area);
        }
        areas
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_conventions() {
        let a = BinaryMask::from_fn(4, 4, |y, _| y < 2);
        let b = BinaryMask::from_fn(4, 4, |y, _| y >= 2);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&b), 0.0);
        let empty = BinaryMask::new(4, 4);
        assert_eq!(empty.iou(&BinaryMask::new(4, 4)), 1.0);
    }

    #[test]
    fn components_counts_disjoint_blobs() {
        let mut m = BinaryMask::new(8, 8);
        for (y, x) in [(1usize, 1usize), (1, 5), (6, 2)] {
            m.set(y, x, true);
            m.set(y, x + 1, true);
        }
        let areas = m.component_areas();
        assert_eq!(areas.len(), 3);
        assert!(areas.iter().all(|&a| a == 2));
    }

    #[test]
    fn components_diagonal_not_connected() {
        let mut m = BinaryMask::new(3, 3);
        m.set(0, 0, true);
        m.set(1, 1, true);
        assert_eq!(m.component_areas().len(), 2);
    }
}
