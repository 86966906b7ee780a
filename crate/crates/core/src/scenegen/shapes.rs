//! Shape rasterizers and procedural textures. Pixel loops consume no RNG:
//! every stochastic choice is drawn into the spec up front, so rasterization
//! is a pure function and samples reproduce bit-exactly in any order.

use serde::{Deserialize, Serialize};

use crate::mask::BinaryMask;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFamily {
    Ellipse,
    Rectangle,
    PolygonBlob,
    Ring,
    Composite,
}

pub const SHAPE_FAMILIES: [ShapeFamily; 5] = [
    ShapeFamily::Ellipse,
    ShapeFamily::Rectangle,
    ShapeFamily::PolygonBlob,
    ShapeFamily::Ring,
    ShapeFamily::Composite,
];

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureFamily {
    Flat,
    Gradient,
    Stripes,
    Speckle,
}

pub const TEXTURE_FAMILIES: [TextureFamily; 4] = [
    TextureFamily::Flat,
    TextureFamily::Gradient,
    TextureFamily::Stripes,
    TextureFamily::Speckle,
];

/// Concrete geometry in pixel coordinates. All variants are connected
/// regions by construction (the blob is star-convex, the ring an annulus,
/// the composite a union of overlapping ellipses).
#[derive(Clone, Debug)]
pub enum Geometry {
    Ellipse {
        cx: f64,
        cy: f64,
        a: f64,
        b: f64,
        theta: f64,
    },
    Rectangle {
        cx: f64,
        cy: f64,
        a: f64,
        b: f64,
        theta: f64,
    },
    /// Star polygon: per-spoke radii, linearly interpolated over angle.
    Blob {
        cx: f64,
        cy: f64,
        radii: Vec<f64>,
        theta: f64,
    },
    Ring {
        cx: f64,
        cy: f64,
        a: f64,
        b: f64,
        theta: f64,
        /// inner-to-outer scale in (0,1)
        inner: f64,
    },
    Composite {
        parts: Vec<(f64, f64, f64, f64, f64)>,
    },
}

impl Geometry {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Geometry::Ellipse { cx, cy, a, b, theta } => {
                ellipse_contains(x, y, *cx, *cy, *a, *b, *theta)
            }
            Geometry::Rectangle { cx, cy, a, b, theta } => {
                let (u, v) = rotate_into(x - cx, y - cy, *theta);
                u.abs() <= *a && v.abs() <= *b
            }
            Geometry::Blob { cx, cy, radii, theta } => {
                let dx = x - cx;
                let dy = y - cy;
                let dist = (dx * dx + dy * dy).sqrt();
                if dist == 0.0 {
                    return true;
                }
                let phi = dy.atan2(dx) - theta;
                dist <= blob_radius(radii, phi)
            }
            Geometry::Ring { cx, cy, a, b, theta, inner } => {
                ellipse_contains(x, y, *cx, *cy, *a, *b, *theta)
                    && !ellipse_contains(x, y, *cx, *cy, a * inner, b * inner, *theta)
            }
            Geometry::Composite { parts } => parts
                .iter()
                .any(|&(cx, cy, a, b, theta)| ellipse_contains(x, y, cx, cy, a, b, theta)),
        }
    }

    /// Rasterize at pixel centers.
    pub fn mask(&self, h: usize, w: usize) -> BinaryMask {
        BinaryMask::from_fn(h, w, |y, x| self.contains(x as f64 + 0.5, y as f64 + 0.5))
    }

    /// Nominal center used for occluder placement.
    pub fn center(&self) -> (f64, f64) {
        match self {
            Geometry::Ellipse { cx, cy, .. }
            | Geometry::Rectangle { cx, cy, .. }
            | Geometry::Blob { cx, cy, .. }
            | Geometry::Ring { cx, cy, .. } => (*cx, *cy),
            Geometry::Composite { parts } => {
                let n = parts.len() as f64;
                (
                    parts.iter().map(|p| p.0).sum::<f64>() / n,
                    parts.iter().map(|p| p.1).sum::<f64>() / n,
                )
            }
        }
    }
}

fn ellipse_contains(x: f64, y: f64, cx: f64, cy: f64, a: f64, b: f64, theta: f64) -> bool {
    let (u, v) = rotate_into(x - cx, y - cy, theta);
    let ua = u / a;
    let vb = v / b;
    ua * ua + vb * vb <= 1.0
}

#[inline]
fn rotate_into(dx: f64, dy: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (dx * c + dy * s, -dx * s + dy * c)
}

fn blob_radius(radii: &[f64], phi: f64) -> f64 {
    let n = radii.len();
    let tau = std::f64::consts::TAU;
    let t = (phi.rem_euclid(tau)) / tau * n as f64;
    let i = (t.floor() as usize) % n;
    let frac = t - t.floor();
    radii[i] * (1.0 - frac) + radii[(i + 1) % n] * frac
}

/// Deterministic per-pixel noise in [0,1): splitmix-style hash of
/// (x, y, seed).
#[inline]
pub fn hash01(x: usize, y: usize, seed: u64) -> f64 {
    let mut z = seed ^ (x as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (y as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// One drawn texture instance: palette endpoints, orientation, frequency,
/// phase and noise.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TextureDraw {
    pub family: TextureFamily,
    pub c1: [f64; 3],
    pub c2: [f64; 3],
    pub freq: f64,
    pub phase: f64,
    pub dir: (f64, f64),
    pub noise_amp: f64,
    pub noise_seed: u64,
}

impl TextureDraw {
    /// Color at pixel center (x, y); `extent` normalizes the gradient axis.
    pub fn sample(&self, x: usize, y: usize, extent: (f64, f64)) -> [f64; 3] {
        let fx = x as f64 / extent.0.max(1.0);
        let fy = y as f64 / extent.1.max(1.0);
        let axis = self.dir.0 * fx + self.dir.1 * fy;
        let base = match self.family {
            TextureFamily::Flat => self.c1,
            TextureFamily::Gradient => {
                let t = (axis * 0.5 + 0.5).clamp(0.0, 1.0);
                lerp3(self.c1, self.c2, t)
            }
            TextureFamily::Stripes => {
                let s = (std::f64::consts::TAU * (self.freq * axis + self.phase)).sin();
                let t = 0.5 + 0.5 * s;
                lerp3(self.c1, self.c2, t)
            }
            TextureFamily::Speckle => {
                let t = hash01(x, y, self.noise_seed);
                lerp3(self.c1, self.c2, t)
            }
        };
        if self.noise_amp > 0.0 {
            let n = (hash01(x, y, self.noise_seed ^ 0xa5a5_5a5a) - 0.5) * 2.0 * self.noise_amp;
            [
                (base[0] + n).clamp(0.0, 1.0),
                (base[1] + n).clamp(0.0, 1.0),
                (base[2] + n).clamp(0.0, 1.0),
            ]
        } else {
            base
        }
    }
}

pub fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_are_connected() {
        let shapes = [
            Geometry::Ellipse { cx: 16.0, cy: 16.0, a: 8.0, b: 5.0, theta: 0.7 },
            Geometry::Rectangle { cx: 16.0, cy: 16.0, a: 7.0, b: 4.0, theta: 0.3 },
            Geometry::Blob {
                cx: 16.0,
                cy: 16.0,
                radii: vec![6.0, 8.0, 5.0, 9.0, 7.0, 6.5, 8.5, 5.5],
                theta: 0.1,
            },
            Geometry::Ring { cx: 16.0, cy: 16.0, a: 9.0, b: 8.0, theta: 0.0, inner: 0.55 },
            Geometry::Composite {
                parts: vec![(13.0, 16.0, 6.0, 4.0, 0.2), (19.0, 16.0, 5.0, 5.0, 1.0)],
            },
        ];
        for g in shapes {
            let m = g.mask(32, 32);
            assert!(m.area() > 10, "{g:?} too small");
            assert_eq!(m.component_areas().len(), 1, "{g:?} not connected");
        }
    }

    #[test]
    fn hash01_deterministic_and_in_range() {
        for y in 0..8 {
            for x in 0..8 {
                let v = hash01(x, y, 42);
                assert!((0.0..1.0).contains(&v));
                assert_eq!(v, hash01(x, y, 42));
            }
        }
        assert_ne!(hash01(1, 2, 3), hash01(2, 1, 3));
    }
}
