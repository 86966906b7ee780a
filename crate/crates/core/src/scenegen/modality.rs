//! Proxy modality synthesis. Three complementary, individually insufficient
//! views of a scene:
//!
//! * semantic — image edge/texture channels plus the ground truth blurred
//!   with a wide (per-sample jittered) kernel, with small designated objects
//!   randomly dropped;
//! * generative — the ground truth at quarter resolution with boundary
//!   jitter and additive noise (coarse layout, bad boundaries), plus coarse
//!   luma;
//! * concept — smoothed ground truth and smoothed complement, both shifted
//!   by a small random offset (good localization, no shape detail).
//!
//! Corruption strengths are tuned so no single view recovers the mask at
//! high IoU while their fusion does.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{bilinear_resize, Shape, Tensor};
use crate::netmodel::ModalityBundle;

use super::shapes::hash01;
use super::Sample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModalityCorruptionSpec {
    /// Wide blur applied to the gt inside the semantic proxy (intrinsic).
    pub semantic_blur_sigma: f64,
    /// Relative jitter of that sigma per sample.
    pub semantic_sigma_jitter: f64,
    /// Probability of dropping the blurred-gt channel for small objects.
    pub semantic_drop_prob: f64,
    /// "Small" means designated area below this fraction of the image.
    pub semantic_drop_area_frac: f64,
    pub semantic_noise: f64,
    pub generative_noise: f64,
    /// Boundary jitter: the coarse field is shifted by ±this around 0.5.
    pub generative_threshold_jitter: f64,
    /// Smoothing of the concept channels (intrinsic).
    pub concept_sigma: f64,
    /// Maximum spatial shift of the concept channels, in pixels.
    pub concept_shift_max: usize,
    pub concept_noise: f64,
}

impl Default for ModalityCorruptionSpec {
    fn default() -> Self {
        ModalityCorruptionSpec {
            semantic_blur_sigma: 4.0,
            semantic_sigma_jitter: 0.5,
            semantic_drop_prob: 0.5,
            semantic_drop_area_frac: 0.06,
            semantic_noise: 0.15,
            generative_noise: 0.3,
            generative_threshold_jitter: 0.22,
            concept_sigma: 2.0,
            concept_shift_max: 3,
            concept_noise: 0.05,
        }
    }
}

impl ModalityCorruptionSpec {
    /// Corruptions off; intrinsic smoothing kept.
    pub fn zero() -> Self {
        ModalityCorruptionSpec {
            semantic_sigma_jitter: 0.0,
            semantic_drop_prob: 0.0,
            semantic_noise: 0.0,
            generative_noise: 0.0,
            generative_threshold_jitter: 0.0,
            concept_shift_max: 0,
            concept_noise: 0.0,
            ..ModalityCorruptionSpec::default()
        }
    }

    pub fn semantic_channels(&self) -> usize {
        3
    }

    pub fn generative_channels(&self) -> usize {
        2
    }

    pub fn concept_channels(&self) -> usize {
        2
    }
}

/// Separable Gaussian blur with replicate padding; σ = 0 is the identity.
pub fn gaussian_blur(plane: &Tensor, sigma: f64) -> Tensor {
    if sigma <= 0.0 {
        return plane.clone();
    }
    let (h, w) = plane.shape().as_hw().expect("blur wants rank-2");
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for i in -radius..=radius {
        kernel.push((-(i * i) as f64 / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in kernel.iter_mut() {
        *k /= norm;
    }
    let src = plane.data();
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let sx = (x as isize + ki as isize - radius).clamp(0, w as isize - 1) as usize;
                acc += kv * src[y * w + sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let sy = (y as isize + ki as isize - radius).clamp(0, h as isize - 1) as usize;
                acc += kv * tmp[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    Tensor::from_vec(plane.shape().clone(), out).expect("blur shape")
}

/// Sobel gradient magnitude, scaled into [0,1].
fn sobel_magnitude(luma: &Tensor) -> Tensor {
    let (h, w) = luma.shape().as_hw().expect("sobel wants rank-2");
    let at = |y: isize, x: isize| {
        let yy = y.clamp(0, h as isize - 1) as usize;
        let xx = x.clamp(0, w as isize - 1) as usize;
        luma.data()[yy * w + xx]
    };
    Tensor::from_fn_2d(h, w, |y, x| {
        let (y, x) = (y as isize, x as isize);
        let gx = at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1)
            - at(y - 1, x - 1)
            - 2.0 * at(y, x - 1)
            - at(y + 1, x - 1);
        let gy = at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1)
            - at(y - 1, x - 1)
            - 2.0 * at(y - 1, x)
            - at(y - 1, x + 1);
        ((gx * gx + gy * gy).sqrt() * 0.25).min(1.0)
    })
}

/// 3×3 local standard deviation of the luma, scaled into [0,1].
fn texture_energy(luma: &Tensor) -> Tensor {
    let (h, w) = luma.shape().as_hw().expect("rank-2");
    let at = |y: isize, x: isize| {
        let yy = y.clamp(0, h as isize - 1) as usize;
        let xx = x.clamp(0, w as isize - 1) as usize;
        luma.data()[yy * w + xx]
    };
    Tensor::from_fn_2d(h, w, |y, x| {
        let (y, x) = (y as isize, x as isize);
        let mut sum = 0.0;
        let mut sq = 0.0;
        for dy in -1..=1 {
            for dx in -1..=1 {
                let v = at(y + dy, x + dx);
                sum += v;
                sq += v * v;
            }
        }
        let mean = sum / 9.0;
        ((sq / 9.0 - mean * mean).max(0.0).sqrt() * 3.0).min(1.0)
    })
}

/// Shift a plane by (dy, dx) with replicate sampling.
fn shift_plane(plane: &Tensor, dy: isize, dx: isize) -> Tensor {
    if dy == 0 && dx == 0 {
        return plane.clone();
    }
    let (h, w) = plane.shape().as_hw().expect("rank-2");
    Tensor::from_fn_2d(h, w, |y, x| {
        let sy = (y as isize - dy).clamp(0, h as isize - 1) as usize;
        let sx = (x as isize - dx).clamp(0, w as isize - 1) as usize;
        plane.data()[sy * w + sx]
    })
}

fn add_hash_noise(plane: &Tensor, amp: f64, seed: u64) -> Tensor {
    if amp == 0.0 {
        return plane.clone();
    }
    let (h, w) = plane.shape().as_hw().expect("rank-2");
    Tensor::from_fn_2d(h, w, |y, x| {
        (plane.data()[y * w + x] + amp * (hash01(x, y, seed) - 0.5) * 2.0).clamp(0.0, 1.0)
    })
}

fn stack_planes(planes: &[Tensor]) -> Tensor {
    let (h, w) = planes[0].shape().as_hw().expect("rank-2");
    let mut data = Vec::with_capacity(planes.len() * h * w);
    for p in planes {
        data.extend_from_slice(p.data());
    }
    Tensor::from_vec(Shape::new(&[planes.len(), h, w]), data).expect("stack shape")
}

/// Build the three proxy modality stacks for one sample. Deterministic given
/// the RNG state; all per-pixel noise comes from hashed fields seeded by
/// draws taken here, in a fixed order.
pub fn synthesize_modalities(
    sample: &Sample,
    spec: &ModalityCorruptionSpec,
    rng: &mut ChaCha8Rng,
) -> ModalityBundle {
    let dims = sample.image.shape().dims();
    let (h, w) = (dims[1], dims[2]);
    let luma = sample.luma();
    let gt = sample.gt.to_tensor();

    // ---- semantic proxy ----
    let sigma = if spec.semantic_sigma_jitter > 0.0 {
        spec.semantic_blur_sigma
            * (1.0 + rng.gen_range(-spec.semantic_sigma_jitter..=spec.semantic_sigma_jitter))
    } else {
        spec.semantic_blur_sigma
    };
    let drop = spec.semantic_drop_prob > 0.0
        && (sample.gt.area() as f64) < spec.semantic_drop_area_frac * (h * w) as f64
        && rng.gen_bool(spec.semantic_drop_prob);
    let noise_seed_sem: u64 = rng.gen();
    let blurred_gt = if drop {
        Tensor::zeros(gt.shape().clone())
    } else {
        gaussian_blur(&gt, sigma)
    };
    let semantic = stack_planes(&[
        sobel_magnitude(&luma),
        texture_energy(&luma),
        add_hash_noise(&blurred_gt, spec.semantic_noise, noise_seed_sem),
    ]);

    // ---- generative proxy ----
    let qh = (h / 4).max(1);
    let qw = (w / 4).max(1);
    let coarse_gt = bilinear_resize(&gt, qh, qw);
    let theta_shift = if spec.generative_threshold_jitter > 0.0 {
        rng.gen_range(-spec.generative_threshold_jitter..=spec.generative_threshold_jitter)
    } else {
        0.0
    };
    let noise_seed_gen: u64 = rng.gen();
    let corrupted = Tensor::from_vec(
        coarse_gt.shape().clone(),
        coarse_gt
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let x = i % qw;
                let y = i / qw;
                let n = spec.generative_noise * (hash01(x, y, noise_seed_gen) - 0.5) * 2.0;
                (v + theta_shift + n).clamp(0.0, 1.0)
            })
            .collect(),
    )
    .expect("coarse shape");
    let coarse_luma = bilinear_resize(&luma, qh, qw);
    let generative = stack_planes(&[corrupted, coarse_luma]);

    // ---- concept proxy ----
    let smooth_obj = gaussian_blur(&gt, spec.concept_sigma);
    let smooth_bg = gaussian_blur(&gt.map(|v| 1.0 - v), spec.concept_sigma);
    let (dy, dx) = if spec.concept_shift_max > 0 {
        let s = spec.concept_shift_max as isize;
        (rng.gen_range(-s..=s), rng.gen_range(-s..=s))
    } else {
        (0, 0)
    };
    let noise_seed_con: u64 = rng.gen();
    let concept = stack_planes(&[
        add_hash_noise(&shift_plane(&smooth_obj, dy, dx), spec.concept_noise, noise_seed_con),
        add_hash_noise(
            &shift_plane(&smooth_bg, dy, dx),
            spec.concept_noise,
            noise_seed_con ^ 0x5a5a,
        ),
    ]);

    ModalityBundle {
        semantic,
        generative,
        concept,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{generate_dataset, CategoryCatalog, GenConfig};
    use crate::util::rng_for;

    fn sample() -> Sample {
        let cat = CategoryCatalog::with_hard(4, 0);
        generate_dataset(&cat, &[1.0; 4], 1, &GenConfig::default(), 21, 0, 0)
            .unwrap()
            .pop()
            .unwrap()
    }

    #[test]
    fn zero_corruption_concept_is_smoothed_gt_exactly() {
        let s = sample();
        let spec = ModalityCorruptionSpec::zero();
        let mut rng = rng_for(1, "mod", 0);
        let bundle = synthesize_modalities(&s, &spec, &mut rng);
        let want = gaussian_blur(&s.gt.to_tensor(), spec.concept_sigma);
        let dims = bundle.concept.shape().dims();
        let (h, w) = (dims[1], dims[2]);
        let obj_channel = &bundle.concept.data()[0..h * w];
        assert_eq!(obj_channel, want.data());
    }

    #[test]
    fn bundle_shapes_match_contract() {
        let s = sample();
        let spec = ModalityCorruptionSpec::default();
        let mut rng = rng_for(2, "mod", 0);
        let bundle = synthesize_modalities(&s, &spec, &mut rng);
        let dims = s.image.shape().dims();
        let (h, w) = (dims[1], dims[2]);
        assert_eq!(bundle.semantic.shape().dims(), &[3, h, w]);
        assert_eq!(bundle.generative.shape().dims(), &[2, h / 4, w / 4]);
        assert_eq!(bundle.concept.shape().dims(), &[2, h, w]);
    }

    #[test]
    fn synthesis_is_deterministic_per_stream() {
        let s = sample();
        let spec = ModalityCorruptionSpec::default();
        let a = synthesize_modalities(&s, &spec, &mut rng_for(3, "mod", 7));
        let b = synthesize_modalities(&s, &spec, &mut rng_for(3, "mod", 7));
        assert_eq!(a, b);
        let c = synthesize_modalities(&s, &spec, &mut rng_for(3, "mod", 8));
        assert_ne!(a, c);
    }

    #[test]
    fn blur_preserves_mass_on_interior_fields() {
        let t = Tensor::full(crate::diffcore::Shape::new(&[16, 16]), 0.6);
        let b = gaussian_blur(&t, 2.5);
        for &v in b.data() {
            assert!((v - 0.6).abs() < 1e-9);
        }
    }
}
