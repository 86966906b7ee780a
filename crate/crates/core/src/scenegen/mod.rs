//! Deterministic procedural generator of ambiguous salient-object scenes.
//!
//! Each sample derives its own RNG stream from (dataset seed, sample index),
//! so generation is embarrassingly parallel and reproduces bit-exactly in
//! any execution order. A scene is drawn in two phases: all randomness goes
//! into a [`SceneSpec`] first, then rasterization is a pure function of the
//! spec.

mod modality;
mod scene;
mod shapes;

pub mod io;

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;

pub use modality::{gaussian_blur, synthesize_modalities, ModalityCorruptionSpec};
pub use scene::{generate_dataset, generate_scene, sample_category, LightingDraw, ObjectDraw, SceneSpec};
pub use shapes::{Geometry, ShapeFamily, TextureDraw, TextureFamily, SHAPE_FAMILIES, TEXTURE_FAMILIES};

/// One generated category: a point in the shape × texture grid plus
/// difficulty knobs. Scene-level variety comes from the per-sample draws
/// (aspect ratio, object count, size, placement, orientation, shape
/// parameters, texture parameters, background draw, clutter, occlusion,
/// lighting, designated index), mirroring a prompt library's variation axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategorySpec {
    pub id: u32,
    pub shape: ShapeFamily,
    pub texture: TextureFamily,
    /// object area as a fraction of the image, e.g. [0.05, 0.35]
    pub size_range: (f64, f64),
    /// distractor count range, 0..=8
    pub clutter_range: (u32, u32),
    /// 0 = maximally distinct palette, 1 = object matches background
    pub background_similarity: f64,
    /// fraction of the object an occluder may cover, 0..=0.2
    pub occlusion_fraction: f64,
}

impl CategorySpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.size_range;
        if !(0.0 < lo && lo <= hi && hi <= 0.5) {
            return Err(Error::Config(format!(
                "category {}: size range ({lo}, {hi}) out of bounds",
                self.id
            )));
        }
        if self.clutter_range.0 > self.clutter_range.1 || self.clutter_range.1 > 8 {
            return Err(Error::Config(format!(
                "category {}: clutter range {:?} out of bounds",
                self.id, self.clutter_range
            )));
        }
        if !(0.0..=1.0).contains(&self.background_similarity) {
            return Err(Error::Config(format!(
                "category {}: background similarity {}",
                self.id, self.background_similarity
            )));
        }
        if !(0.0..=0.2).contains(&self.occlusion_fraction) {
            return Err(Error::Config(format!(
                "category {}: occlusion fraction {}",
                self.id, self.occlusion_fraction
            )));
        }
        Ok(())
    }

    pub fn is_hard(&self) -> bool {
        self.background_similarity >= 0.8
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryCatalog {
    pub categories: Vec<CategorySpec>,
}

impl CategoryCatalog {
    /// Default 32-category catalog: the 20 shape × texture combinations plus
    /// 12 hard variants with background similarity ≥ 0.8.
    pub fn default_catalog() -> Self {
        Self::with_hard(32, 12)
    }

    /// `n` categories of which the last `n_hard` are planted hard ones.
    pub fn with_hard(n: usize, n_hard: usize) -> Self {
        assert!(n_hard <= n, "hard count exceeds catalog size");
        let mut categories = Vec::with_capacity(n);
        let n_easy = n - n_hard;
        for i in 0..n_easy {
            let shape = SHAPE_FAMILIES[i % 5];
            let texture = TEXTURE_FAMILIES[(i / 5) % 4];
            let variant = i / 20;
            categories.push(CategorySpec {
                id: i as u32,
                shape,
                texture,
                size_range: match (i + variant) % 3 {
                    0 => (0.08, 0.25),
                    1 => (0.05, 0.2),
                    _ => (0.12, 0.35),
                },
                clutter_range: match i % 4 {
                    0 => (0, 2),
                    1 => (1, 4),
                    2 => (2, 6),
                    _ => (3, 8),
                },
                background_similarity: [0.1, 0.25, 0.4][i % 3],
                occlusion_fraction: [0.0, 0.08, 0.15][(i / 3) % 3],
            });
        }
        for j in 0..n_hard {
            let i = n_easy + j;
            categories.push(CategorySpec {
                id: i as u32,
                shape: SHAPE_FAMILIES[j % 5],
                texture: TEXTURE_FAMILIES[j % 4],
                size_range: (0.04, 0.12),
                clutter_range: (4, 8),
                background_similarity: if j % 2 == 0 { 0.85 } else { 0.92 },
                occlusion_fraction: 0.15,
            });
        }
        CategoryCatalog { categories }
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn hard_ids(&self) -> Vec<u32> {
        self.categories
            .iter()
            .filter(|c| c.is_hard())
            .map(|c| c.id)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.categories {
            c.validate()?;
        }
        Ok(())
    }
}

/// Generator configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// Square-equivalent resolution; the pixel budget is its square,
    /// redistributed over the drawn aspect ratio.
    pub base_resolution: usize,
    /// Fixed aspect-ratio set, sampled per image.
    pub aspect_set: Vec<(u32, u32)>,
    /// Probability a scene contains multiple near-equal salient candidates.
    pub p_amb: f64,
    /// Maximum candidate count when ambiguous.
    pub k_max: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            base_resolution: 64,
            aspect_set: vec![(1, 1), (4, 3), (3, 4)],
            p_amb: 0.3,
            k_max: 3,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_resolution < 16 {
            return Err(Error::Config("base resolution must be >= 16".into()));
        }
        if self.aspect_set.is_empty() || self.aspect_set.iter().any(|&(a, b)| a == 0 || b == 0) {
            return Err(Error::Config("aspect set must be nonempty and positive".into()));
        }
        if !(0.0..=1.0).contains(&self.p_amb) {
            return Err(Error::Config(format!("p_amb {} out of [0,1]", self.p_amb)));
        }
        if self.k_max < 1 {
            return Err(Error::Config("k_max must be >= 1".into()));
        }
        Ok(())
    }
}

/// One generated scene: image, designated ground truth, the full candidate
/// set (the gt mask is candidates[designated], shared bit-for-bit), category
/// and provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub category: u32,
    pub round: u32,
    /// per-sample derived RNG seed
    pub seed: u64,
    pub image: Tensor,
    pub gt: BinaryMask,
    pub candidates: Vec<BinaryMask>,
    pub designated: usize,
}

impl Sample {
    pub fn check_invariants(&self) -> Result<()> {
        if self.designated >= self.candidates.len() {
            return Err(Error::Dataset(format!(
                "sample {}: designated {} out of {} candidates",
                self.id,
                self.designated,
                self.candidates.len()
            )));
        }
        if self.candidates[self.designated] != self.gt {
            return Err(Error::Dataset(format!(
                "sample {}: gt mask is not the designated candidate",
                self.id
            )));
        }
        for (i, a) in self.candidates.iter().enumerate() {
            for b in &self.candidates[i + 1..] {
                if a.iou(b) >= 0.5 {
                    return Err(Error::Dataset(format!(
                        "sample {}: candidate masks overlap with IoU >= 0.5",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Resample image and masks to a fixed resolution (model input).
    pub fn resized(&self, h: usize, w: usize) -> Sample {
        let dims = self.image.shape().dims();
        if dims[1] == h && dims[2] == w {
            return self.clone();
        }
        let image = crate::diffcore::bilinear_resize(&self.image, h, w);
        let candidates: Vec<BinaryMask> = self.candidates.iter().map(|m| m.resize(h, w)).collect();
        Sample {
            id: self.id,
            category: self.category,
            round: self.round,
            seed: self.seed,
            image,
            gt: candidates[self.designated].clone(),
            candidates,
            designated: self.designated,
        }
    }

    /// Image luma (mean of channels), rank-2.
    pub fn luma(&self) -> Tensor {
        let dims = self.image.shape().dims();
        let (c, h, w) = (dims[0], dims[1], dims[2]);
        let d = self.image.data();
        Tensor::from_fn_2d(h, w, |y, x| {
            (0..c).map(|ci| d[(ci * h + y) * w + x]).sum::<f64>() / c as f64
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_catalog_has_32_with_12_hard() {
        let cat = CategoryCatalog::default_catalog();
        assert_eq!(cat.len(), 32);
        assert_eq!(cat.hard_ids().len(), 12);
        cat.validate().unwrap();
        // ids are dense and ordered
        for (i, c) in cat.categories.iter().enumerate() {
            assert_eq!(c.id, i as u32);
        }
    }

    #[test]
    fn with_hard_places_hard_categories_last() {
        let cat = CategoryCatalog::with_hard(16, 2);
        assert_eq!(cat.len(), 16);
        assert_eq!(cat.hard_ids(), vec![14, 15]);
        cat.validate().unwrap();
    }
}
