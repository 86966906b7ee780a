//! Multi-stage quality filtering: augmentation-consistency of a model's
//! predictions, connected-component cohesion of the label mask, and coverage
//! of the designated object. The consistency stage compares transformed
//! predictions to the base prediction, never to ground truth, so it works on
//! unlabeled generations; the component and coverage stages are rule-based
//! proxies for qualitative mask review.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffcore::{bilinear_resize, Tensor};
use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// Anything that turns an RGB raster into a binary mask. The student model
/// implements this with its score-selected branch; tests use hand-built
/// stubs.
pub trait MaskPredictor: Sync {
    fn predict_mask(&self, image: &Tensor) -> Result<BinaryMask>;
}

impl MaskPredictor for crate::netmodel::MultiMaskNet {
    fn predict_mask(&self, image: &Tensor) -> Result<BinaryMask> {
        self.predict_mask_selected(image)
    }
}

/// Mask-invertible image transforms for consistency scoring. Flips invert
/// exactly; rescaling resamples the image but leaves the prediction
/// resolution unchanged, so its mask inverse is the identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    HFlip,
    VFlip,
    Rescale(f64),
}

impl Transform {
    pub fn validate(&self) -> Result<()> {
        if let Transform::Rescale(s) = self {
            if !(0.1..=1.0).contains(s) {
                return Err(Error::BadTransform(format!(
                    "rescale factor {s} outside [0.1, 1.0]"
                )));
            }
        }
        Ok(())
    }

    pub fn apply_image(&self, image: &Tensor) -> Tensor {
        match self {
            Transform::HFlip => image.flip_h(),
            Transform::VFlip => image.flip_v(),
            Transform::Rescale(s) => {
                let dims = image.shape().dims();
                let (h, w) = (dims[1], dims[2]);
                let nh = ((h as f64 * s).round() as usize).max(4);
                let nw = ((w as f64 * s).round() as usize).max(4);
                bilinear_resize(image, nh, nw)
            }
        }
    }

    pub fn invert_mask(&self, mask: &BinaryMask) -> BinaryMask {
        match self {
            Transform::HFlip => mask.flip_h(),
            Transform::VFlip => mask.flip_v(),
            Transform::Rescale(_) => mask.clone(),
        }
    }
}

/// Default transform set: exactly invertible flips plus one resolution
/// perturbation.
pub fn default_transforms() -> Vec<Transform> {
    vec![Transform::HFlip, Transform::VFlip, Transform::Rescale(0.75)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub consistency_enabled: bool,
    /// κ threshold τ; samples below are rejected.
    pub consistency_threshold: f64,
    pub components_enabled: bool,
    pub max_main_components: usize,
    /// "Main" components hold at least this fraction of the foreground.
    pub main_component_area_frac: f64,
    pub coverage_enabled: bool,
    /// Coverage must strictly exceed this fraction of the reference object.
    pub coverage_threshold: f64,
    /// Salient-presence proxy: largest component must reach this fraction of
    /// the image.
    pub presence_min_image_frac: f64,
    pub transforms: Vec<Transform>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            consistency_enabled: true,
            consistency_threshold: 0.8,
            components_enabled: true,
            max_main_components: 5,
            main_component_area_frac: 0.005,
            coverage_enabled: true,
            coverage_threshold: 0.70,
            presence_min_image_frac: 0.01,
            transforms: default_transforms(),
        }
    }
}

impl FilterConfig {
    pub fn disabled() -> Self {
        FilterConfig {
            consistency_enabled: false,
            components_enabled: false,
            coverage_enabled: false,
            ..FilterConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.transforms {
            t.validate()?;
        }
        if !(0.0..=1.0).contains(&self.consistency_threshold)
            || !(0.0..=1.0).contains(&self.coverage_threshold)
        {
            return Err(Error::Config("filter thresholds must lie in [0,1]".into()));
        }
        Ok(())
    }
}

/// Mean IoU between the base prediction and inverse-transformed predictions
/// on transformed images.
pub fn consistency_score(
    model: &dyn MaskPredictor,
    image: &Tensor,
    transforms: &[Transform],
) -> Result<f64> {
    for t in transforms {
        t.validate()?;
    }
    let base = model.predict_mask(image)?;
    if transforms.is_empty() {
        return Ok(1.0);
    }
    let mut acc = 0.0;
    for t in transforms {
        let pred = model.predict_mask(&t.apply_image(image))?;
        let restored = t.invert_mask(&pred);
        acc += base.iou(&restored);
    }
    Ok(acc / transforms.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    /// Number of main components (area >= frac · foreground area).
    pub count: usize,
    pub pass: bool,
}

/// 4-connectivity component labeling; pass iff the main-component count lies
/// in [1, max]. An empty foreground fails with count 0.
pub fn component_check(mask: &BinaryMask, max_components: usize, area_frac: f64) -> ComponentReport {
    let areas = mask.component_areas();
    let fg: usize = areas.iter().sum();
    if fg == 0 {
        return ComponentReport {
            count: 0,
            pass: false,
        };
    }
    let threshold = area_frac * fg as f64;
    let count = areas.iter().filter(|&&a| a as f64 >= threshold).count();
    ComponentReport {
        count,
        pass: (1..=max_components).contains(&count),
    }
}

/// Coverage of the reference object: |pred ∩ ref| / |ref|, pass iff strictly
/// above the threshold. An empty reference violates a generator invariant.
pub fn coverage_check(
    pred: &BinaryMask,
    reference: &BinaryMask,
    threshold: f64,
    sample_id: &str,
) -> Result<(f64, bool)> {
    let ref_area = reference.area();
    if ref_area == 0 {
        return Err(Error::EmptyReference(sample_id.to_string()));
    }
    let frac = pred.intersection_area(reference) as f64 / ref_area as f64;
    Ok((frac, frac > threshold))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectStage {
    Consistency,
    Components,
    Coverage,
}

impl std::fmt::Display for RejectStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectStage::Consistency => write!(f, "consistency"),
            RejectStage::Components => write!(f, "components"),
            RejectStage::Coverage => write!(f, "coverage"),
        }
    }
}

/// Per-sample verdict with every stage's measured value; `kept` iff all
/// enabled stages pass, the reject reason is the first failing stage in
/// pipeline order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub id: String,
    pub kept: bool,
    pub consistency: Option<f64>,
    pub component_count: Option<usize>,
    pub coverage: Option<f64>,
    pub reject_reason: Option<RejectStage>,
}

/// One filtering work item: the image the model sees, the label mask under
/// review, and the generator's designated object as coverage reference.
#[derive(Clone, Debug)]
pub struct FilterItem {
    pub id: String,
    pub image: Tensor,
    pub label: BinaryMask,
    pub reference: BinaryMask,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct FilterSummary {
    pub evaluated: usize,
    pub kept: usize,
    pub rejected: usize,
    pub rejected_consistency: usize,
    pub rejected_components: usize,
    pub rejected_coverage: usize,
    pub rejection_fraction: f64,
}

/// Run the three stages over all items (in parallel, verdicts in input
/// order). All stage values are measured even when an earlier stage already
/// failed, so the verdict partition is independent of stage order.
pub fn filter_dataset(
    model: &dyn MaskPredictor,
    items: &[FilterItem],
    cfg: &FilterConfig,
) -> Result<(Vec<FilterVerdict>, FilterSummary)> {
    cfg.validate()?;
    let verdicts: Vec<FilterVerdict> = items
        .par_iter()
        .map(|item| {
            let consistency = if cfg.consistency_enabled {
                Some(consistency_score(model, &item.image, &cfg.transforms)?)
            } else {
                None
            };
            let component = if cfg.components_enabled {
                Some(component_check(
                    &item.label,
                    cfg.max_main_components,
                    cfg.main_component_area_frac,
                ))
            } else {
                None
            };
            let coverage = if cfg.coverage_enabled {
                Some(coverage_check(
                    &item.label,
                    &item.reference,
                    cfg.coverage_threshold,
                    &item.id,
                )?)
            } else {
                None
            };

            // salient-presence proxy rides with the semantic-validation stage
            let presence_pass = if cfg.coverage_enabled {
                let total = (item.label.height() * item.label.width()) as f64;
                let largest = item.label.component_areas().into_iter().max().unwrap_or(0);
                largest as f64 >= cfg.presence_min_image_frac * total
            } else {
                true
            };

            let stage_fail = [
                (
                    RejectStage::Consistency,
                    consistency.map(|k| k < cfg.consistency_threshold).unwrap_or(false),
                ),
                (
                    RejectStage::Components,
                    component.map(|c| !c.pass).unwrap_or(false),
                ),
                (
                    RejectStage::Coverage,
                    coverage.map(|(_, pass)| !pass).unwrap_or(false) || !presence_pass,
                ),
            ];
            let reject_reason = stage_fail.iter().find(|(_, fail)| *fail).map(|(s, _)| *s);
            Ok(FilterVerdict {
                id: item.id.clone(),
                kept: reject_reason.is_none(),
                consistency,
                component_count: component.map(|c| c.count),
                coverage: coverage.map(|(f, _)| f),
                reject_reason,
            })
        })
        .collect::<Result<_>>()?;

    let mut summary = FilterSummary {
        evaluated: verdicts.len(),
        ..FilterSummary::default()
    };
    for v in &verdicts {
        if v.kept {
            summary.kept += 1;
        } else {
            summary.rejected += 1;
            match v.reject_reason.unwrap() {
                RejectStage::Consistency => summary.rejected_consistency += 1,
                RejectStage::Components => summary.rejected_components += 1,
                RejectStage::Coverage => summary.rejected_coverage += 1,
            }
        }
    }
    summary.rejection_fraction = if summary.evaluated == 0 {
        0.0
    } else {
        summary.rejected as f64 / summary.evaluated as f64
    };
    Ok((verdicts, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Shape;

    /// Stub that thresholds luma; equivariant under flips by construction.
    struct LumaStub;

    impl MaskPredictor for LumaStub {
        fn predict_mask(&self, image: &Tensor) -> Result<BinaryMask> {
            let dims = image.shape().dims();
            let (c, h, w) = (dims[0], dims[1], dims[2]);
            Ok(BinaryMask::from_fn(h, w, |y, x| {
                let v: f64 = (0..c).map(|ch| image.data()[(ch * h + y) * w + x]).sum();
                v / c as f64 > 0.5
            }))
        }
    }

    /// Adversarial stub: returns the left half-plane regardless of input.
    struct LeftHalfStub;

    impl MaskPredictor for LeftHalfStub {
        fn predict_mask(&self, _image: &Tensor) -> Result<BinaryMask> {
            Ok(BinaryMask::from_fn(16, 16, |_, x| x < 8))
        }
    }

    /// Constant-mask stub: same full-frame mask for any input.
    struct ConstantStub;

    impl MaskPredictor for ConstantStub {
        fn predict_mask(&self, _image: &Tensor) -> Result<BinaryMask> {
            Ok(BinaryMask::from_fn(16, 16, |_, _| true))
        }
    }

    fn blob_image(h: usize, w: usize) -> Tensor {
        Tensor::from_vec(Shape::new(&[3, h, w]), {
            let mut data = vec![0.1f64; 3 * h * w];
            for y in 4..h - 4 {
                for x in 4..w - 4 {
                    for c in 0..3 {
                        data[(c * h + y) * w + x] = 0.9;
                    }
                }
            }
            data
        })
        .unwrap()
    }

    #[test]
    fn constant_model_is_flip_consistent() {
        let img = blob_image(16, 16);
        let k = consistency_score(&ConstantStub, &img, &[Transform::HFlip, Transform::VFlip])
            .unwrap();
        assert_eq!(k, 1.0);
    }

    #[test]
    fn left_half_stub_fails_horizontal_flip() {
        let img = blob_image(16, 16);
        let k = consistency_score(&LeftHalfStub, &img, &[Transform::HFlip]).unwrap();
        assert_eq!(k, 0.0, "IoU(left half, right half) must be 0");
    }

    #[test]
    fn empty_transform_set_scores_one() {
        let img = blob_image(16, 16);
        let k = consistency_score(&LumaStub, &img, &[]).unwrap();
        assert_eq!(k, 1.0);
    }

    #[test]
    fn equivariant_model_is_consistent() {
        let img = blob_image(20, 24);
        let k = consistency_score(&LumaStub, &img, &default_transforms()).unwrap();
        assert!(k > 0.9, "luma threshold model should be consistent, got {k}");
    }

    #[test]
    fn bad_rescale_factor_is_rejected() {
        let img = blob_image(16, 16);
        assert!(consistency_score(&LumaStub, &img, &[Transform::Rescale(0.0)]).is_err());
    }

    #[test]
    fn component_check_cases() {
        // single blob
        let blob = BinaryMask::from_fn(16, 16, |y, x| (4..12).contains(&y) && (4..12).contains(&x));
        let r = component_check(&blob, 5, 0.005);
        assert_eq!((r.count, r.pass), (1, true));

        // 8 equal disjoint blobs
        let mut eight = BinaryMask::new(16, 16);
        for i in 0..8usize {
            let y = (i / 4) * 8 + 2;
            let x = (i % 4) * 4 + 1;
            for dy in 0..2 {
                for dx in 0..2 {
                    eight.set(y + dy, x + dx, true);
                }
            }
        }
        let r = component_check(&eight, 5, 0.005);
        assert_eq!((r.count, r.pass), (8, false));

        // empty mask fails with count 0
        let r = component_check(&BinaryMask::new(8, 8), 5, 0.005);
        assert_eq!((r.count, r.pass), (0, false));
    }

    #[test]
    fn specks_below_half_percent_are_not_main_components() {
        // 1 large blob (400 px) + 30 single-pixel specks: each speck is
        // 1/430 ≈ 0.23% of the foreground, below the 0.5% rule
        let mut m = BinaryMask::new(64, 64);
        for y in 10..30 {
            for x in 10..30 {
                m.set(y, x, true);
            }
        }
        let mut placed = 0;
        'outer: for y in (34..64).step_by(2) {
            for x in (0..64).step_by(2) {
                m.set(y, x, true);
                placed += 1;
                if placed == 30 {
                    break 'outer;
                }
            }
        }
        let r = component_check(&m, 5, 0.005);
        assert_eq!((r.count, r.pass), (1, true));
    }

    #[test]
    fn component_check_invariant_under_translation_and_rotation() {
        let mut m = BinaryMask::new(24, 24);
        for y in 2..8 {
            for x in 3..9 {
                m.set(y, x, true);
            }
        }
        for y in 14..20 {
            for x in 12..20 {
                m.set(y, x, true);
            }
        }
        let base = component_check(&m, 5, 0.005);
        let translated = component_check(&m.translate(3, 2), 5, 0.005);
        let rotated = component_check(&m.rotate90(), 5, 0.005);
        assert_eq!(base.count, translated.count);
        assert_eq!(base.count, rotated.count);
    }

    #[test]
    fn coverage_cases() {
        let reference = BinaryMask::from_fn(10, 10, |y, _| y < 4); // 40 px
        let superset = BinaryMask::from_fn(10, 10, |y, _| y < 6);
        let (f, pass) = coverage_check(&superset, &reference, 0.70, "s").unwrap();
        assert_eq!((f, pass), (1.0, true));

        let half = BinaryMask::from_fn(10, 10, |y, x| y < 4 && x < 5);
        let (f, pass) = coverage_check(&half, &reference, 0.70, "s").unwrap();
        assert_eq!((f, pass), (0.5, false));

        // exactly 70% fails the strict inequality
        let seventy = BinaryMask::from_fn(10, 10, |y, x| y < 4 && x < 7);
        let (f, pass) = coverage_check(&seventy, &reference, 0.70, "s").unwrap();
        assert!((f - 0.7).abs() < 1e-15);
        assert!(!pass);

        assert!(coverage_check(&half, &BinaryMask::new(10, 10), 0.7, "s").is_err());
    }

    #[test]
    fn disabled_stages_keep_everything() {
        let img = blob_image(16, 16);
        let items = vec![FilterItem {
            id: "000000".into(),
            image: img,
            label: BinaryMask::new(16, 16), // would fail every stage
            reference: BinaryMask::from_fn(16, 16, |y, _| y < 8),
        }];
        let (verdicts, summary) =
            filter_dataset(&ConstantStub, &items, &FilterConfig::disabled()).unwrap();
        assert!(verdicts[0].kept);
        assert_eq!(summary.kept, 1);
    }

    #[test]
    fn reject_reason_is_first_failing_stage_and_partition_is_order_free() {
        let img = blob_image(16, 16);
        // label fails components (empty) and coverage
        let items = vec![FilterItem {
            id: "000001".into(),
            image: img,
            label: BinaryMask::new(16, 16),
            reference: BinaryMask::from_fn(16, 16, |y, _| y < 8),
        }];
        let cfg = FilterConfig::default();
        let (verdicts, _) = filter_dataset(&ConstantStub, &items, &cfg).unwrap();
        assert!(!verdicts[0].kept);
        assert_eq!(verdicts[0].reject_reason, Some(RejectStage::Components));

        // the kept/rejected partition equals the conjunction of independent
        // stage predicates regardless of order
        let v = &verdicts[0];
        let conj = v.consistency.map(|k| k >= cfg.consistency_threshold).unwrap_or(true)
            && v.component_count.map(|c| (1..=5).contains(&c)).unwrap_or(true)
            && v.coverage.map(|f| f > cfg.coverage_threshold).unwrap_or(true);
        assert_eq!(v.kept, conj);
    }
}
