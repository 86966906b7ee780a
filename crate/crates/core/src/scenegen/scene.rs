//! Scene drawing and rasterization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diffcore::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::util::rng_for;

use super::shapes::{lerp3, Geometry, ShapeFamily, TextureDraw, TextureFamily};
use super::{CategoryCatalog, CategorySpec, GenConfig, Sample};

const PLACEMENT_RETRIES: usize = 40;
const SCENE_REDRAWS: usize = 4;
/// Candidates must stay distinct hypotheses: reject overlapping placements.
const MAX_CANDIDATE_IOU: f64 = 0.05;
const MARGIN_PX: f64 = 2.0;

/// Axis-aligned placement region in pixel coordinates.
#[derive(Clone, Copy, Debug)]
struct Region {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Region {
    fn frame(w: usize, h: usize) -> Region {
        Region {
            x0: 0.0,
            x1: w as f64,
            y0: 0.0,
            y1: h as f64,
        }
    }

    /// Split into k slots along the longer axis; candidates anchor one each
    /// so ambiguous scenes stay feasible.
    fn slots(w: usize, h: usize, k: usize) -> Vec<Region> {
        let frame = Region::frame(w, h);
        if k <= 1 {
            return vec![frame];
        }
        (0..k)
            .map(|j| {
                if w >= h {
                    let step = w as f64 / k as f64;
                    Region {
                        x0: j as f64 * step,
                        x1: (j + 1) as f64 * step,
                        ..frame
                    }
                } else {
                    let step = h as f64 / k as f64;
                    Region {
                        y0: j as f64 * step,
                        y1: (j + 1) as f64 * step,
                        ..frame
                    }
                }
            })
            .collect()
    }

    fn half_extents(&self) -> (f64, f64) {
        (
            ((self.x1 - self.x0) / 2.0 - MARGIN_PX).max(2.0),
            ((self.y1 - self.y0) / 2.0 - MARGIN_PX).max(2.0),
        )
    }

    /// Center draw such that an object of half-extent (rx, ry) stays inside.
    fn place(&self, rx: f64, ry: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let lo_x = self.x0 + MARGIN_PX + rx;
        let hi_x = (self.x1 - MARGIN_PX - rx).max(lo_x + 1e-6);
        let lo_y = self.y0 + MARGIN_PX + ry;
        let hi_y = (self.y1 - MARGIN_PX - ry).max(lo_y + 1e-6);
        (rng.gen_range(lo_x..hi_x), rng.gen_range(lo_y..hi_y))
    }
}

/// Draw a category index from non-negative weights.
pub fn sample_category(weights: &[f64], rng: &mut ChaCha8Rng) -> Result<usize> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() || total <= 0.0 || weights.iter().any(|&w| w < 0.0) {
        return Err(Error::AllZeroWeights);
    }
    let mut u = rng.gen_range(0.0..total);
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return Ok(i);
        }
        u -= w;
    }
    Ok(weights.len() - 1)
}

#[derive(Clone, Debug)]
pub struct ObjectDraw {
    pub geometry: Geometry,
    pub texture: TextureDraw,
}

#[derive(Clone, Copy, Debug)]
pub struct LightingDraw {
    pub gain: f64,
    pub gradient: f64,
    pub dir: (f64, f64),
}

/// Fully drawn scene plan; rasterization is a pure function of this.
#[derive(Clone, Debug)]
pub struct SceneSpec {
    pub category: u32,
    pub width: usize,
    pub height: usize,
    pub k: usize,
    pub designated: usize,
    pub candidates: Vec<ObjectDraw>,
    pub distractors: Vec<ObjectDraw>,
    /// (occluder, index of the candidate it covers)
    pub occluders: Vec<(ObjectDraw, usize)>,
    pub background: TextureDraw,
    pub lighting: LightingDraw,
    pub seed: u64,
}

impl SceneSpec {
    fn summary(&self) -> String {
        format!(
            "category {} {}x{} k={} designated={} distractors={} occluders={} seed={}",
            self.category,
            self.width,
            self.height,
            self.k,
            self.designated,
            self.distractors.len(),
            self.occluders.len(),
            self.seed
        )
    }
}

/// Generate one scene. All randomness is consumed here, in a fixed order;
/// identical (seed, rng state) produce a bitwise-identical sample. Placement
/// failures redraw the whole scene a bounded number of times before erroring
/// with the offending scene description.
pub fn generate_scene(cat: &CategorySpec, cfg: &GenConfig, rng: &mut ChaCha8Rng, seed: u64) -> Result<Sample> {
    let mut last_err = None;
    for _ in 0..SCENE_REDRAWS {
        match draw_scene_spec(cat, cfg, rng, seed) {
            Ok(spec) => return Ok(rasterize(&spec)),
            Err(e @ Error::InfeasiblePlacement { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one redraw attempt"))
}

fn draw_scene_spec(
    cat: &CategorySpec,
    cfg: &GenConfig,
    rng: &mut ChaCha8Rng,
    seed: u64,
) -> Result<SceneSpec> {
    // axis 1: aspect ratio from the fixed set, scaled to the pixel budget
    let budget = (cfg.base_resolution * cfg.base_resolution) as f64;
    let (arw, arh) = cfg.aspect_set[rng.gen_range(0..cfg.aspect_set.len())];
    let h = (budget * arh as f64 / arw as f64).sqrt().round() as usize;
    let h = h.max(16);
    let w = ((budget / h as f64).round() as usize).max(16);

    // axis 2: ambiguity — candidate count
    let k = if cfg.k_max >= 2 && rng.gen_bool(cfg.p_amb) {
        rng.gen_range(2..=cfg.k_max)
    } else {
        1
    };

    // background palette and texture
    let bg_c1 = [rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)];
    let bg_c2 = jitter_color(bg_c1, 0.25, rng);
    let background = draw_texture(cat.texture, bg_c1, bg_c2, 0.04, rng);

    // object palette: distinct hue pulled toward the background by the
    // similarity knob
    let distinct = [1.0 - bg_c1[0], 1.0 - bg_c1[1], 1.0 - bg_c1[2]];
    let obj_base = lerp3(distinct, bg_c1, cat.background_similarity);

    // candidates: similar size and contrast, one placement slot each so
    // ambiguous scenes stay feasible
    let base_area_frac = rng.gen_range(cat.size_range.0..=cat.size_range.1);
    let mut slots = Region::slots(w, h, k);
    // shuffle slot order so position carries no category signal
    for i in (1..slots.len()).rev() {
        slots.swap(i, rng.gen_range(0..=i));
    }
    let mut candidates: Vec<ObjectDraw> = Vec::with_capacity(k);
    let mut masks: Vec<BinaryMask> = Vec::with_capacity(k);
    for slot in slots.iter().take(k) {
        let area = base_area_frac * rng.gen_range(0.85..1.18) * (h * w) as f64 / k as f64;
        let mut placed = false;
        for _ in 0..PLACEMENT_RETRIES {
            let geometry = draw_geometry(cat.shape, area, *slot, rng);
            let mask = geometry.mask(h, w);
            if mask.area() < 8 {
                continue;
            }
            let ok = masks.iter().all(|m| {
                let inter = m.intersection_area(&mask);
                let min_area = m.area().min(mask.area()).max(1);
                (inter as f64 / min_area as f64) < MAX_CANDIDATE_IOU
            });
            if ok {
                let c1 = jitter_color(obj_base, 0.06, rng);
                let c2 = jitter_color(c1, 0.2, rng);
                let texture = draw_texture(cat.texture, c1, c2, 0.03, rng);
                candidates.push(ObjectDraw { geometry, texture });
                masks.push(mask);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::InfeasiblePlacement {
                retries: PLACEMENT_RETRIES,
                scene: format!(
                    "category {} {}x{} k={} area_frac={base_area_frac:.3}",
                    cat.id, w, h, k
                ),
            });
        }
    }

    // clutter: small low-contrast distractors, never overlapping candidates
    let clutter = rng.gen_range(cat.clutter_range.0..=cat.clutter_range.1) as usize;
    let frame = Region::frame(w, h);
    let mut distractors = Vec::with_capacity(clutter);
    for _ in 0..clutter {
        for _ in 0..10 {
            let area = rng.gen_range(0.001..0.008) * (h * w) as f64;
            let geometry = draw_geometry(ShapeFamily::Ellipse, area.max(4.0), frame, rng);
            let mask = geometry.mask(h, w);
            if masks.iter().all(|m| m.intersection_area(&mask) == 0) {
                let c1 = jitter_color(bg_c1, 0.12, rng);
                let texture = draw_texture(TextureFamily::Flat, c1, c1, 0.02, rng);
                distractors.push(ObjectDraw { geometry, texture });
                break;
            }
        }
    }

    // occlusion: a strip across a candidate, sized by the category knob
    let mut occluders = Vec::new();
    if cat.occlusion_fraction > 0.0 {
        for (i, obj) in candidates.iter().enumerate() {
            if !rng.gen_bool(0.7) {
                continue;
            }
            let area = masks[i].area() as f64;
            let (cx, cy) = obj.geometry.center();
            let r = (area / std::f64::consts::PI).sqrt();
            let angle = rng.gen_range(0.0..std::f64::consts::PI);
            let off = rng.gen_range(-0.5..0.5) * r;
            let length = 1.4 * r;
            let half_width = (cat.occlusion_fraction * area / (4.0 * length)).max(0.5);
            let geometry = Geometry::Rectangle {
                cx: cx + off * angle.cos(),
                cy: cy + off * angle.sin(),
                a: length,
                b: half_width,
                theta: angle,
            };
            let occ_c = jitter_color([rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)], 0.1, rng);
            let texture = draw_texture(TextureFamily::Flat, occ_c, occ_c, 0.03, rng);
            occluders.push((ObjectDraw { geometry, texture }, i));
        }
    }

    let lighting = LightingDraw {
        gain: rng.gen_range(0.85..1.15),
        gradient: rng.gen_range(0.0..0.3),
        dir: {
            let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            (a.cos(), a.sin())
        },
    };

    let designated = rng.gen_range(0..k);

    Ok(SceneSpec {
        category: cat.id,
        width: w,
        height: h,
        k,
        designated,
        candidates,
        distractors,
        occluders,
        background,
        lighting,
        seed,
    })
}

fn draw_texture(
    family: TextureFamily,
    c1: [f64; 3],
    c2: [f64; 3],
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> TextureDraw {
    let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    TextureDraw {
        family,
        c1,
        c2,
        freq: rng.gen_range(2.0..7.0),
        phase: rng.gen_range(0.0..1.0),
        dir: (a.cos(), a.sin()),
        noise_amp: noise,
        noise_seed: rng.gen(),
    }
}

fn jitter_color(c: [f64; 3], amp: f64, rng: &mut ChaCha8Rng) -> [f64; 3] {
    [
        (c[0] + rng.gen_range(-amp..amp)).clamp(0.0, 1.0),
        (c[1] + rng.gen_range(-amp..amp)).clamp(0.0, 1.0),
        (c[2] + rng.gen_range(-amp..amp)).clamp(0.0, 1.0),
    ]
}

fn draw_geometry(family: ShapeFamily, area: f64, region: Region, rng: &mut ChaCha8Rng) -> Geometry {
    use std::f64::consts::PI;
    let theta = rng.gen_range(0.0..PI);
    let q = rng.gen_range(1.0..2.0); // eccentricity
    let (max_rx, max_ry) = region.half_extents();
    let max_r = max_rx.min(max_ry);
    match family {
        ShapeFamily::Ellipse => {
            let b = (area / (PI * q)).sqrt().min(max_r);
            let a = (q * b).min(max_r);
            let ext = a.max(b);
            let (cx, cy) = region.place(ext, ext, rng);
            Geometry::Ellipse { cx, cy, a, b, theta }
        }
        ShapeFamily::Rectangle => {
            let b = (area / (4.0 * q)).sqrt().min(max_r / 1.5);
            let a = (q * b).min(max_r / 1.5);
            let ext = (a * a + b * b).sqrt().min(max_r);
            let (cx, cy) = region.place(ext, ext, rng);
            Geometry::Rectangle { cx, cy, a, b, theta }
        }
        ShapeFamily::PolygonBlob => {
            let r = (area / PI).sqrt();
            let spokes = rng.gen_range(8..=12);
            let amp = rng.gen_range(0.15..0.35);
            let radii: Vec<f64> = (0..spokes)
                .map(|_| (r * (1.0 + rng.gen_range(-amp..amp))).min(max_r))
                .collect();
            let ext = radii.iter().cloned().fold(0.0, f64::max);
            let (cx, cy) = region.place(ext, ext, rng);
            Geometry::Blob { cx, cy, radii, theta }
        }
        ShapeFamily::Ring => {
            let inner = rng.gen_range(0.4..0.62);
            let ab = area / (PI * (1.0 - inner * inner));
            let b = (ab / q).sqrt().min(max_r);
            let a = (q * b).min(max_r);
            let ext = a.max(b);
            let (cx, cy) = region.place(ext, ext, rng);
            Geometry::Ring { cx, cy, a, b, theta, inner }
        }
        ShapeFamily::Composite => {
            // two overlapping ellipses, each ~60% of the target area
            let part_area = 0.6 * area;
            let b = (part_area / (PI * q)).sqrt().min(max_r * 0.5);
            let a = (q * b).min(max_r * 0.5);
            let gap = 0.8 * a;
            let ext = (a + gap / 2.0).min(max_r);
            let (cx, cy) = region.place(ext, ext, rng);
            let phi = rng.gen_range(0.0..PI);
            let (dx, dy) = (gap * phi.cos(), gap * phi.sin());
            Geometry::Composite {
                parts: vec![
                    (cx - dx / 2.0, cy - dy / 2.0, a, b, theta),
                    (cx + dx / 2.0, cy + dy / 2.0, a, b, theta + 0.5),
                ],
            }
        }
    }
}

/// Pure rasterization of a drawn scene.
fn rasterize(spec: &SceneSpec) -> Sample {
    let (h, w) = (spec.height, spec.width);
    let extent = (w as f64, h as f64);

    let mut rgb = vec![0.0f64; 3 * h * w];
    let paint = |rgb: &mut [f64], y: usize, x: usize, c: [f64; 3]| {
        for ch in 0..3 {
            rgb[(ch * h + y) * w + x] = c[ch];
        }
    };

    for y in 0..h {
        for x in 0..w {
            paint(&mut rgb, y, x, spec.background.sample(x, y, extent));
        }
    }
    for obj in &spec.distractors {
        paint_object(&mut rgb, obj, h, w, extent);
    }
    for obj in &spec.candidates {
        paint_object(&mut rgb, obj, h, w, extent);
    }

    // candidate masks, with occluders subtracted where they keep enough of
    // the object visible
    let mut masks: Vec<BinaryMask> = spec
        .candidates
        .iter()
        .map(|o| o.geometry.mask(h, w))
        .collect();
    for (occ, target) in &spec.occluders {
        let occ_mask = occ.geometry.mask(h, w);
        let orig = masks[*target].area();
        let mut cut = masks[*target].clone();
        for (slot, &o) in cut.data_mut().iter_mut().zip(occ_mask.data()) {
            if o {
                *slot = false;
            }
        }
        if cut.area() * 10 >= orig * 4 {
            // paint the occluder only when it is kept
            paint_object(&mut rgb, occ, h, w, extent);
            masks[*target] = cut;
        }
    }

    // lighting pass
    let l = &spec.lighting;
    for y in 0..h {
        for x in 0..w {
            let fx = x as f64 / w as f64 - 0.5;
            let fy = y as f64 / h as f64 - 0.5;
            let shade = l.gain * (1.0 + l.gradient * (fx * l.dir.0 + fy * l.dir.1));
            for ch in 0..3 {
                let v = &mut rgb[(ch * h + y) * w + x];
                *v = (*v * shade).clamp(0.0, 1.0);
            }
        }
    }

    let image = Tensor::from_vec(Shape::new(&[3, h, w]), rgb).expect("image shape");
    let gt = masks[spec.designated].clone();
    Sample {
        id: 0,
        category: spec.category,
        round: 0,
        seed: spec.seed,
        image,
        gt,
        candidates: masks,
        designated: spec.designated,
    }
}

fn paint_object(rgb: &mut [f64], obj: &ObjectDraw, h: usize, w: usize, extent: (f64, f64)) {
    for y in 0..h {
        for x in 0..w {
            if obj.geometry.contains(x as f64 + 0.5, y as f64 + 0.5) {
                let c = obj.texture.sample(x, y, extent);
                for ch in 0..3 {
                    rgb[(ch * h + y) * w + x] = c[ch];
                }
            }
        }
    }
}

/// Generate `count` samples in parallel; sample i draws from the stream
/// derived from (base_seed, "sample", start_id + i), so the result is
/// independent of scheduling.
pub fn generate_dataset(
    catalog: &CategoryCatalog,
    weights: &[f64],
    count: usize,
    cfg: &GenConfig,
    base_seed: u64,
    round: u32,
    start_id: u64,
) -> Result<Vec<Sample>> {
    if weights.len() != catalog.len() {
        return Err(Error::Config(format!(
            "{} weights for {} categories",
            weights.len(),
            catalog.len()
        )));
    }
    cfg.validate()?;
    catalog.validate()?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let id = start_id + i as u64;
            let seed = crate::util::derive_seed(base_seed, "sample", id);
            let mut rng = rng_for(base_seed, "sample", id);
            let cat_idx = sample_category(weights, &mut rng)?;
            let mut sample = generate_scene(&catalog.categories[cat_idx], cfg, &mut rng, seed)?;
            sample.id = id;
            sample.round = round;
            Ok(sample)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> CategoryCatalog {
        CategoryCatalog::with_hard(16, 2)
    }

    #[test]
    fn one_hot_weights_always_pick_that_category() {
        let mut rng = rng_for(1, "t", 0);
        let mut w = vec![0.0; 8];
        w[5] = 3.0;
        for _ in 0..100 {
            assert_eq!(sample_category(&w, &mut rng).unwrap(), 5);
        }
    }

    #[test]
    fn all_zero_weights_error() {
        let mut rng = rng_for(1, "t", 1);
        assert!(sample_category(&[0.0, 0.0], &mut rng).is_err());
        assert!(sample_category(&[], &mut rng).is_err());
    }

    #[test]
    fn uniform_sampling_frequencies_within_3_sigma() {
        let mut rng = rng_for(2, "t", 0);
        let n = 16usize;
        let draws = 16_000usize;
        let w = vec![1.0; n];
        let mut counts = vec![0usize; n];
        for _ in 0..draws {
            counts[sample_category(&w, &mut rng).unwrap()] += 1;
        }
        let p = 1.0 / n as f64;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        let expect = draws as f64 * p;
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expect).abs() <= 3.0 * sigma,
                "category {i}: {c} vs {expect} ± {}",
                3.0 * sigma
            );
        }
    }

    #[test]
    fn weighted_sampling_ratio_within_ci() {
        let mut rng = rng_for(3, "t", 0);
        let w = vec![2.0, 1.0, 1.0];
        let draws = 12_000usize;
        let mut counts = vec![0usize; 3];
        for _ in 0..draws {
            counts[sample_category(&w, &mut rng).unwrap()] += 1;
        }
        for (i, &want) in [0.5, 0.25, 0.25].iter().enumerate() {
            let sigma = (draws as f64 * want * (1.0 - want)).sqrt();
            assert!(
                (counts[i] as f64 - draws as f64 * want).abs() <= 3.0 * sigma,
                "weight ratio off at {i}: {counts:?}"
            );
        }
    }

    #[test]
    fn p_amb_zero_gives_single_candidate() {
        let cat = catalog();
        let cfg = GenConfig {
            p_amb: 0.0,
            ..GenConfig::default()
        };
        let samples =
            generate_dataset(&cat, &vec![1.0; 16], 40, &cfg, 7, 0, 0).unwrap();
        for s in &samples {
            assert_eq!(s.candidates.len(), 1);
            s.check_invariants().unwrap();
        }
    }

    #[test]
    fn same_seed_and_index_bitwise_identical() {
        let cat = catalog();
        let cfg = GenConfig::default();
        let a = generate_dataset(&cat, &vec![1.0; 16], 12, &cfg, 42, 1, 100).unwrap();
        let b = generate_dataset(&cat, &vec![1.0; 16], 12, &cfg, 42, 1, 100).unwrap();
        assert_eq!(a, b);
        // a different seed changes content
        let c = generate_dataset(&cat, &vec![1.0; 16], 12, &cfg, 43, 1, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn parallel_generation_matches_sequential() {
        let cat = catalog();
        let cfg = GenConfig::default();
        let par = generate_dataset(&cat, &vec![1.0; 16], 24, &cfg, 9, 0, 0).unwrap();
        // sequential reference via per-index streams
        let seq: Vec<Sample> = (0..24u64)
            .map(|id| {
                let seed = crate::util::derive_seed(9, "sample", id);
                let mut rng = rng_for(9, "sample", id);
                let cat_idx = sample_category(&vec![1.0; 16], &mut rng).unwrap();
                let mut s = generate_scene(&cat.categories[cat_idx], &cfg, &mut rng, seed).unwrap();
                s.id = id;
                Ok::<Sample, crate::error::Error>(s)
            })
            .collect::<std::result::Result<_, _>>()
            .unwrap();
        for (p, s) in par.iter().zip(&seq) {
            assert_eq!(p.image, s.image);
            assert_eq!(p.gt, s.gt);
        }
    }

    #[test]
    fn ambiguous_scenes_designate_uniformly() {
        let cat = catalog();
        let cfg = GenConfig {
            p_amb: 1.0,
            k_max: 2,
            ..GenConfig::default()
        };
        let samples = generate_dataset(&cat, &vec![1.0; 16], 1000, &cfg, 11, 0, 0).unwrap();
        let mut first = 0usize;
        for s in &samples {
            assert_eq!(s.candidates.len(), 2);
            s.check_invariants().unwrap();
            if s.designated == 0 {
                first += 1;
            }
        }
        let sigma = (1000.0f64 * 0.25).sqrt();
        assert!(
            (first as f64 - 500.0).abs() <= 3.0 * sigma,
            "designated index skewed: {first}/1000"
        );
    }

    #[test]
    fn candidate_masks_are_distinct_hypotheses() {
        let cat = catalog();
        let cfg = GenConfig {
            p_amb: 1.0,
            k_max: 3,
            ..GenConfig::default()
        };
        let samples = generate_dataset(&cat, &vec![1.0; 16], 60, &cfg, 13, 0, 0).unwrap();
        for s in &samples {
            assert!(!s.gt.is_empty());
            s.check_invariants().unwrap();
            for (i, a) in s.candidates.iter().enumerate() {
                for b in &s.candidates[i + 1..] {
                    assert!(a.iou(b) < 0.5);
                }
            }
        }
    }

    #[test]
    fn aspect_variety_appears() {
        let cat = catalog();
        let cfg = GenConfig::default();
        let samples = generate_dataset(&cat, &vec![1.0; 16], 60, &cfg, 17, 0, 0).unwrap();
        let mut shapes: Vec<(usize, usize)> = samples
            .iter()
            .map(|s| {
                let d = s.image.shape().dims();
                (d[1], d[2])
            })
            .collect();
        shapes.sort();
        shapes.dedup();
        assert!(shapes.len() >= 2, "expected multiple aspect ratios, got {shapes:?}");
    }

    #[test]
    fn resized_sample_keeps_invariants() {
        let cat = catalog();
        let cfg = GenConfig {
            p_amb: 1.0,
            k_max: 2,
            ..GenConfig::default()
        };
        let samples = generate_dataset(&cat, &vec![1.0; 16], 10, &cfg, 19, 0, 0).unwrap();
        for s in &samples {
            let r = s.resized(32, 32);
            assert_eq!(r.image.shape().dims(), &[3, 32, 32]);
            r.check_invariants().unwrap();
        }
    }
}
