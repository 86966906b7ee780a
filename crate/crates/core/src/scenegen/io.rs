//! Dataset directory layout:
//!
//! ```text
//! <root>/images/<id>.png     8-bit RGB
//! <root>/masks/<id>.png      8-bit grayscale, foreground = 255
//! <root>/manifest.jsonl      one record per sample
//! ```
//!
//! Masks binarize on read with the `value >= 128` rule, so write-then-read
//! preserves binarization exactly. Soft masks are quantized to 8 bits on
//! write (`round(v·255)`); the quantization is recorded in the manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffcore::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::mask::BinaryMask;

use super::Sample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub category: u32,
    pub round: u32,
    pub seed: u64,
    pub k: usize,
    pub filter_status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter_reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_quantization: Option<String>,
}

impl ManifestRecord {
    pub fn unfiltered(sample: &Sample) -> Self {
        ManifestRecord {
            id: sample_id(sample.id),
            category: sample.category,
            round: sample.round,
            seed: sample.seed,
            k: sample.candidates.len(),
            filter_status: "unfiltered".into(),
            filter_reason: None,
            label_quantization: None,
        }
    }
}

pub fn sample_id(id: u64) -> String {
    format!("{id:06}")
}

// ---- rasters -----------------------------------------------------------------

pub fn write_rgb_png(path: &Path, image: &Tensor) -> Result<()> {
    let dims = image.shape().dims();
    let (c, h, w) = (dims[0], dims[1], dims[2]);
    debug_assert_eq!(c, 3);
    let mut buf = Vec::with_capacity(3 * h * w);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                buf.push(quantize(image.data()[(ch * h + y) * w + x]));
            }
        }
    }
    let img: image::RgbImage =
        image::ImageBuffer::from_raw(w as u32, h as u32, buf).expect("rgb buffer size");
    img.save(path).map_err(|e| Error::image(path, e))
}

pub fn read_rgb_png(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0f64; 3 * h * w];
    for (x, y, p) in img.enumerate_pixels() {
        for ch in 0..3 {
            data[(ch * h + y as usize) * w + x as usize] = p.0[ch] as f64 / 255.0;
        }
    }
    Tensor::from_vec(Shape::new(&[3, h, w]), data)
}

pub fn write_mask_png(path: &Path, mask: &BinaryMask) -> Result<()> {
    let (h, w) = (mask.height(), mask.width());
    let buf: Vec<u8> = mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let img: image::GrayImage =
        image::ImageBuffer::from_raw(w as u32, h as u32, buf).expect("gray buffer size");
    img.save(path).map_err(|e| Error::image(path, e))
}

/// Binarization rule: foreground where value >= 128.
pub fn read_mask_png(path: &Path) -> Result<BinaryMask> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(BinaryMask::from_vec(
        h,
        w,
        img.into_raw().into_iter().map(|v| v >= 128).collect(),
    ))
}

/// Soft mask quantized to 8 bits.
pub fn write_soft_mask_png(path: &Path, mask: &Tensor) -> Result<()> {
    let (h, w) = mask.shape().as_hw()?;
    let buf: Vec<u8> = mask.data().iter().map(|&v| quantize(v)).collect();
    let img: image::GrayImage =
        image::ImageBuffer::from_raw(w as u32, h as u32, buf).expect("gray buffer size");
    img.save(path).map_err(|e| Error::image(path, e))
}

pub fn read_soft_mask_png(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Tensor::from_vec(
        Shape::new(&[h, w]),
        img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
    )
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

// ---- dataset directories -------------------------------------------------------

pub struct DatasetPaths {
    pub root: PathBuf,
    pub images: PathBuf,
    pub masks: PathBuf,
    pub manifest: PathBuf,
}

impl DatasetPaths {
    pub fn new(root: &Path) -> Self {
        DatasetPaths {
            root: root.to_path_buf(),
            images: root.join("images"),
            masks: root.join("masks"),
            manifest: root.join("manifest.jsonl"),
        }
    }

    pub fn create(&self) -> Result<()> {
        for d in [&self.root, &self.images, &self.masks] {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        Ok(())
    }
}

/// Write samples (images + generator gt masks) and the manifest.
pub fn write_dataset(root: &Path, samples: &[Sample], records: &[ManifestRecord]) -> Result<()> {
    assert_eq!(samples.len(), records.len());
    let paths = DatasetPaths::new(root);
    paths.create()?;
    for s in samples {
        let id = sample_id(s.id);
        write_rgb_png(&paths.images.join(format!("{id}.png")), &s.image)?;
        write_mask_png(&paths.masks.join(format!("{id}.png")), &s.gt)?;
    }
    write_manifest(&paths.manifest, records)
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(line)?);
    }
    Ok(records)
}

/// A dataset read back from disk: 8-bit rasters, masks re-binarized.
pub struct LoadedDataset {
    pub records: Vec<ManifestRecord>,
    pub images: Vec<Tensor>,
    pub masks: Vec<BinaryMask>,
}

pub fn read_dataset(root: &Path) -> Result<LoadedDataset> {
    let paths = DatasetPaths::new(root);
    let records = read_manifest(&paths.manifest)?;
    let mut images = Vec::with_capacity(records.len());
    let mut masks = Vec::with_capacity(records.len());
    for r in &records {
        images.push(read_rgb_png(&paths.images.join(format!("{}.png", r.id)))?);
        masks.push(read_mask_png(&paths.masks.join(format!("{}.png", r.id)))?);
    }
    Ok(LoadedDataset {
        records,
        images,
        masks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{generate_dataset, CategoryCatalog, GenConfig};
    use rand::Rng;

    #[test]
    fn mask_roundtrip_preserves_binarization() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = crate::util::rng_for(1, "io", 0);
        for i in 0..20 {
            let m = BinaryMask::from_fn(13, 17, |_, _| rng.gen_bool(0.5));
            let p = dir.path().join(format!("m{i}.png"));
            write_mask_png(&p, &m).unwrap();
            assert_eq!(read_mask_png(&p).unwrap(), m);
        }
    }

    #[test]
    fn rgb_roundtrip_is_8bit_stable() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = crate::util::rng_for(2, "io", 0);
        let img = Tensor::from_vec(
            Shape::new(&[3, 9, 11]),
            (0..297).map(|_| rng.gen_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let p1 = dir.path().join("a.png");
        let p2 = dir.path().join("b.png");
        write_rgb_png(&p1, &img).unwrap();
        let back = read_rgb_png(&p1).unwrap();
        write_rgb_png(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn dataset_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cat = CategoryCatalog::with_hard(4, 0);
        let samples = generate_dataset(&cat, &[1.0; 4], 6, &GenConfig::default(), 5, 2, 0).unwrap();
        let records: Vec<ManifestRecord> = samples.iter().map(ManifestRecord::unfiltered).collect();
        write_dataset(dir.path(), &samples, &records).unwrap();
        let loaded = read_dataset(dir.path()).unwrap();
        assert_eq!(loaded.records, records);
        for (l, s) in loaded.masks.iter().zip(&samples) {
            assert_eq!(l, &s.gt);
        }
        assert_eq!(loaded.records[3].round, 2);
    }

    #[test]
    fn missing_manifest_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_dataset(dir.path()).is_err());
    }
}
