//! SOD metric suite: maximum F-measure (β² = 0.3), MAE, structure measure
//! (α = 0.5), enhanced alignment measure (mean over 256 thresholds), binary
//! IoU, and dataset-level aggregation in score-selected or oracle-best-of-N
//! mode. Every metric has an independently written naive twin in
//! [`oracle`]; the two must agree to 1e-9.

pub mod oracle;
mod report;

use rayon::prelude::*;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::netmodel::MultiMaskOutput;

pub use report::{write_report_csv, write_report_json, REPORT_CSV_HEADER};

/// ε used in every metric denominator.
pub const METRIC_EPS: f64 = 1e-8;

/// β² for the F-measure, emphasizing precision.
pub const F_BETA_SQ: f64 = 0.3;

/// Mean absolute difference between a soft prediction and a binary mask.
pub fn mae(pred: &Tensor, gt: &BinaryMask) -> Result<f64> {
    check_dims(pred, gt)?;
    let g = gt.data();
    let sum: f64 = pred
        .data()
        .iter()
        .zip(g)
        .map(|(&p, &t)| (p - if t { 1.0 } else { 0.0 }).abs())
        .sum();
    Ok(sum / pred.numel() as f64)
}

/// Maximum F-measure over the 256 thresholds {0, 1/255, …, 1}.
///
/// Precision (and the score) is 0 when the binarized prediction is empty;
/// the score is 0 when the ground truth is empty. Implemented with a
/// 256-bin histogram and suffix sums; the oracle does the literal
/// threshold-by-threshold sweep.
pub fn f_measure_max(pred: &Tensor, gt: &BinaryMask) -> Result<f64> {
    check_dims(pred, gt)?;
    let gt_area = gt.area();
    if gt_area == 0 {
        return Ok(0.0);
    }
    let mut hist_all = [0u32; 256];
    let mut hist_fg = [0u32; 256];
    for (&p, &t) in pred.data().iter().zip(gt.data()) {
        let bin = threshold_bin(p);
        hist_all[bin] += 1;
        hist_fg[bin] += u32::from(t);
    }
    // suffix sums: counts of pixels passing threshold k/255
    let mut best = 0.0f64;
    let mut tp = 0u32;
    let mut pred_area = 0u32;
    let mut scores = [0.0f64; 256];
    for k in (0..256).rev() {
        tp += hist_fg[k];
        pred_area += hist_all[k];
        let p = if pred_area == 0 {
            0.0
        } else {
            tp as f64 / pred_area as f64
        };
        let r = tp as f64 / gt_area as f64;
        let denom = F_BETA_SQ * p + r;
        scores[k] = if denom == 0.0 {
            0.0
        } else {
            (1.0 + F_BETA_SQ) * p * r / denom
        };
    }
    for &s in &scores {
        best = best.max(s);
    }
    Ok(best)
}

/// Largest k in 0..=255 with p >= k/255 under the literal predicate, so the
/// histogram route and a threshold-by-threshold sweep binarize identically.
/// The floor estimate can be one off after rounding; the loops fix it up.
#[inline]
fn threshold_bin(p: f64) -> usize {
    let p = p.clamp(0.0, 1.0);
    let mut k = ((p * 255.0).floor() as i64).clamp(0, 255) as i32;
    while k < 255 && p >= (k + 1) as f64 / 255.0 {
        k += 1;
    }
    while k > 0 && p < k as f64 / 255.0 {
        k -= 1;
    }
    k as usize
}

/// Structure measure S = α·S_o + (1−α)·S_r with α = 0.5.
///
/// Degenerate conventions: all-background ground truth scores 1 − mean(pred),
/// all-foreground scores mean(pred). The final value is clamped to [0,1].
pub fn s_measure(pred: &Tensor, gt: &BinaryMask) -> Result<f64> {
    check_dims(pred, gt)?;
    let (h, w) = (gt.height(), gt.width());
    let total = h * w;
    let fg = gt.area();
    if fg == 0 {
        return Ok((1.0 - pred.mean()).clamp(0.0, 1.0));
    }
    if fg == total {
        return Ok(pred.mean().clamp(0.0, 1.0));
    }

    let s_o = object_term(pred, gt, fg as f64 / total as f64);
    let s_r = region_term(pred, gt);
    Ok((0.5 * s_o + 0.5 * s_r).clamp(0.0, 1.0))
}

fn object_term(pred: &Tensor, gt: &BinaryMask, mu: f64) -> f64 {
    // O(x) = 2·mean(x) / (mean(x)² + 1 + std(x) + ε)
    let score = |values: &mut dyn Iterator<Item = f64>| -> f64 {
        let vals: Vec<f64> = values.collect();
        if vals.is_empty() {
            return 0.0;
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        2.0 * mean / (mean * mean + 1.0 + var.sqrt() + METRIC_EPS)
    };
    let p = pred.data();
    let g = gt.data();
    let fg_score = score(&mut p.iter().zip(g).filter(|(_, &t)| t).map(|(&v, _)| v));
    let bg_score = score(&mut p.iter().zip(g).filter(|(_, &t)| !t).map(|(&v, _)| 1.0 - v));
    mu * fg_score + (1.0 - mu) * bg_score
}

fn region_term(pred: &Tensor, gt: &BinaryMask) -> f64 {
    let (h, w) = (gt.height(), gt.width());
    let (cy, cx) = foreground_centroid_cut(gt);
    let mut total = 0.0;
    for (y0, y1) in [(0, cy), (cy, h)] {
        for (x0, x1) in [(0, cx), (cx, w)] {
            let area = (y1 - y0) * (x1 - x0);
            if area == 0 {
                continue;
            }
            let weight = area as f64 / (h * w) as f64;
            total += weight * region_ssim(pred, gt, y0, y1, x0, x1);
        }
    }
    total
}

/// Row/col cuts one past the rounded foreground centroid, clamped so the
/// top-left quadrant is never empty.
pub(crate) fn foreground_centroid_cut(gt: &BinaryMask) -> (usize, usize) {
    let (h, w) = (gt.height(), gt.width());
    let mut sy = 0usize;
    let mut sx = 0usize;
    let mut n = 0usize;
    for y in 0..h {
        for x in 0..w {
            if gt.get(y, x) {
                sy += y;
                sx += x;
                n += 1;
            }
        }
    }
    let cy = ((sy as f64 / n as f64).round() as usize + 1).min(h);
    let cx = ((sx as f64 / n as f64).round() as usize + 1).min(w);
    (cy, cx)
}

/// SSIM-style regional similarity from means, variances and covariance:
/// α = 4·μx·μy·σxy, β = (μx²+μy²)(σx²+σy²); Q = α/(β+ε), with the 0/0
/// convention Q = 1 and the α=0, β≠0 convention Q = 0.
fn region_ssim(pred: &Tensor, gt: &BinaryMask, y0: usize, y1: usize, x0: usize, x1: usize) -> f64 {
    let w = gt.width();
    let n = ((y1 - y0) * (x1 - x0)) as f64;
    let p = pred.data();
    let (mut sp, mut sg) = (0.0, 0.0);
    for y in y0..y1 {
        for x in x0..x1 {
            sp += p[y * w + x];
            sg += if gt.get(y, x) { 1.0 } else { 0.0 };
        }
    }
    let mp = sp / n;
    let mg = sg / n;
    let (mut vp, mut vg, mut cov) = (0.0, 0.0, 0.0);
    for y in y0..y1 {
        for x in x0..x1 {
            let dp = p[y * w + x] - mp;
            let dg = if gt.get(y, x) { 1.0 } else { 0.0 } - mg;
            vp += dp * dp;
            vg += dg * dg;
            cov += dp * dg;
        }
    }
    vp /= n;
    vg /= n;
    cov /= n;
    let alpha = 4.0 * mp * mg * cov;
    let beta = (mp * mp + mg * mg) * (vp + vg);
    if alpha != 0.0 {
        alpha / (beta + METRIC_EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Enhanced alignment measure: mean over 256 thresholds of the enhanced
/// alignment map ((ξ+1)²/4), ξ built from bias-removed fields.
///
/// Degenerate conventions per threshold: all-background ground truth scores
/// 1 − mean(bin); all-foreground scores mean(bin).
pub fn e_measure(pred: &Tensor, gt: &BinaryMask) -> Result<f64> {
    check_dims(pred, gt)?;
    let total = (gt.height() * gt.width()) as f64;
    let fg = gt.area() as f64;
    let mu_gt = fg / total;
    let degenerate = fg == 0.0 || fg == total;

    // per-pixel threshold bins let each sweep step reuse counts
    let bins: Vec<usize> = pred.data().iter().map(|&p| threshold_bin(p)).collect();
    let mut hist_all = [0u32; 256];
    let mut hist_fg = [0u32; 256];
    for (&b, &t) in bins.iter().zip(gt.data()) {
        hist_all[b] += 1;
        hist_fg[b] += u32::from(t);
    }

    let mut acc = 0.0;
    let mut bin_area = 0u32; // pixels passing the current threshold
    let mut bin_fg = 0u32;
    // iterate k = 255 down to 0, accumulating suffix counts
    let mut per_threshold = [0.0f64; 256];
    for k in (0..256).rev() {
        bin_area += hist_all[k];
        bin_fg += hist_fg[k];
        let mu_bin = bin_area as f64 / total;
        if degenerate {
            per_threshold[k] = if fg == 0.0 { 1.0 - mu_bin } else { mu_bin };
            continue;
        }
        // ξ(p) = 2·φ_gt·φ_p / (φ_gt² + φ_p² + ε) takes one of four values
        // depending on (gt, bin) at the pixel; count each combination.
        let n_tp = bin_fg as f64;
        let n_fp = bin_area as f64 - n_tp;
        let n_fn = fg - n_tp;
        let n_tn = total - fg - n_fp;
        let mut sum = 0.0;
        for (count, gt_v, bin_v) in [
            (n_tp, 1.0, 1.0),
            (n_fp, 0.0, 1.0),
            (n_fn, 1.0, 0.0),
            (n_tn, 0.0, 0.0),
        ] {
            if count == 0.0 {
                continue;
            }
            let phi_gt = gt_v - mu_gt;
            let phi_p = bin_v - mu_bin;
            let xi = 2.0 * phi_gt * phi_p / (phi_gt * phi_gt + phi_p * phi_p + METRIC_EPS);
            let enhanced = (xi + 1.0) * (xi + 1.0) / 4.0;
            sum += count * enhanced;
        }
        per_threshold[k] = sum / total;
    }
    for &v in &per_threshold {
        acc += v;
    }
    Ok(acc / 256.0)
}

/// IoU of the prediction binarized at `threshold` against the ground truth;
/// two empty masks agree vacuously.
pub fn iou_binary(pred: &Tensor, gt: &BinaryMask, threshold: f64) -> Result<f64> {
    check_dims(pred, gt)?;
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&p, &t) in pred.data().iter().zip(gt.data()) {
        let b = p >= threshold;
        inter += usize::from(b && t);
        union += usize::from(b || t);
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}

fn check_dims(pred: &Tensor, gt: &BinaryMask) -> Result<()> {
    let (h, w) = pred.shape().as_hw()?;
    if (h, w) != (gt.height(), gt.width()) {
        return Err(Error::ShapeMismatch {
            context: "metric inputs".into(),
            left: vec![h, w],
            right: vec![gt.height(), gt.width()],
        });
    }
    Ok(())
}

// ---- dataset-level evaluation ----------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Branch with the highest predicted score.
    Selected,
    /// Per-sample best branch by binary IoU against ground truth (the
    /// oracle best-of-N protocol; uses label information by construction).
    OracleBest,
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvalMode::Selected => write!(f, "selected"),
            EvalMode::OracleBest => write!(f, "oracle_best"),
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SampleMetrics {
    pub branch: usize,
    pub f_max: f64,
    pub mae: f64,
    pub s_measure: f64,
    pub e_measure: f64,
    pub iou: f64,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub n: usize,
    pub f_max: f64,
    pub s_measure: f64,
    pub e_measure: f64,
    pub mae: f64,
    pub iou: f64,
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_sample: Option<Vec<SampleMetrics>>,
}

/// Metrics of one chosen branch against one ground truth.
pub fn sample_metrics(pred: &Tensor, gt: &BinaryMask, branch: usize) -> Result<SampleMetrics> {
    Ok(SampleMetrics {
        branch,
        f_max: f_measure_max(pred, gt)?,
        mae: mae(pred, gt)?,
        s_measure: s_measure(pred, gt)?,
        e_measure: e_measure(pred, gt)?,
        iou: iou_binary(pred, gt, 0.5)?,
    })
}

/// Pick the branch `mode` dictates for one sample.
pub fn choose_branch(output: &MultiMaskOutput, gt: &BinaryMask, mode: EvalMode) -> Result<usize> {
    match mode {
        EvalMode::Selected => Ok(output.selected_branch()),
        EvalMode::OracleBest => {
            let mut best = 0usize;
            let mut best_iou = -1.0;
            for (i, m) in output.masks.iter().enumerate() {
                let iou = iou_binary(m, gt, 0.5)?;
                if iou > best_iou {
                    best = i;
                    best_iou = iou;
                }
            }
            Ok(best)
        }
    }
}

/// Per-sample metrics averaged over aligned prediction/ground-truth lists.
/// Samples are processed in parallel but summed in index order, so the
/// aggregate is deterministic.
pub fn evaluate_dataset(
    outputs: &[MultiMaskOutput],
    gts: &[BinaryMask],
    mode: EvalMode,
    dataset: &str,
    keep_per_sample: bool,
) -> Result<MetricsReport> {
    if outputs.len() != gts.len() {
        return Err(Error::MissingIds(format!(
            "{} predictions vs {} ground truths",
            outputs.len(),
            gts.len()
        )));
    }
    if outputs.is_empty() {
        return Err(Error::Dataset("evaluate_dataset on empty lists".into()));
    }
    let per: Vec<SampleMetrics> = outputs
        .par_iter()
        .zip(gts.par_iter())
        .map(|(out, gt)| {
            let branch = choose_branch(out, gt, mode)?;
            sample_metrics(&out.masks[branch], gt, branch)
        })
        .collect::<Result<_>>()?;

    let n = per.len() as f64;
    let mean = |f: fn(&SampleMetrics) -> f64| per.iter().map(f).sum::<f64>() / n;
    Ok(MetricsReport {
        dataset: dataset.to_string(),
        n: per.len(),
        f_max: mean(|s| s.f_max),
        s_measure: mean(|s| s.s_measure),
        e_measure: mean(|s| s.e_measure),
        mae: mean(|s| s.mae),
        iou: mean(|s| s.iou),
        mode: mode.to_string(),
        per_sample: keep_per_sample.then_some(per),
    })
}
