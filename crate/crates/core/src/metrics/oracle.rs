//! Naive reference implementations of every metric, written as literal
//! double loops over the stated formulas. These deliberately share no code
//! with the production implementations in the parent module; the oracle
//! comparison suite checks the two routes agree to 1e-9 on random pairs.

use rand::Rng;

use crate::diffcore::Tensor;
use crate::mask::BinaryMask;
use crate::util::rng_for;

const EPS: f64 = 1e-8;

pub fn naive_mae(pred: &Tensor, gt: &BinaryMask) -> f64 {
    let (h, w) = (gt.height(), gt.width());
    let mut acc = 0.0;
    for y in 0..h {
        for x in 0..w {
            let p = pred.data()[y * w + x];
            let g = if gt.get(y, x) { 1.0 } else { 0.0 };
            acc += (p - g).abs();
        }
    }
    acc / (h * w) as f64
}

pub fn naive_f_measure_max(pred: &Tensor, gt: &BinaryMask) -> f64 {
    let (h, w) = (gt.height(), gt.width());
    let mut best = 0.0f64;
    for k in 0..256usize {
        let t = k as f64 / 255.0;
        let mut tp = 0usize;
        let mut pred_area = 0usize;
        let mut gt_area = 0usize;
        for y in 0..h {
            for x in 0..w {
                let b = pred.data()[y * w + x].clamp(0.0, 1.0) >= t;
                let g = gt.get(y, x);
                if b {
                    pred_area += 1;
                }
                if g {
                    gt_area += 1;
                }
                if b && g {
                    tp += 1;
                }
            }
        }
        let p = if pred_area == 0 { 0.0 } else { tp as f64 / pred_area as f64 };
        let r = if gt_area == 0 { 0.0 } else { tp as f64 / gt_area as f64 };
        let denom = 0.3 * p + r;
        let f = if denom == 0.0 { 0.0 } else { 1.3 * p * r / denom };
        if f > best {
            best = f;
        }
    }
    if gt.area() == 0 {
        0.0
    } else {
        best
    }
}

pub fn naive_s_measure(pred: &Tensor, gt: &BinaryMask) -> f64 {
    let (h, w) = (gt.height(), gt.width());
    let total = h * w;
    let fg = gt.area();
    if fg == 0 {
        let mut m = 0.0;
        for v in pred.data() {
            m += v;
        }
        return (1.0 - m / total as f64).clamp(0.0, 1.0);
    }
    if fg == total {
        let mut m = 0.0;
        for v in pred.data() {
            m += v;
        }
        return (m / total as f64).clamp(0.0, 1.0);
    }

    // object term
    let mu = fg as f64 / total as f64;
    let mut fg_vals = Vec::new();
    let mut bg_vals = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let p = pred.data()[y * w + x];
            if gt.get(y, x) {
                fg_vals.push(p);
            } else {
                bg_vals.push(1.0 - p);
            }
        }
    }
    let o_score = |vals: &[f64]| {
        if vals.is_empty() {
            return 0.0;
        }
        let n = vals.len() as f64;
        let mean: f64 = vals.iter().sum::<f64>() / n;
        let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        2.0 * mean / (mean * mean + 1.0 + var.sqrt() + EPS)
    };
    let s_o = mu * o_score(&fg_vals) + (1.0 - mu) * o_score(&bg_vals);

    // region term: quadrants about the centroid cut
    let (mut sy, mut sx, mut n) = (0usize, 0usize, 0usize);
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

    let quad_ssim = |y0: usize, y1: usize, x0: usize, x1: usize| -> f64 {
        let count = (y1 - y0) * (x1 - x0);
        let nq = count as f64;
        let mut pm = 0.0;
        let mut gm = 0.0;
        for y in y0..y1 {
            for x in x0..x1 {
                pm += pred.data()[y * w + x];
                gm += if gt.get(y, x) { 1.0 } else { 0.0 };
            }
        }
        pm /= nq;
        gm /= nq;
        let (mut vp, mut vg, mut cov) = (0.0, 0.0, 0.0);
        for y in y0..y1 {
            for x in x0..x1 {
                let dp = pred.data()[y * w + x] - pm;
                let dg = if gt.get(y, x) { 1.0 } else { 0.0 } - gm;
                vp += dp * dp;
                vg += dg * dg;
                cov += dp * dg;
            }
        }
        vp /= nq;
        vg /= nq;
        cov /= nq;
        let alpha = 4.0 * pm * gm * cov;
        let beta = (pm * pm + gm * gm) * (vp + vg);
        if alpha != 0.0 {
            alpha / (beta + EPS)
        } else if beta == 0.0 {
            1.0
        } else {
            0.0
        }
    };

    let mut s_r = 0.0;
    for (y0, y1) in [(0, cy), (cy, h)] {
        for (x0, x1) in [(0, cx), (cx, w)] {
            let area = (y1 - y0) * (x1 - x0);
            if area == 0 {
                continue;
            }
            s_r += (area as f64 / total as f64) * quad_ssim(y0, y1, x0, x1);
        }
    }

    (0.5 * s_o + 0.5 * s_r).clamp(0.0, 1.0)
}

pub fn naive_e_measure(pred: &Tensor, gt: &BinaryMask) -> f64 {
    let (h, w) = (gt.height(), gt.width());
    let total = (h * w) as f64;
    let fg = gt.area() as f64;
    let mut acc = 0.0;
    for k in 0..256usize {
        let t = k as f64 / 255.0;
        let bin: Vec<f64> = pred
            .data()
            .iter()
            .map(|&p| if p.clamp(0.0, 1.0) >= t { 1.0 } else { 0.0 })
            .collect();
        let mu_bin: f64 = bin.iter().sum::<f64>() / total;
        if fg == 0.0 {
            acc += 1.0 - mu_bin;
            continue;
        }
        if fg == total {
            acc += mu_bin;
            continue;
        }
        let mu_gt = fg / total;
        let mut score = 0.0;
        for y in 0..h {
            for x in 0..w {
                let phi_gt = (if gt.get(y, x) { 1.0 } else { 0.0 }) - mu_gt;
                let phi_p = bin[y * w + x] - mu_bin;
                let xi = 2.0 * phi_gt * phi_p / (phi_gt * phi_gt + phi_p * phi_p + EPS);
                score += (xi + 1.0) * (xi + 1.0) / 4.0;
            }
        }
        acc += score / total;
    }
    acc / 256.0
}

pub fn naive_iou_binary(pred: &Tensor, gt: &BinaryMask, threshold: f64) -> f64 {
    let (h, w) = (gt.height(), gt.width());
    let mut inter = 0usize;
    let mut union = 0usize;
    for y in 0..h {
        for x in 0..w {
            let b = pred.data()[y * w + x] >= threshold;
            let g = gt.get(y, x);
            if b && g {
                inter += 1;
            }
            if b || g {
                union += 1;
            }
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

// ---- comparison suite -------------------------------------------------------

#[derive(Clone, Debug, serde::Serialize)]
pub struct MetricDiff {
    pub metric: String,
    pub max_abs_diff: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct OracleReport {
    pub pairs: usize,
    pub tolerance: f64,
    pub diffs: Vec<MetricDiff>,
    pub pass: bool,
}

/// One random (pred, gt) pair at 32×32; every few draws exercise the
/// degenerate ground truths and binary-valued predictions.
pub fn random_pair(seed: u64, index: u64) -> (Tensor, BinaryMask) {
    let mut rng = rng_for(seed, "oracle-pair", index);
    let style = index % 8;
    let gt = match style {
        6 => BinaryMask::new(32, 32),
        7 => BinaryMask::from_fn(32, 32, |_, _| true),
        _ => {
            let cy = rng.gen_range(4.0..28.0);
            let cx = rng.gen_range(4.0..28.0);
            let ry = rng.gen_range(3.0..14.0);
            let rx = rng.gen_range(3.0..14.0);
            BinaryMask::from_fn(32, 32, |y, x| {
                let dy = (y as f64 - cy) / ry;
                let dx = (x as f64 - cx) / rx;
                dy * dy + dx * dx <= 1.0
            })
        }
    };
    let pred = match style % 3 {
        0 => {
            // blob-ish prediction correlated with gt, plus noise
            let noise = rng.gen_range(0.05..0.4);
            let t = gt.to_tensor();
            let mut r2 = rng_for(seed, "oracle-noise", index);
            let noisy: Vec<f64> = t
                .data()
                .iter()
                .map(|&v| (v * (1.0 - noise) + r2.gen_range(0.0..noise)).clamp(0.0, 1.0))
                .collect();
            crate::diffcore::Tensor::from_vec(t.shape().clone(), noisy).unwrap()
        }
        1 => Tensor::from_fn_2d(32, 32, |_, _| rng.gen_range(0.0..1.0)),
        _ => Tensor::from_fn_2d(32, 32, |_, _| {
            // values on the 1/255 grid, including exact 0 and 1
            rng.gen_range(0u32..=255) as f64 / 255.0
        }),
    };
    (pred, gt)
}

/// Compare implementation vs naive oracle on `pairs` random pairs.
pub fn compare_suite(pairs: usize, seed: u64, tolerance: f64) -> OracleReport {
    let mut d_mae: f64 = 0.0;
    let mut d_f: f64 = 0.0;
    let mut d_s: f64 = 0.0;
    let mut d_e: f64 = 0.0;
    let mut d_iou: f64 = 0.0;
    for i in 0..pairs {
        let (pred, gt) = random_pair(seed, i as u64);
        d_mae = d_mae.max((super::mae(&pred, &gt).unwrap() - naive_mae(&pred, &gt)).abs());
        d_f = d_f.max(
            (super::f_measure_max(&pred, &gt).unwrap() - naive_f_measure_max(&pred, &gt)).abs(),
        );
        d_s = d_s.max((super::s_measure(&pred, &gt).unwrap() - naive_s_measure(&pred, &gt)).abs());
        d_e = d_e.max((super::e_measure(&pred, &gt).unwrap() - naive_e_measure(&pred, &gt)).abs());
        d_iou = d_iou.max(
            (super::iou_binary(&pred, &gt, 0.5).unwrap() - naive_iou_binary(&pred, &gt, 0.5)).abs(),
        );
    }
    let diffs: Vec<MetricDiff> = [
        ("mae", d_mae),
        ("f_measure_max", d_f),
        ("s_measure", d_s),
        ("e_measure", d_e),
        ("iou_binary", d_iou),
    ]
    .into_iter()
    .map(|(m, d)| MetricDiff {
        metric: m.to_string(),
        max_abs_diff: d,
        pass: d <= tolerance,
    })
    .collect();
    let pass = diffs.iter().all(|d| d.pass);
    OracleReport {
        pairs,
        tolerance,
        diffs,
        pass,
    }
}
