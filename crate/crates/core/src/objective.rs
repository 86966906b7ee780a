//! Training losses and winner-take-all assignment.
//!
//! All operations exist in two forms that share one set of formulas: plain
//! f64 functions over tensors (used for winner selection, reporting and
//! tests) and graph builders (used inside the training step, so gradients
//! flow through exactly the same expressions).
//!
//! Masks entering a log are clamped to [1e-6, 1−1e-6]; the focal term is a
//! sum over pixels unless `pixel_mean` is set.

use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::netmodel::MultiMaskOutput;

/// Clamp bound for probabilities entering logs and ratios.
pub const PROB_EPS: f64 = 1e-6;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocalVariant {
    /// −Σ (1−m)^τ · y · log m, foreground term only.
    PaperLiteral,
    /// Adds the mirrored background term −Σ m^τ · (1−y) · log(1−m).
    Symmetric,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WinnerRule {
    /// argmax soft IoU against ground truth (multiple-choice learning).
    HighestIou,
    /// argmin variant, kept selectable for experimentation.
    LowestIou,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Focusing parameter τ.
    pub tau: f64,
    pub lambda_mask: f64,
    pub lambda_score: f64,
    pub lambda_reg: f64,
    /// Decay rate γ of the relaxed-assignment regularizer.
    pub gamma: f64,
    pub focal_variant: FocalVariant,
    /// Normalize the focal sum by pixel count (off = literal sum).
    pub pixel_mean: bool,
    pub winner_rule: WinnerRule,
    /// Whether the decaying regularizer sums over the winner branch too
    /// (the formula as printed does).
    pub reg_includes_winner: bool,
    /// Use binarized masks when computing the score-loss target.
    pub score_target_binarized: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            tau: 2.0,
            lambda_mask: 10.0,
            lambda_score: 0.05,
            lambda_reg: 0.1,
            gamma: 0.2,
            focal_variant: FocalVariant::Symmetric,
            pixel_mean: false,
            winner_rule: WinnerRule::HighestIou,
            reg_includes_winner: true,
            score_target_binarized: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tau", self.tau),
            ("lambda_mask", self.lambda_mask),
            ("lambda_score", self.lambda_score),
            ("lambda_reg", self.lambda_reg),
            ("gamma", self.gamma),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("loss constant {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Regularizer coefficient λ_reg·e^(−γt) at epoch t.
    pub fn reg_coeff(&self, epoch: usize) -> f64 {
        self.lambda_reg * (-self.gamma * epoch as f64).exp()
    }
}

/// Per-branch decomposition of the total objective. `total` is recomposed
/// from the parts, so the recomposition identity holds exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub total: f64,
    /// Winner branch, zero-based.
    pub winner: usize,
    pub mask_losses: Vec<f64>,
    pub score_losses: Vec<f64>,
    pub regularizer: f64,
}

#[inline]
fn clamp_prob(v: f64) -> f64 {
    v.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Soft intersection-over-union Σ m·y / Σ (m + y − m·y), with m clamped to
/// the open unit interval — the same expression the graph builder emits.
/// Two identically-zero masks agree vacuously: 1.
pub fn soft_iou(m: &Tensor, y: &Tensor) -> Result<f64> {
    check_same_shape("soft_iou", m, y)?;
    if m.data().iter().all(|&v| v == 0.0) && y.data().iter().all(|&v| v == 0.0) {
        return Ok(1.0);
    }
    let mut inter = 0.0;
    let mut union = 0.0;
    for (&mv, &yv) in m.data().iter().zip(y.data()) {
        let mc = clamp_prob(mv);
        inter += mc * yv;
        union += mc + yv - mc * yv;
    }
    Ok(inter / union)
}

/// Focal loss; paper-literal is the one-sided foreground term, symmetric
/// adds the background mirror. Sum over pixels unless cfg.pixel_mean.
pub fn focal_loss(m: &Tensor, y: &Tensor, cfg: &LossConfig) -> Result<f64> {
    check_same_shape("focal_loss", m, y)?;
    let mut acc = 0.0;
    for (&mv, &yv) in m.data().iter().zip(y.data()) {
        let mc = clamp_prob(mv);
        acc -= (1.0 - mc).powf(cfg.tau) * yv * mc.ln();
        if cfg.focal_variant == FocalVariant::Symmetric {
            acc -= mc.powf(cfg.tau) * (1.0 - yv) * (1.0 - mc).ln();
        }
    }
    if cfg.pixel_mean {
        acc /= m.numel() as f64;
    }
    Ok(acc)
}

pub fn iou_loss(m: &Tensor, y: &Tensor) -> Result<f64> {
    Ok(1.0 - soft_iou(m, y)?)
}

/// λ_mask · focal + (1 − soft IoU).
pub fn mask_loss(m: &Tensor, y: &Tensor, cfg: &LossConfig) -> Result<f64> {
    Ok(cfg.lambda_mask * focal_loss(m, y, cfg)? + iou_loss(m, y)?)
}

/// Squared error between the predicted score and the mask's IoU against
/// ground truth (soft by default, binarized behind the config switch).
pub fn score_loss(s: f64, m: &Tensor, y: &Tensor, cfg: &LossConfig) -> Result<f64> {
    let target = score_target(m, y, cfg)?;
    Ok((s - target) * (s - target))
}

pub fn score_target(m: &Tensor, y: &Tensor, cfg: &LossConfig) -> Result<f64> {
    if cfg.score_target_binarized {
        let mb = crate::mask::BinaryMask::from_tensor(m, 0.5);
        let yb = crate::mask::BinaryMask::from_tensor(y, 0.5);
        Ok(mb.iou(&yb))
    } else {
        soft_iou(m, y)
    }
}

/// Winner branch under the configured rule; ties break to the lowest index.
pub fn select_winner(outputs: &MultiMaskOutput, y: &Tensor, cfg: &LossConfig) -> Result<usize> {
    let ious = outputs
        .masks
        .iter()
        .map(|m| soft_iou(m, y))
        .collect::<Result<Vec<f64>>>()?;
    Ok(pick_winner(&ious, cfg.winner_rule))
}

/// Index selection on per-branch IoU values; ties break to the lowest index.
pub fn pick_winner(ious: &[f64], rule: WinnerRule) -> usize {
    let mut best = 0usize;
    for (i, &v) in ious.iter().enumerate().skip(1) {
        let better = match rule {
            WinnerRule::HighestIou => v > ious[best],
            WinnerRule::LowestIou => v < ious[best],
        };
        if better {
            best = i;
        }
    }
    best
}

/// Full objective at epoch t:
/// mask_loss(m_i*) + Σᵢ λ_score·score_loss(sᵢ) + λ_reg·e^(−γt)·Σᵢ mask_loss(mᵢ).
pub fn total_objective(
    outputs: &MultiMaskOutput,
    y: &Tensor,
    epoch: usize,
    cfg: &LossConfig,
) -> Result<ObjectiveBreakdown> {
    let n = outputs.masks.len();
    let winner = select_winner(outputs, y, cfg)?;
    let mut mask_losses = Vec::with_capacity(n);
    let mut score_losses = Vec::with_capacity(n);
    for i in 0..n {
        mask_losses.push(mask_loss(&outputs.masks[i], y, cfg)?);
        score_losses.push(score_loss(outputs.scores[i], &outputs.masks[i], y, cfg)?);
    }
    let reg_coeff = cfg.reg_coeff(epoch);
    let reg_sum: f64 = mask_losses
        .iter()
        .enumerate()
        .filter(|(i, _)| cfg.reg_includes_winner || *i != winner)
        .map(|(_, v)| v)
        .sum();
    let regularizer = reg_coeff * reg_sum;
    let total = mask_losses[winner]
        + cfg.lambda_score * score_losses.iter().sum::<f64>()
        + regularizer;
    Ok(ObjectiveBreakdown {
        total,
        winner,
        mask_losses,
        score_losses,
        regularizer,
    })
}

fn check_same_shape(context: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            context: context.into(),
            left: a.shape().dims().to_vec(),
            right: b.shape().dims().to_vec(),
        });
    }
    Ok(())
}

// ---- graph builders -------------------------------------------------------

/// Node handles for one branch's loss subgraph.
#[derive(Clone, Copy, Debug)]
pub struct BranchLossNodes {
    pub mask_loss: NodeId,
    pub score_loss: NodeId,
}

/// Appends soft-IoU nodes for a clamped mask against `y`.
pub fn soft_iou_graph(g: &mut Graph, m: NodeId, y: NodeId) -> Result<NodeId> {
    let mc = g.clamp(m, PROB_EPS, 1.0 - PROB_EPS);
    let my = g.mul(mc, y)?;
    let inter = g.sum_all(my);
    let m_plus_y = g.add(mc, y)?;
    let union_pixels = g.sub(m_plus_y, my)?;
    let union = g.sum_all(union_pixels);
    g.div(inter, union)
}

pub fn focal_loss_graph(g: &mut Graph, m: NodeId, y: NodeId, cfg: &LossConfig) -> Result<NodeId> {
    let mc = g.clamp(m, PROB_EPS, 1.0 - PROB_EPS);
    let one_minus_m = g.one_minus(mc);
    let focus = g.pow_const(one_minus_m, cfg.tau);
    let log_m = g.ln(mc);
    let fy = g.mul(focus, y)?;
    let fg_term = g.mul(fy, log_m)?;
    let mut total = g.sum_all(fg_term);
    if cfg.focal_variant == FocalVariant::Symmetric {
        let one_minus_y = g.one_minus(y);
        let focus_bg = g.pow_const(mc, cfg.tau);
        let log_1m = g.ln(one_minus_m);
        let fb = g.mul(focus_bg, one_minus_y)?;
        let bg_term = g.mul(fb, log_1m)?;
        let bg_sum = g.sum_all(bg_term);
        total = g.add(total, bg_sum)?;
    }
    let scale = if cfg.pixel_mean {
        -1.0 / g.shape(m).numel() as f64
    } else {
        -1.0
    };
    Ok(g.mul_const(total, scale))
}

pub fn iou_loss_graph(g: &mut Graph, m: NodeId, y: NodeId) -> Result<NodeId> {
    let iou = soft_iou_graph(g, m, y)?;
    Ok(g.one_minus(iou))
}

pub fn mask_loss_graph(g: &mut Graph, m: NodeId, y: NodeId, cfg: &LossConfig) -> Result<NodeId> {
    let focal = focal_loss_graph(g, m, y, cfg)?;
    let scaled = g.mul_const(focal, cfg.lambda_mask);
    let iou = iou_loss_graph(g, m, y)?;
    g.add(scaled, iou)
}

/// (s − softIoU(m, y))²; the target stays inside the graph so the op's
/// gradient w.r.t. the mask matches finite differences.
pub fn score_loss_graph(g: &mut Graph, s: NodeId, m: NodeId, y: NodeId) -> Result<NodeId> {
    let target = soft_iou_graph(g, m, y)?;
    let diff = g.sub(s, target)?;
    Ok(g.pow_const(diff, 2.0))
}

/// Appends per-branch mask/score loss nodes. The training step seeds the
/// backward pass with (winner + regularizer) coefficients on the mask-loss
/// roots and λ_score on the score-loss roots, so one graph serves every
/// (winner, epoch) combination.
pub fn branch_losses_graph(
    g: &mut Graph,
    masks: &[NodeId],
    scores: &[NodeId],
    y: NodeId,
    cfg: &LossConfig,
) -> Result<Vec<BranchLossNodes>> {
    let mut out = Vec::with_capacity(masks.len());
    for (&m, &s) in masks.iter().zip(scores) {
        let ml = mask_loss_graph(g, m, y, cfg)?;
        // the score node is (1,1,1,1); reduce to scalar for the loss root
        let s_scalar = g.sum_all(s);
        let sl = score_loss_graph(g, s_scalar, m, y)?;
        out.push(BranchLossNodes {
            mask_loss: ml,
            score_loss: sl,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Bindings, Shape};
    use rand::Rng;

    fn half_plane_case() -> (Tensor, Tensor) {
        // 32×32, y = left half (512 px), m ≡ 0.5
        let y = Tensor::from_fn_2d(32, 32, |_, x| if x < 16 { 1.0 } else { 0.0 });
        let m = Tensor::full(Shape::new(&[32, 32]), 0.5);
        (m, y)
    }

    fn literal_cfg() -> LossConfig {
        LossConfig {
            focal_variant: FocalVariant::PaperLiteral,
            ..LossConfig::default()
        }
    }

    #[test]
    fn soft_iou_perfect_and_disjoint() {
        let y = Tensor::from_fn_2d(8, 8, |y, _| if y < 4 { 1.0 } else { 0.0 });
        let inv = y.map(|v| 1.0 - v);
        assert!((soft_iou(&y, &y).unwrap() - 1.0).abs() < 1e-5);
        assert!(soft_iou(&inv, &y).unwrap() < 1e-5);
    }

    #[test]
    fn soft_iou_half_plane_third() {
        let (m, y) = half_plane_case();
        // I = 256, U = 768 → 1/3
        assert!((soft_iou(&m, &y).unwrap() - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn soft_iou_both_empty_is_one() {
        let z = Tensor::zeros(Shape::new(&[4, 4]));
        assert_eq!(soft_iou(&z, &z).unwrap(), 1.0);
    }

    #[test]
    fn focal_perfect_foreground_vanishes() {
        let y = Tensor::from_fn_2d(8, 8, |y, _| if y < 4 { 1.0 } else { 0.0 });
        let m = y.map(|v| if v > 0.5 { 1.0 - 1e-6 } else { 0.3 });
        let l = focal_loss(&m, &y, &literal_cfg()).unwrap();
        assert!(l <= 1e-9, "got {l}");
    }

    #[test]
    fn focal_no_foreground_is_zero_in_literal_mode() {
        let y = Tensor::zeros(Shape::new(&[8, 8]));
        let m = Tensor::from_fn_2d(8, 8, |y, x| ((y * 8 + x) as f64 / 64.0).clamp(0.05, 0.95));
        assert_eq!(focal_loss(&m, &y, &literal_cfg()).unwrap(), 0.0);
    }

    #[test]
    fn focal_single_pixel_closed_form() {
        let y = Tensor::from_vec(Shape::new(&[1, 1]), vec![1.0]).unwrap();
        let m = Tensor::from_vec(Shape::new(&[1, 1]), vec![0.5]).unwrap();
        let expected = 0.25 * (0.5f64.ln()) * -1.0; // 0.173286…
        let got = focal_loss(&m, &y, &literal_cfg()).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.173_286_795_139_986_3).abs() < 1e-9);
    }

    #[test]
    fn iou_loss_endpoints_and_half_plane() {
        let y = Tensor::from_fn_2d(8, 8, |y, _| if y < 4 { 1.0 } else { 0.0 });
        let inv = y.map(|v| 1.0 - v);
        assert!(iou_loss(&y, &y).unwrap() < 1e-5);
        assert!((iou_loss(&inv, &y).unwrap() - 1.0).abs() < 1e-5);
        let (m, yh) = half_plane_case();
        assert!((iou_loss(&m, &yh).unwrap() - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn mask_loss_vanishes_on_match_and_composes() {
        let y = Tensor::from_fn_2d(8, 8, |y, _| if y < 4 { 1.0 } else { 0.0 });
        let cfg = literal_cfg();
        assert!(mask_loss(&y, &y, &cfg).unwrap() <= 1e-5);

        let (m, yh) = half_plane_case();
        let expected = 10.0 * (512.0 * 0.25 * -(0.5f64.ln())) + 2.0 / 3.0;
        let got = mask_loss(&m, &yh, &cfg).unwrap();
        assert!((got - expected).abs() < 1e-6, "got {got}, want {expected}");
        assert!((got - 887.895).abs() < 0.01);
    }

    #[test]
    fn mask_loss_lambda_scales_focal_only() {
        let (m, y) = half_plane_case();
        let cfg = literal_cfg();
        let doubled = LossConfig {
            lambda_mask: 20.0,
            ..cfg.clone()
        };
        let f = focal_loss(&m, &y, &cfg).unwrap();
        let base = mask_loss(&m, &y, &cfg).unwrap();
        let twice = mask_loss(&m, &y, &doubled).unwrap();
        assert!((twice - base - 10.0 * f).abs() < 1e-9);
    }

    #[test]
    fn score_loss_cases() {
        let (m, y) = half_plane_case();
        let cfg = LossConfig::default();
        let target = soft_iou(&m, &y).unwrap();
        assert!(score_loss(target, &m, &y, &cfg).unwrap() < 1e-15);
        let perfect_m = y.clone();
        assert!((score_loss(1.0, &perfect_m, &perfect_m.map(|v| 1.0 - v), &cfg).unwrap() - 1.0).abs() < 1e-4);
        let got = score_loss(0.7, &m, &y, &cfg).unwrap();
        assert!((got - (0.7 - 1.0 / 3.0) * (0.7 - 1.0 / 3.0)).abs() < 1e-9);
        assert!((got - 0.134_444_444).abs() < 1e-6);
    }

    #[test]
    fn winner_prefers_matching_branch_and_breaks_ties_low() {
        let y = Tensor::from_fn_2d(8, 8, |y, _| if y < 4 { 1.0 } else { 0.0 });
        let inv = y.map(|v| 1.0 - v);
        let cfg = LossConfig::default();
        let out = MultiMaskOutput {
            masks: vec![inv.clone(), y.clone(), inv.clone()],
            scores: vec![0.5, 0.5, 0.5],
        };
        assert_eq!(select_winner(&out, &y, &cfg).unwrap(), 1);

        let tie = MultiMaskOutput {
            masks: vec![y.clone(), y.clone(), y.clone()],
            scores: vec![0.5, 0.5, 0.5],
        };
        assert_eq!(select_winner(&tie, &y, &cfg).unwrap(), 0);
    }

    #[test]
    fn winner_matches_brute_force_on_random_outputs() {
        let mut rng = crate::util::rng_for(11, "winner", 0);
        let cfg = LossConfig::default();
        for _ in 0..25 {
            let y = Tensor::from_fn_2d(8, 8, |_, _| if rng.gen_bool(0.4) { 1.0 } else { 0.0 });
            let masks: Vec<Tensor> = (0..3)
                .map(|_| Tensor::from_fn_2d(8, 8, |_, _| rng.gen_range(0.01..0.99)))
                .collect();
            let out = MultiMaskOutput {
                masks: masks.clone(),
                scores: vec![0.1, 0.2, 0.3],
            };
            let brute = masks
                .iter()
                .map(|m| soft_iou(m, &y).unwrap())
                .enumerate()
                .fold((0usize, f64::MIN), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc })
                .0;
            assert_eq!(select_winner(&out, &y, &cfg).unwrap(), brute);
        }
    }

    #[test]
    fn winner_invariant_under_monotone_transform() {
        // pick_winner is unchanged when a strictly monotone map is applied
        // identically to every branch's IoU value.
        let mut rng = crate::util::rng_for(12, "winner-mono", 0);
        let maps: [fn(f64) -> f64; 3] = [
            |v| (3.0 * v + 1.0).tanh(),
            |v| v * v * v + 2.0 * v,
            |v| (v + 0.5).ln(),
        ];
        for _ in 0..50 {
            let ious: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
            let base = pick_winner(&ious, WinnerRule::HighestIou);
            for f in maps {
                let mapped: Vec<f64> = ious.iter().map(|&v| f(v)).collect();
                assert_eq!(pick_winner(&mapped, WinnerRule::HighestIou), base);
            }
        }
    }

    #[test]
    fn total_objective_decay_limit_and_degenerate_n() {
        let y = Tensor::from_fn_2d(8, 8, |y, _| if y < 4 { 1.0 } else { 0.0 });
        let mut rng = crate::util::rng_for(13, "objective", 0);
        let masks: Vec<Tensor> = (0..3)
            .map(|_| Tensor::from_fn_2d(8, 8, |_, _| rng.gen_range(0.01..0.99)))
            .collect();
        let out = MultiMaskOutput {
            masks,
            scores: vec![0.3, 0.6, 0.9],
        };
        let cfg = LossConfig::default();

        // decay limit: e^(−0.2·200) < 1e-12
        let far = total_objective(&out, &y, 200, &cfg).unwrap();
        let manual = far.mask_losses[far.winner]
            + cfg.lambda_score * far.score_losses.iter().sum::<f64>();
        assert!((far.total - manual).abs() < 1e-9);

        // N = 1: total = (1 + λ_reg e^(−γt))·mask_loss + λ_score·score_loss
        let single = MultiMaskOutput {
            masks: vec![out.masks[0].clone()],
            scores: vec![0.42],
        };
        let t = 3usize;
        let b = total_objective(&single, &y, t, &cfg).unwrap();
        let ml = mask_loss(&single.masks[0], &y, &cfg).unwrap();
        let sl = score_loss(0.42, &single.masks[0], &y, &cfg).unwrap();
        let want = (1.0 + cfg.reg_coeff(t)) * ml + cfg.lambda_score * sl;
        assert!((b.total - want).abs() < 1e-12);
    }

    #[test]
    fn total_objective_matches_component_recomposition() {
        let y = Tensor::from_fn_2d(8, 8, |_, x| if x >= 3 { 1.0 } else { 0.0 });
        let mut rng = crate::util::rng_for(14, "objective", 1);
        let masks: Vec<Tensor> = (0..3)
            .map(|_| Tensor::from_fn_2d(8, 8, |_, _| rng.gen_range(0.01..0.99)))
            .collect();
        let scores = vec![0.25, 0.5, 0.75];
        let out = MultiMaskOutput {
            masks: masks.clone(),
            scores: scores.clone(),
        };
        let cfg = LossConfig::default();
        let t = 2usize;
        let b = total_objective(&out, &y, t, &cfg).unwrap();

        let winner = select_winner(&out, &y, &cfg).unwrap();
        let mut recomposed = mask_loss(&masks[winner], &y, &cfg).unwrap();
        for i in 0..3 {
            recomposed += cfg.lambda_score * score_loss(scores[i], &masks[i], &y, &cfg).unwrap();
            recomposed += cfg.reg_coeff(t) * mask_loss(&masks[i], &y, &cfg).unwrap();
        }
        assert!((b.total - recomposed).abs() < 1e-12);
        assert_eq!(b.winner, winner);
    }

    #[test]
    fn total_objective_non_increasing_in_epoch() {
        let y = Tensor::from_fn_2d(8, 8, |_, x| if x < 4 { 1.0 } else { 0.0 });
        let mut rng = crate::util::rng_for(15, "objective", 2);
        let out = MultiMaskOutput {
            masks: (0..2)
                .map(|_| Tensor::from_fn_2d(8, 8, |_, _| rng.gen_range(0.01..0.99)))
                .collect(),
            scores: vec![0.4, 0.6],
        };
        let cfg = LossConfig::default();
        let mut prev = f64::INFINITY;
        for t in 0..20 {
            let b = total_objective(&out, &y, t, &cfg).unwrap();
            assert!(b.total <= prev + 1e-12);
            prev = b.total;
        }
    }

    #[test]
    fn graph_losses_agree_with_plain_values() {
        let mut rng = crate::util::rng_for(16, "graph-loss", 0);
        let h = 6;
        let w = 7;
        let y_t = Tensor::from_fn_2d(h, w, |_, _| if rng.gen_bool(0.45) { 1.0 } else { 0.0 });
        let m_t = Tensor::from_fn_2d(h, w, |_, _| rng.gen_range(0.01..0.99));
        for cfg in [LossConfig::default(), literal_cfg()] {
            let mut g = Graph::new();
            let m = g.var("m", Shape::new(&[h, w])).unwrap();
            let yv = g.var("y", Shape::new(&[h, w])).unwrap();
            let ml = mask_loss_graph(&mut g, m, yv, &cfg).unwrap();
            let mut b: Bindings = Bindings::new();
            b.insert("m".into(), m_t.clone());
            b.insert("y".into(), y_t.clone());
            let got = g.eval(ml, &b).unwrap().item();
            let want = mask_loss(&m_t, &y_t, &cfg).unwrap();
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }
}
