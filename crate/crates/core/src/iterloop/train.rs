//! Mini-batch training with winner-take-all assignment, the labeler's
//! seed-set training, and dataset labeling.
//!
//! One combined graph (trunk + per-branch losses) is built per run. Each
//! batch element does a single forward pass, picks its winner from the mask
//! values, then seeds one backward pass with the winner/regularizer
//! coefficients on the mask-loss roots and λ_score on the score-loss roots.
//! Batch members run in parallel; gradients merge in index order, so steps
//! are bit-reproducible regardless of scheduling.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, NodeId, Shape, Tensor};
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::netmodel::arch::{self, Mode, NormSite};
use crate::netmodel::{ModalityBundle, ModelConfig, MultiMaskNet, NetInput};
use crate::objective::{self, BranchLossNodes, LossConfig};
use crate::scenegen::{synthesize_modalities, ModalityCorruptionSpec, Sample};
use crate::util::rng_for;

const NORM_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub loss: LossConfig,
    /// Off for the labeler, which trains with the mask loss only.
    pub score_loss_enabled: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            loss: LossConfig::default(),
            score_loss_enabled: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("moment decays must lie in [0,1)".into()));
        }
        self.loss.validate()
    }
}

/// One training example at model resolution.
#[derive(Clone, Debug)]
pub struct TrainItem {
    pub input: NetInput,
    pub target: BinaryMask,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean total objective per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Adaptive-moment optimizer over named parameter tensors, iterated in name
/// order.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(cfg: &TrainConfig) -> Self {
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn update(&mut self, params: &mut BTreeMap<String, Tensor>, grads: &BTreeMap<String, Tensor>) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (name, grad) in grads {
            let param = params.get_mut(name).expect("grad for unknown parameter");
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.shape().clone()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.shape().clone()));
            let (pd, md, vd) = (param.data_mut(), m.data_mut(), v.data_mut());
            for i in 0..gd_len(grad) {
                let g = grad.data()[i];
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * g;
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * g * g;
                let mhat = md[i] / bc1;
                let vhat = vd[i] / bc2;
                pd[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[inline]
fn gd_len(t: &Tensor) -> usize {
    t.numel()
}

/// Trunk graph extended with per-branch loss nodes.
pub(crate) struct TrainingGraph {
    pub graph: Graph,
    pub mask_nodes: Vec<NodeId>,
    pub losses: Vec<BranchLossNodes>,
    pub norm_sites: Vec<NormSite>,
    pub wrt: Vec<String>,
}

pub(crate) fn build_training_graph(cfg: &ModelConfig, loss: &LossConfig) -> Result<TrainingGraph> {
    let mut out = arch::build(cfg, Mode::Train)?;
    let y = out.graph.var(
        "y",
        Shape::new(&[1, 1, cfg.input_h, cfg.input_w]),
    )?;
    let losses = objective::branch_losses_graph(
        &mut out.graph,
        &out.mask_nodes,
        &out.score_nodes,
        y,
        loss,
    )?;
    let wrt = out.param_defs.iter().map(|d| d.name.clone()).collect();
    Ok(TrainingGraph {
        graph: out.graph,
        mask_nodes: out.mask_nodes,
        losses,
        norm_sites: out.norm_sites,
        wrt,
    })
}

struct StepOut {
    grads: BTreeMap<String, Tensor>,
    loss: f64,
    norm_inputs: Vec<Tensor>,
}

/// Minimize the total objective over the dataset by mini-batch Adam. The
/// epoch index drives the regularizer decay e^(−γt), starting at 0.
pub fn train(net: &mut MultiMaskNet, data: &[TrainItem], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Dataset("training on an empty dataset".into()));
    }
    let tg = build_training_graph(net.config(), &cfg.loss)?;
    let heads = net.config().heads;
    let mut adam = Adam::new(cfg);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    // binarized targets as rank-4 tensors, computed once
    let targets: Vec<Tensor> = data
        .iter()
        .map(|item| {
            item.target
                .to_tensor()
                .to_bchw()
                .expect("target rank-2")
        })
        .collect();

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng = rng_for(cfg.seed, "shuffle", epoch as u64);
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }

        let reg_coeff = cfg.loss.reg_coeff(epoch);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let step_outs: Vec<StepOut> = batch
                .par_iter()
                .map(|&i| -> Result<StepOut> {
                    let mut bindings = net.train_bindings(&data[i].input)?;
                    bindings.insert("y".into(), targets[i].clone());
                    let mut sample_loss = 0.0;
                    let (values, grads) = tg
                        .graph
                        .forward_backward(&bindings, &tg.wrt, |values| {
                            let ious: Vec<f64> = tg
                                .mask_nodes
                                .iter()
                                .map(|id| {
                                    objective::soft_iou(&values[id.idx()], &targets[i])
                                        .expect("mask/target shapes agree")
                                })
                                .collect();
                            let winner = objective::pick_winner(&ious, cfg.loss.winner_rule);
                            let mut seeds = Vec::with_capacity(2 * heads);
                            for (b, nodes) in tg.losses.iter().enumerate() {
                                let mut coeff = if b == winner { 1.0 } else { 0.0 };
                                if cfg.loss.reg_includes_winner || b != winner {
                                    coeff += reg_coeff;
                                }
                                seeds.push((nodes.mask_loss, coeff));
                                sample_loss += coeff * values[nodes.mask_loss.idx()].item();
                                if cfg.score_loss_enabled {
                                    seeds.push((nodes.score_loss, cfg.loss.lambda_score));
                                    sample_loss +=
                                        cfg.loss.lambda_score * values[nodes.score_loss.idx()].item();
                                }
                            }
                            seeds
                        })
                        .map_err(|e| match e {
                            Error::NonFinite { .. } => Error::NonFiniteLoss {
                                epoch,
                                batch: batch_idx,
                            },
                            other => other,
                        })?;
                    let norm_inputs = tg
                        .norm_sites
                        .iter()
                        .map(|s| values[s.input_node.idx()].clone())
                        .collect();
                    Ok(StepOut {
                        grads,
                        loss: sample_loss,
                        norm_inputs,
                    })
                })
                .collect::<Result<_>>()?;

            // deterministic merge in batch order
            let inv = 1.0 / batch.len() as f64;
            let mut mean_grads: BTreeMap<String, Tensor> = BTreeMap::new();
            for out in &step_outs {
                for (name, g) in &out.grads {
                    match mean_grads.get_mut(name) {
                        Some(acc) => {
                            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                                *a += b;
                            }
                        }
                        None => {
                            mean_grads.insert(name.clone(), g.clone());
                        }
                    }
                }
                epoch_loss += out.loss;
            }
            for g in mean_grads.values_mut() {
                for v in g.data_mut() {
                    *v *= inv;
                }
            }
            if !step_outs.iter().all(|s| s.loss.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            adam.update(net.params_mut(), &mean_grads);
            let norm_batch: Vec<Vec<Tensor>> =
                step_outs.into_iter().map(|s| s.norm_inputs).collect();
            net.update_norm_stats_from(&norm_batch, NORM_MOMENTUM);
        }
        epoch_losses.push(epoch_loss / data.len() as f64);
    }
    Ok(TrainReport { epoch_losses })
}

/// Build the deterministic modality bundle for a sample at model resolution.
pub fn bundle_for_sample(
    sample: &Sample,
    corruption: &ModalityCorruptionSpec,
    input_h: usize,
    input_w: usize,
) -> ModalityBundle {
    let resized = sample.resized(input_h, input_w);
    let mut rng = rng_for(sample.seed, "modality", 0);
    synthesize_modalities(&resized, corruption, &mut rng)
}

/// Train the fusion+decoder labeler (bundle input, one head, mask loss only)
/// on a seed set with generator ground truth.
pub fn train_labeler(
    seed_set: &[Sample],
    corruption: &ModalityCorruptionSpec,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(MultiMaskNet, TrainReport)> {
    if model_cfg.modal.is_none() || model_cfg.heads != 1 {
        return Err(Error::Config(
            "labeler must use the modality role with a single head".into(),
        ));
    }
    let mut net = MultiMaskNet::new(model_cfg.clone())?;
    let items = labeler_items(seed_set, corruption, model_cfg);
    let cfg = TrainConfig {
        score_loss_enabled: false,
        ..cfg.clone()
    };
    let report = train(&mut net, &items, &cfg)?;
    Ok((net, report))
}

pub fn labeler_items(
    samples: &[Sample],
    corruption: &ModalityCorruptionSpec,
    model_cfg: &ModelConfig,
) -> Vec<TrainItem> {
    let (h, w) = (model_cfg.input_h, model_cfg.input_w);
    samples
        .par_iter()
        .map(|s| TrainItem {
            input: NetInput::Bundle(bundle_for_sample(s, corruption, h, w)),
            target: s.gt.resize(h, w),
        })
        .collect()
}

/// A sample labeled by the labeler; the student trains on `label`, never on
/// the generator's gt.
#[derive(Clone, Debug)]
pub struct LabeledSample {
    pub sample: Sample,
    /// binarized at 0.5, model resolution
    pub label: BinaryMask,
    /// labeler's soft output (for 8-bit export)
    pub label_soft: Tensor,
    /// label agreement with generator gt at model resolution
    pub iou_vs_gt: f64,
}

/// Decode a label for every sample from its modality bundle.
pub fn label_dataset(
    labeler: &MultiMaskNet,
    samples: &[Sample],
    corruption: &ModalityCorruptionSpec,
) -> Result<Vec<LabeledSample>> {
    let (h, w) = (labeler.config().input_h, labeler.config().input_w);
    samples
        .par_iter()
        .map(|s| {
            let bundle = bundle_for_sample(s, corruption, h, w);
            let out = labeler.forward(&NetInput::Bundle(bundle))?;
            let soft = out.masks[0].clone();
            let label = BinaryMask::from_tensor(&soft, 0.5);
            let gt = s.gt.resize(h, w);
            let iou = label.iou(&gt);
            Ok(LabeledSample {
                sample: s.clone(),
                label,
                label_soft: soft,
                iou_vs_gt: iou,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{generate_dataset, CategoryCatalog, GenConfig};

    fn tiny_student() -> ModelConfig {
        ModelConfig {
            input_h: 16,
            input_w: 16,
            encoder_widths: vec![4, 8],
            fusion_width: 8,
            heads: 2,
            seed: 3,
            ..ModelConfig::default()
        }
    }

    fn tiny_items(n: usize) -> Vec<TrainItem> {
        let cat = CategoryCatalog::with_hard(4, 0);
        let cfg = GenConfig {
            base_resolution: 16,
            p_amb: 0.0,
            ..GenConfig::default()
        };
        generate_dataset(&cat, &[1.0; 4], n, &cfg, 31, 0, 0)
            .unwrap()
            .into_iter()
            .map(|s| {
                let r = s.resized(16, 16);
                TrainItem {
                    input: NetInput::Image(r.image.clone()),
                    target: r.gt.clone(),
                }
            })
            .collect()
    }

    #[test]
    fn zero_epochs_leave_params_unchanged() {
        let mut net = MultiMaskNet::new(tiny_student()).unwrap();
        let before = net.params().clone();
        let cfg = TrainConfig {
            epochs: 0,
            seed: 1,
            ..TrainConfig::default()
        };
        train(&mut net, &tiny_items(4), &cfg).unwrap();
        assert_eq!(&before, net.params());
    }

    #[test]
    fn loss_descends_on_a_small_run() {
        let mut net = MultiMaskNet::new(tiny_student()).unwrap();
        let cfg = TrainConfig {
            epochs: 12,
            batch_size: 4,
            seed: 2,
            loss: LossConfig {
                pixel_mean: true,
                ..LossConfig::default()
            },
            ..TrainConfig::default()
        };
        let report = train(&mut net, &tiny_items(8), &cfg).unwrap();
        assert!(
            report.epoch_losses[10] < report.epoch_losses[0],
            "epoch-10 loss {} not below epoch-0 loss {}",
            report.epoch_losses[10],
            report.epoch_losses[0]
        );
    }

    #[test]
    fn training_is_deterministic() {
        let items = tiny_items(6);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 3,
            seed: 5,
            loss: LossConfig {
                pixel_mean: true,
                ..LossConfig::default()
            },
            ..TrainConfig::default()
        };
        let mut a = MultiMaskNet::new(tiny_student()).unwrap();
        let ra = train(&mut a, &items, &cfg).unwrap();
        let mut b = MultiMaskNet::new(tiny_student()).unwrap();
        let rb = train(&mut b, &items, &cfg).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(ra.epoch_losses, rb.epoch_losses);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let mut net = MultiMaskNet::new(tiny_student()).unwrap();
        assert!(train(&mut net, &[], &TrainConfig::default()).is_err());
    }
}
