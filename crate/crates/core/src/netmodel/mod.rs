//! Multi-mask segmentation network: a staged strided-convolution encoder,
//! per-stage reassembly projections, top-down fusion with residual
//! convolution units and bilinear upsampling, N sigmoid mask heads and an
//! IoU-score head. The labeler role prepends a three-branch multi-modal
//! fusion block whose final 1×1 convolution is zero-initialized, so training
//! starts from the residual identity on the semantic projection.

pub(crate) mod arch;
mod checkpoint;
mod model;

use serde::{Deserialize, Serialize};

use crate::diffcore::{bilinear_resize, Shape, Tensor};
use crate::error::{Error, Result};

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use model::{MultiMaskNet, NetInput};

/// Channel layout of a modality bundle fed to the labeler role.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalInputConfig {
    pub semantic_channels: usize,
    pub generative_channels: usize,
    pub concept_channels: usize,
    /// Common projection width of the fusion block (the paper-scale value is
    /// 256; the desk-scale default is 32).
    pub width: usize,
}

impl Default for ModalInputConfig {
    fn default() -> Self {
        ModalInputConfig {
            semantic_channels: 3,
            generative_channels: 2,
            concept_channels: 2,
            width: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_h: usize,
    pub input_w: usize,
    /// Channels of the raw image input; ignored for the labeler role, where
    /// the trunk reads the fusion block's output.
    pub in_channels: usize,
    /// Encoder stage widths; stride-2 between stages.
    pub encoder_widths: Vec<usize>,
    /// Decoder reassembly/fusion width.
    pub fusion_width: usize,
    /// Number of mask heads N.
    pub heads: usize,
    /// Parameter-init seed.
    pub seed: u64,
    /// Present for the labeler role: modality fusion front-end.
    pub modal: Option<ModalInputConfig>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_h: 64,
            input_w: 64,
            in_channels: 3,
            encoder_widths: vec![16, 32, 64, 128],
            fusion_width: 32,
            heads: 3,
            seed: 0,
            modal: None,
        }
    }
}

impl ModelConfig {
    /// Image-input role.
    pub fn image(input: usize, widths: &[usize], fusion_width: usize, heads: usize, seed: u64) -> Self {
        ModelConfig {
            input_h: input,
            input_w: input,
            in_channels: 3,
            encoder_widths: widths.to_vec(),
            fusion_width,
            heads,
            seed,
            modal: None,
        }
    }

    /// Labeler role: modality-bundle input, single head.
    pub fn labeler(input: usize, widths: &[usize], fusion_width: usize, modal: ModalInputConfig, seed: u64) -> Self {
        ModelConfig {
            input_h: input,
            input_w: input,
            in_channels: modal.width,
            encoder_widths: widths.to_vec(),
            fusion_width,
            heads: 1,
            seed,
            modal: Some(modal),
        }
    }

    pub fn stages(&self) -> usize {
        self.encoder_widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 {
            return Err(Error::Config("heads must be >= 1".into()));
        }
        if self.encoder_widths.is_empty() || self.encoder_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!(
                "encoder widths must be nonempty and positive: {:?}",
                self.encoder_widths
            )));
        }
        if self.fusion_width == 0 {
            return Err(Error::Config("fusion width must be positive".into()));
        }
        let div = 1usize << (self.stages() - 1);
        if self.input_h % div != 0 || self.input_w % div != 0 {
            return Err(Error::Config(format!(
                "input {}x{} not divisible by 2^(stages-1) = {div}",
                self.input_h, self.input_w
            )));
        }
        if let Some(m) = &self.modal {
            if m.width == 0 || m.semantic_channels == 0 || m.generative_channels == 0 || m.concept_channels == 0 {
                return Err(Error::Config("modal channel counts must be positive".into()));
            }
            if self.input_h % 4 != 0 || self.input_w % 4 != 0 {
                return Err(Error::Config(
                    "labeler input must be divisible by 4 (quarter-resolution branch)".into(),
                ));
            }
        }
        Ok(())
    }
}

/// N soft masks in (0,1)^(H×W) plus N predicted IoU scores in [0,1].
#[derive(Clone, Debug, PartialEq)]
pub struct MultiMaskOutput {
    pub masks: Vec<Tensor>,
    pub scores: Vec<f64>,
}

impl MultiMaskOutput {
    pub fn validate(&self, heads: usize) -> Result<()> {
        if self.masks.len() != heads || self.scores.len() != heads {
            return Err(Error::Config(format!(
                "expected {heads} masks and scores, got {} / {}",
                self.masks.len(),
                self.scores.len()
            )));
        }
        for m in &self.masks {
            if m.data().iter().any(|&v| !(v > 0.0 && v < 1.0)) {
                return Err(Error::Config("mask values must lie strictly inside (0,1)".into()));
            }
        }
        if self.scores.iter().any(|&s| !(0.0..=1.0).contains(&s)) {
            return Err(Error::Config("scores must lie in [0,1]".into()));
        }
        Ok(())
    }

    /// Branch with the highest predicted score; ties break to lowest index.
    pub fn selected_branch(&self) -> usize {
        let mut best = 0;
        for (i, &s) in self.scores.iter().enumerate().skip(1) {
            if s > self.scores[best] {
                best = i;
            }
        }
        best
    }
}

/// Three aligned proxy feature stacks standing in for the semantic,
/// generative and concept-attention modalities. The generative stack lives
/// at quarter resolution; the fusion block resizes it internally.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityBundle {
    pub semantic: Tensor,
    pub generative: Tensor,
    pub concept: Tensor,
}

impl ModalityBundle {
    pub fn channel_counts(&self) -> (usize, usize, usize) {
        let c = |t: &Tensor| t.shape().dims()[0];
        (c(&self.semantic), c(&self.generative), c(&self.concept))
    }

    pub fn matches(&self, cfg: &ModalInputConfig) -> Result<()> {
        let (a, b, c) = self.channel_counts();
        if (a, b, c) != (cfg.semantic_channels, cfg.generative_channels, cfg.concept_channels) {
            return Err(Error::Config(format!(
                "bundle channels ({a},{b},{c}) do not match config ({},{},{})",
                cfg.semantic_channels, cfg.generative_channels, cfg.concept_channels
            )));
        }
        Ok(())
    }

    /// Resample to the model's input resolution (semantic/concept at full,
    /// generative at quarter resolution).
    pub fn resized(&self, h: usize, w: usize) -> ModalityBundle {
        let plane = |t: &Tensor, th: usize, tw: usize| {
            let dims = t.shape().dims();
            if dims[1] == th && dims[2] == tw {
                t.clone()
            } else {
                bilinear_resize(t, th, tw)
            }
        };
        ModalityBundle {
            semantic: plane(&self.semantic, h, w),
            generative: plane(&self.generative, h / 4, w / 4),
            concept: plane(&self.concept, h, w),
        }
    }

    /// Zero out deselected modalities (ablation runs keep the shapes).
    pub fn masked(&self, use_semantic: bool, use_generative: bool, use_concept: bool) -> ModalityBundle {
        let zero_if = |t: &Tensor, keep: bool| {
            if keep {
                t.clone()
            } else {
                Tensor::zeros(t.shape().clone())
            }
        };
        ModalityBundle {
            semantic: zero_if(&self.semantic, use_semantic),
            generative: zero_if(&self.generative, use_generative),
            concept: zero_if(&self.concept, use_concept),
        }
    }
}

pub(crate) fn rank3_to_bchw(t: &Tensor) -> Result<Tensor> {
    let dims = t.shape().dims();
    match dims {
        [c, h, w] => t.reshaped(Shape::new(&[1, *c, *h, *w])),
        _ => Err(Error::InvalidShape {
            context: "expected rank-3 (C,H,W)".into(),
            shape: dims.to_vec(),
        }),
    }
}
