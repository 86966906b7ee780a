//! Graph construction for the trunk and the multi-modal fusion block.
//!
//! The same builder runs in two modes: `Train` inserts per-channel
//! batch-statistics normalization nodes, `Eval` replaces them with affine
//! transforms whose scale/shift are bound from running statistics at
//! evaluation time (variables suffixed `.eval_scale` / `.eval_shift`).

use crate::diffcore::{Graph, NodeId, Shape};
use crate::error::Result;

use super::ModelConfig;

pub(crate) const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug)]
pub(crate) enum Init {
    /// He-normal fan-in initialization for conv weights.
    He { fan_in: usize },
    Zero,
    One,
}

#[derive(Clone, Debug)]
pub(crate) struct ParamDef {
    pub name: String,
    pub shape: Shape,
    pub init: Init,
}

/// A normalization site: `input_node` is the (train-graph) node whose value
/// feeds the Normalize op; running stats are tracked under `name`.
#[derive(Clone, Debug)]
pub(crate) struct NormSite {
    pub name: String,
    pub channels: usize,
    pub input_node: NodeId,
}

pub(crate) struct BuildOut {
    pub graph: Graph,
    pub mask_nodes: Vec<NodeId>,
    pub score_nodes: Vec<NodeId>,
    /// Fusion block output and the projected semantic branch (labeler role).
    pub fused_node: Option<NodeId>,
    pub sem_proj_node: Option<NodeId>,
    pub param_defs: Vec<ParamDef>,
    pub norm_sites: Vec<NormSite>,
}

struct Builder<'a> {
    g: Graph,
    cfg: &'a ModelConfig,
    mode: Mode,
    defs: Vec<ParamDef>,
    norm_sites: Vec<NormSite>,
}

impl<'a> Builder<'a> {
    fn conv(
        &mut self,
        name: &str,
        x: NodeId,
        ci: usize,
        co: usize,
        k: usize,
        stride: usize,
        init: Init,
    ) -> Result<NodeId> {
        let w = self.g.var(&format!("{name}.w"), Shape::new(&[co, ci, k, k]))?;
        let b = self.g.var(&format!("{name}.b"), Shape::new(&[co]))?;
        self.defs.push(ParamDef {
            name: format!("{name}.w"),
            shape: Shape::new(&[co, ci, k, k]),
            init,
        });
        self.defs.push(ParamDef {
            name: format!("{name}.b"),
            shape: Shape::new(&[co]),
            init: Init::Zero,
        });
        self.g.conv2d(x, w, b, stride)
    }

    /// Batch-statistics normalization with learned per-channel affine; eval
    /// mode folds the running statistics into one affine transform.
    fn norm(&mut self, name: &str, x: NodeId, channels: usize) -> Result<NodeId> {
        match self.mode {
            Mode::Train => {
                self.norm_sites.push(NormSite {
                    name: name.to_string(),
                    channels,
                    input_node: x,
                });
                let gamma = self.g.var(&format!("{name}.gamma"), Shape::new(&[channels]))?;
                let beta = self.g.var(&format!("{name}.beta"), Shape::new(&[channels]))?;
                self.defs.push(ParamDef {
                    name: format!("{name}.gamma"),
                    shape: Shape::new(&[channels]),
                    init: Init::One,
                });
                self.defs.push(ParamDef {
                    name: format!("{name}.beta"),
                    shape: Shape::new(&[channels]),
                    init: Init::Zero,
                });
                let normed = self.g.normalize(x, NORM_EPS)?;
                self.g.channel_affine(normed, gamma, beta)
            }
            Mode::Eval => {
                // gamma/beta still exist as params; they are folded into the
                // bound eval_scale/eval_shift, so the graph reads only those.
                self.defs.push(ParamDef {
                    name: format!("{name}.gamma"),
                    shape: Shape::new(&[channels]),
                    init: Init::One,
                });
                self.defs.push(ParamDef {
                    name: format!("{name}.beta"),
                    shape: Shape::new(&[channels]),
                    init: Init::Zero,
                });
                let scale = self.g.var(&format!("{name}.eval_scale"), Shape::new(&[channels]))?;
                let shift = self.g.var(&format!("{name}.eval_shift"), Shape::new(&[channels]))?;
                self.g.channel_affine(x, scale, shift)
            }
        }
    }

    /// Residual convolution unit: f + conv(relu(conv(relu(f)))).
    fn rcu(&mut self, name: &str, f: NodeId, width: usize) -> Result<NodeId> {
        let a = self.g.relu(f);
        let c1 = self.conv(
            &format!("{name}.c1"),
            a,
            width,
            width,
            3,
            1,
            Init::He { fan_in: width * 9 },
        )?;
        let a2 = self.g.relu(c1);
        let c2 = self.conv(
            &format!("{name}.c2"),
            a2,
            width,
            width,
            3,
            1,
            Init::He { fan_in: width * 9 },
        )?;
        self.g.add(f, c2)
    }

    /// One modality projection branch: 3×3 conv → norm → relu.
    fn branch(&mut self, name: &str, x: NodeId, ci: usize, co: usize) -> Result<NodeId> {
        let c = self.conv(name, x, ci, co, 3, 1, Init::He { fan_in: ci * 9 })?;
        let n = self.norm(name, c, co)?;
        Ok(self.g.relu(n))
    }

    fn fusion_block(&mut self) -> Result<(NodeId, NodeId)> {
        let modal = self.cfg.modal.as_ref().expect("fusion block needs modal config");
        let (h, w) = (self.cfg.input_h, self.cfg.input_w);
        let p = modal.width;

        let sem = self
            .g
            .var("sem", Shape::new(&[1, modal.semantic_channels, h, w]))?;
        let gen = self.g.var(
            "gen",
            Shape::new(&[1, modal.generative_channels, h / 4, w / 4]),
        )?;
        let con = self
            .g
            .var("con", Shape::new(&[1, modal.concept_channels, h, w]))?;

        let s = self.branch("fuse.sem", sem, modal.semantic_channels, p)?;
        let g_small = self.branch("fuse.gen", gen, modal.generative_channels, p)?;
        let g_full = self.g.resize(g_small, h, w)?;
        let c = self.branch("fuse.con", con, modal.concept_channels, p)?;

        let cat = self.g.concat_channels(&[s, g_full, c])?;
        let mix1 = self.conv("fuse.mix1", cat, 3 * p, p, 3, 1, Init::He { fan_in: 3 * p * 9 })?;
        let mix1 = self.g.relu(mix1);
        // zero-initialized: training starts from the residual identity
        let mix2 = self.conv("fuse.mix2", mix1, p, p, 1, 1, Init::Zero)?;
        let fused = self.g.add(s, mix2)?;
        Ok((fused, s))
    }
}

pub(crate) fn build(cfg: &ModelConfig, mode: Mode) -> Result<BuildOut> {
    cfg.validate()?;
    let mut b = Builder {
        g: Graph::new(),
        cfg,
        mode,
        defs: Vec::new(),
        norm_sites: Vec::new(),
    };

    let (trunk_in, trunk_ci, fused_node, sem_proj_node) = if cfg.modal.is_some() {
        let (fused, sem_proj) = b.fusion_block()?;
        let width = cfg.modal.as_ref().unwrap().width;
        (fused, width, Some(fused), Some(sem_proj))
    } else {
        let x = b.g.var(
            "x",
            Shape::new(&[1, cfg.in_channels, cfg.input_h, cfg.input_w]),
        )?;
        (x, cfg.in_channels, None, None)
    };

    // encoder: strided conv + relu + conv + relu per stage
    let mut stage_outs = Vec::with_capacity(cfg.stages());
    let mut prev = trunk_in;
    let mut prev_c = trunk_ci;
    for (i, &width) in cfg.encoder_widths.iter().enumerate() {
        let stride = if i == 0 { 1 } else { 2 };
        let c1 = b.conv(
            &format!("enc{i}.a"),
            prev,
            prev_c,
            width,
            3,
            stride,
            Init::He { fan_in: prev_c * 9 },
        )?;
        let r1 = b.g.relu(c1);
        let c2 = b.conv(
            &format!("enc{i}.b"),
            r1,
            width,
            width,
            3,
            1,
            Init::He { fan_in: width * 9 },
        )?;
        let r2 = b.g.relu(c2);
        stage_outs.push(r2);
        prev = r2;
        prev_c = width;
    }

    // reassembly: 1×1 projections to the fusion width
    let fw = cfg.fusion_width;
    let projections: Vec<NodeId> = cfg
        .encoder_widths
        .iter()
        .enumerate()
        .map(|(i, &width)| {
            b.conv(
                &format!("proj{i}"),
                stage_outs[i],
                width,
                fw,
                1,
                1,
                Init::He { fan_in: width },
            )
        })
        .collect::<Result<_>>()?;

    // top-down fusion with residual units and bilinear upsampling
    let last = cfg.stages() - 1;
    let mut f = b.rcu(&format!("dec{last}"), projections[last], fw)?;
    let deepest = f;
    for i in (0..last).rev() {
        let res_h = cfg.input_h >> i;
        let res_w = cfg.input_w >> i;
        let up = b.g.resize(f, res_h, res_w)?;
        let merged = b.g.add(projections[i], up)?;
        f = b.rcu(&format!("dec{i}"), merged, fw)?;
    }

    // mask heads: per-branch two-layer conv at full resolution
    let head_w = (fw / 2).max(4);
    let mut mask_nodes = Vec::with_capacity(cfg.heads);
    for j in 0..cfg.heads {
        let h1 = b.conv(
            &format!("head.mask{j}.c1"),
            f,
            fw,
            head_w,
            3,
            1,
            Init::He { fan_in: fw * 9 },
        )?;
        let r = b.g.relu(h1);
        let h2 = b.conv(
            &format!("head.mask{j}.c2"),
            r,
            head_w,
            1,
            3,
            1,
            Init::He { fan_in: head_w * 9 },
        )?;
        let s = b.g.sigmoid(h2);
        let clamped = b.g.clamp(s, crate::objective::PROB_EPS, 1.0 - crate::objective::PROB_EPS);
        mask_nodes.push(clamped);
    }

    // score head: global pool on the deepest fused map → two affine layers
    let pooled = b.g.global_mean_pool(deepest)?;
    let fc1 = b.conv("head.score_fc", pooled, fw, fw, 1, 1, Init::He { fan_in: fw })?;
    let fc1 = b.g.relu(fc1);
    let mut score_nodes = Vec::with_capacity(cfg.heads);
    for j in 0..cfg.heads {
        let fc2 = b.conv(
            &format!("head.score{j}"),
            fc1,
            fw,
            1,
            1,
            1,
            Init::He { fan_in: fw },
        )?;
        score_nodes.push(b.g.sigmoid(fc2));
    }

    Ok(BuildOut {
        graph: b.g,
        mask_nodes,
        score_nodes,
        fused_node,
        sem_proj_node,
        param_defs: b.defs,
        norm_sites: b.norm_sites,
    })
}
