use std::collections::BTreeMap;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::diffcore::{bilinear_resize, Bindings, Graph, NodeId, Shape, Tensor};
use crate::error::{Error, Result};
use crate::mask::BinaryMask;

use super::arch::{self, Init, Mode, NormSite, ParamDef, NORM_EPS};
use super::{rank3_to_bchw, ModalityBundle, ModelConfig, MultiMaskOutput};

/// Input to a forward pass, already at the model's input resolution.
#[derive(Clone, Debug)]
pub enum NetInput {
    /// RGB image, rank-3 (C,H,W).
    Image(Tensor),
    Bundle(ModalityBundle),
}

/// The multi-mask segmentation network plus its parameter state.
///
/// Parameters live in a name-keyed map bound to the graphs at call time, so
/// forward passes never mutate the model and may run concurrently; updates
/// (`params_mut`, `update_norm_stats`) require exclusive access.
pub struct MultiMaskNet {
    cfg: ModelConfig,
    train_graph: Graph,
    eval_graph: Graph,
    train_mask_nodes: Vec<NodeId>,
    train_score_nodes: Vec<NodeId>,
    eval_mask_nodes: Vec<NodeId>,
    eval_score_nodes: Vec<NodeId>,
    eval_fused_node: Option<NodeId>,
    eval_sem_proj_node: Option<NodeId>,
    norm_sites: Vec<NormSite>,
    params: BTreeMap<String, Tensor>,
    stats: BTreeMap<String, Tensor>,
    param_names: Vec<String>,
}

impl MultiMaskNet {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        let train = arch::build(&cfg, Mode::Train)?;
        let eval = arch::build(&cfg, Mode::Eval)?;
        let params = init_params(&train.param_defs, cfg.seed);
        let mut stats = BTreeMap::new();
        for site in &train.norm_sites {
            stats.insert(
                format!("{}.running_mean", site.name),
                Tensor::zeros(Shape::new(&[site.channels])),
            );
            stats.insert(
                format!("{}.running_var", site.name),
                Tensor::full(Shape::new(&[site.channels]), 1.0),
            );
        }
        let param_names = train.param_defs.iter().map(|d| d.name.clone()).collect();
        Ok(MultiMaskNet {
            cfg,
            train_graph: train.graph,
            eval_graph: eval.graph,
            train_mask_nodes: train.mask_nodes,
            train_score_nodes: train.score_nodes,
            eval_mask_nodes: eval.mask_nodes,
            eval_score_nodes: eval.score_nodes,
            eval_fused_node: eval.fused_node,
            eval_sem_proj_node: eval.sem_proj_node,
            norm_sites: train.norm_sites,
            params,
            stats,
            param_names,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut BTreeMap<String, Tensor> {
        &mut self.params
    }

    pub fn stats(&self) -> &BTreeMap<String, Tensor> {
        &self.stats
    }

    pub fn set_state(&mut self, params: BTreeMap<String, Tensor>, stats: BTreeMap<String, Tensor>) -> Result<()> {
        for name in &self.param_names {
            if !params.contains_key(name) {
                return Err(Error::Checkpoint(format!("missing parameter `{name}`")));
            }
        }
        self.params = params;
        self.stats = stats;
        Ok(())
    }

    /// Ordered parameter names; the optimizer iterates these.
    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn parameter_count(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    // ---- forward -----------------------------------------------------------

    fn bind_input(&self, bindings: &mut Bindings, input: &NetInput) -> Result<()> {
        match input {
            NetInput::Image(img) => {
                if self.cfg.modal.is_some() {
                    return Err(Error::Config("labeler model expects a modality bundle".into()));
                }
                bindings.insert("x".into(), rank3_to_bchw(img)?);
            }
            NetInput::Bundle(bundle) => {
                let modal = self
                    .cfg
                    .modal
                    .as_ref()
                    .ok_or_else(|| Error::Config("image model cannot take a modality bundle".into()))?;
                bundle.matches(modal)?;
                bindings.insert("sem".into(), rank3_to_bchw(&bundle.semantic)?);
                bindings.insert("gen".into(), rank3_to_bchw(&bundle.generative)?);
                bindings.insert("con".into(), rank3_to_bchw(&bundle.concept)?);
            }
        }
        Ok(())
    }

    /// Bindings for the evaluation graph: parameters plus affine folds of the
    /// running normalization statistics.
    pub fn eval_bindings(&self, input: &NetInput) -> Result<Bindings> {
        let mut b: Bindings = self.params.clone();
        for site in &self.norm_sites {
            let mean = &self.stats[&format!("{}.running_mean", site.name)];
            let var = &self.stats[&format!("{}.running_var", site.name)];
            let gamma = &self.params[&format!("{}.gamma", site.name)];
            let beta = &self.params[&format!("{}.beta", site.name)];
            let mut scale = Vec::with_capacity(site.channels);
            let mut shift = Vec::with_capacity(site.channels);
            for c in 0..site.channels {
                let inv = 1.0 / (var.data()[c] + NORM_EPS).sqrt();
                let s = gamma.data()[c] * inv;
                scale.push(s);
                shift.push(beta.data()[c] - mean.data()[c] * s);
            }
            b.insert(
                format!("{}.eval_scale", site.name),
                Tensor::from_vec(Shape::new(&[site.channels]), scale)?,
            );
            b.insert(
                format!("{}.eval_shift", site.name),
                Tensor::from_vec(Shape::new(&[site.channels]), shift)?,
            );
        }
        self.bind_input(&mut b, input)?;
        Ok(b)
    }

    pub fn train_bindings(&self, input: &NetInput) -> Result<Bindings> {
        let mut b: Bindings = self.params.clone();
        self.bind_input(&mut b, input)?;
        Ok(b)
    }

    /// Evaluation-mode forward pass.
    pub fn forward(&self, input: &NetInput) -> Result<MultiMaskOutput> {
        let bindings = self.eval_bindings(input)?;
        let values = self.eval_graph.eval_all(&bindings)?;
        Ok(self.collect_output(&values, &self.eval_mask_nodes, &self.eval_score_nodes))
    }

    /// Training-mode forward pass (batch statistics in the norm layers).
    pub fn forward_train(&self, input: &NetInput) -> Result<MultiMaskOutput> {
        let bindings = self.train_bindings(input)?;
        let values = self.train_graph.eval_all(&bindings)?;
        Ok(self.collect_output(&values, &self.train_mask_nodes, &self.train_score_nodes))
    }

    pub(crate) fn collect_output(
        &self,
        values: &[Tensor],
        mask_nodes: &[NodeId],
        score_nodes: &[NodeId],
    ) -> MultiMaskOutput {
        let masks = mask_nodes
            .iter()
            .map(|id| {
                let v = &values[id.idx()];
                let (_, _, h, w) = v.shape().as_bchw().expect("mask node rank 4");
                v.reshaped(Shape::new(&[h, w])).expect("mask reshape")
            })
            .collect();
        let scores = score_nodes
            .iter()
            .map(|id| values[id.idx()].item())
            .collect();
        MultiMaskOutput { masks, scores }
    }

    pub(crate) fn train_graph(&self) -> &Graph {
        &self.train_graph
    }

    pub(crate) fn train_nodes(&self) -> (&[NodeId], &[NodeId]) {
        (&self.train_mask_nodes, &self.train_score_nodes)
    }

    pub(crate) fn norm_sites(&self) -> &[NormSite] {
        &self.norm_sites
    }

    /// Momentum update of the running normalization statistics. Each inner
    /// vector holds one sample's norm-layer input tensors, aligned with
    /// [`Self::norm_sites`]; samples are folded in index order, so the
    /// result is independent of evaluation order.
    pub(crate) fn update_norm_stats_from(&mut self, per_sample_inputs: &[Vec<Tensor>], momentum: f64) {
        if self.norm_sites.is_empty() || per_sample_inputs.is_empty() {
            return;
        }
        for (si, site) in self.norm_sites.iter().enumerate() {
            let c = site.channels;
            let mut mean_acc = vec![0.0; c];
            let mut var_acc = vec![0.0; c];
            for inputs in per_sample_inputs {
                let (m, v) = channel_stats_pub(&inputs[si]);
                for i in 0..c {
                    mean_acc[i] += m[i];
                    var_acc[i] += v[i];
                }
            }
            let n = per_sample_inputs.len() as f64;
            let rm = self
                .stats
                .get_mut(&format!("{}.running_mean", site.name))
                .expect("running mean");
            for (slot, m) in rm.data_mut().iter_mut().zip(&mean_acc) {
                *slot = (1.0 - momentum) * *slot + momentum * (m / n);
            }
            let rv = self
                .stats
                .get_mut(&format!("{}.running_var", site.name))
                .expect("running var");
            for (slot, v) in rv.data_mut().iter_mut().zip(&var_acc) {
                *slot = (1.0 - momentum) * *slot + momentum * (v / n);
            }
        }
    }

    // ---- prediction helpers -------------------------------------------------

    /// Resize an arbitrary-resolution RGB raster to the model input and run
    /// the evaluation forward pass.
    pub fn predict_image(&self, raster: &Tensor) -> Result<MultiMaskOutput> {
        let dims = raster.shape().dims();
        let (h, w) = (dims[1], dims[2]);
        let img = if (h, w) == (self.cfg.input_h, self.cfg.input_w) {
            raster.clone()
        } else {
            bilinear_resize(raster, self.cfg.input_h, self.cfg.input_w)
        };
        self.forward(&NetInput::Image(img))
    }

    /// Score-selected branch, binarized at 0.5.
    pub fn predict_mask_selected(&self, raster: &Tensor) -> Result<BinaryMask> {
        let out = self.predict_image(raster)?;
        let sel = out.selected_branch();
        Ok(BinaryMask::from_tensor(&out.masks[sel], 0.5))
    }

    /// Fusion block output for a bundle (labeler role).
    pub fn fuse_modalities(&self, bundle: &ModalityBundle) -> Result<Tensor> {
        let node = self
            .eval_fused_node
            .ok_or_else(|| Error::Config("fuse_modalities requires the labeler role".into()))?;
        let bindings = self.eval_bindings(&NetInput::Bundle(bundle.clone()))?;
        self.eval_graph.eval(node, &bindings)
    }

    /// Projected semantic branch alone (the residual identity path).
    pub fn semantic_projection(&self, bundle: &ModalityBundle) -> Result<Tensor> {
        let node = self
            .eval_sem_proj_node
            .ok_or_else(|| Error::Config("semantic_projection requires the labeler role".into()))?;
        let bindings = self.eval_bindings(&NetInput::Bundle(bundle.clone()))?;
        self.eval_graph.eval(node, &bindings)
    }
}

fn init_params(defs: &[ParamDef], seed: u64) -> BTreeMap<String, Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = BTreeMap::new();
    for def in defs {
        let t = match def.init {
            Init::Zero => Tensor::zeros(def.shape.clone()),
            Init::One => Tensor::full(def.shape.clone(), 1.0),
            Init::He { fan_in } => {
                let std = (2.0 / fan_in as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("normal dist");
                let data = (0..def.shape.numel())
                    .map(|_| normal.sample(&mut rng))
                    .collect();
                Tensor::from_vec(def.shape.clone(), data).expect("init shape")
            }
        };
        params.insert(def.name.clone(), t);
    }
    params
}

/// Per-channel mean/variance over (B,H,W); mirrors the Normalize node.
fn channel_stats_pub(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (bs, c, h, w) = x.shape().as_bchw().expect("stats input");
    let n = (bs * h * w) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for bi in 0..bs {
        for ci in 0..c {
            let plane = &x.data()[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
            mean[ci] += plane.iter().sum::<f64>();
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    for bi in 0..bs {
        for ci in 0..c {
            let plane = &x.data()[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
            var[ci] += plane.iter().map(|&v| (v - mean[ci]) * (v - mean[ci])).sum::<f64>();
        }
    }
    for v in var.iter_mut() {
        *v /= n;
    }
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::ModalInputConfig;
    use rand::Rng;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            input_h: 16,
            input_w: 16,
            in_channels: 3,
            encoder_widths: vec![4, 8],
            fusion_width: 8,
            heads: 3,
            seed: 9,
            modal: None,
        }
    }

    fn rand_image(h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = crate::util::rng_for(seed, "img", 0);
        Tensor::from_vec(
            Shape::new(&[3, h, w]),
            (0..3 * h * w).map(|_| rng.gen_range(0.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn forward_shape_contract() {
        let net = MultiMaskNet::new(tiny_cfg()).unwrap();
        let out = net.forward(&NetInput::Image(rand_image(16, 16, 1))).unwrap();
        assert_eq!(out.masks.len(), 3);
        assert_eq!(out.scores.len(), 3);
        for m in &out.masks {
            assert_eq!(m.shape().dims(), &[16, 16]);
        }
        out.validate(3).unwrap();
    }

    #[test]
    fn default_config_forward_shape() {
        let net = MultiMaskNet::new(ModelConfig::default()).unwrap();
        let out = net.forward(&NetInput::Image(rand_image(64, 64, 2))).unwrap();
        assert_eq!(out.masks.len(), 3);
        assert_eq!(out.masks[0].shape().dims(), &[64, 64]);
        out.validate(3).unwrap();
    }

    #[test]
    fn zero_weights_give_constant_sigmoid_of_bias() {
        let mut net = MultiMaskNet::new(tiny_cfg()).unwrap();
        for (name, t) in net.params.iter_mut() {
            if name.ends_with(".w") {
                *t = Tensor::zeros(t.shape().clone());
            }
        }
        // plant a bias on head 1's final conv
        let bias = net.params.get_mut("head.mask1.c2.b").unwrap();
        bias.data_mut()[0] = 0.8;
        let out = net.forward(&NetInput::Image(rand_image(16, 16, 3))).unwrap();
        let expect = crate::diffcore::sigmoid(0.8);
        for &v in out.masks[1].data() {
            assert!((v - expect).abs() < 1e-12);
        }
        let first = out.masks[0].data()[0];
        for &v in out.masks[0].data() {
            assert_eq!(v, first); // spatially constant
        }
    }

    #[test]
    fn same_seed_same_params() {
        let a = MultiMaskNet::new(tiny_cfg()).unwrap();
        let b = MultiMaskNet::new(tiny_cfg()).unwrap();
        assert_eq!(a.params, b.params);
        let mut cfg = tiny_cfg();
        cfg.seed = 10;
        let c = MultiMaskNet::new(cfg).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn forward_deterministic() {
        let net = MultiMaskNet::new(tiny_cfg()).unwrap();
        let img = rand_image(16, 16, 4);
        let a = net.forward(&NetInput::Image(img.clone())).unwrap();
        let b = net.forward(&NetInput::Image(img)).unwrap();
        assert_eq!(a, b);
    }

    fn labeler_cfg() -> ModelConfig {
        ModelConfig::labeler(
            16,
            &[4, 8],
            8,
            ModalInputConfig {
                semantic_channels: 3,
                generative_channels: 2,
                concept_channels: 2,
                width: 6,
            },
            7,
        )
    }

    fn rand_bundle(seed: u64) -> ModalityBundle {
        let mut rng = crate::util::rng_for(seed, "bundle", 0);
        let mk = |c: usize, h: usize, w: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            Tensor::from_vec(
                Shape::new(&[c, h, w]),
                (0..c * h * w).map(|_| rng.gen_range(-0.5..1.5)).collect(),
            )
            .unwrap()
        };
        ModalityBundle {
            semantic: mk(3, 16, 16, &mut rng),
            generative: mk(2, 4, 4, &mut rng),
            concept: mk(2, 16, 16, &mut rng),
        }
    }

    #[test]
    fn zero_init_fusion_is_residual_identity() {
        let net = MultiMaskNet::new(labeler_cfg()).unwrap();
        let bundle = rand_bundle(5);
        let fused = net.fuse_modalities(&bundle).unwrap();
        let sem = net.semantic_projection(&bundle).unwrap();
        assert_eq!(fused, sem, "zero-initialized fusion path must reduce to the semantic projection");
    }

    #[test]
    fn fused_output_resolution_follows_semantic_branch() {
        let net = MultiMaskNet::new(labeler_cfg()).unwrap();
        let bundle = rand_bundle(6);
        let fused = net.fuse_modalities(&bundle).unwrap();
        assert_eq!(fused.shape().dims(), &[1, 6, 16, 16]);
        let out = net.forward(&NetInput::Bundle(bundle)).unwrap();
        assert_eq!(out.masks.len(), 1);
        assert_eq!(out.masks[0].shape().dims(), &[16, 16]);
    }

    #[test]
    fn bundle_channel_mismatch_is_rejected() {
        let net = MultiMaskNet::new(labeler_cfg()).unwrap();
        let mut bundle = rand_bundle(7);
        bundle.concept = Tensor::zeros(Shape::new(&[3, 16, 16]));
        assert!(net.forward(&NetInput::Bundle(bundle)).is_err());
    }
}
