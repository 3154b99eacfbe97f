//! Two-stream attention-branch classifier for damaging-collision prediction.
//!
//! Each image stream runs `backbone_pre → attention branch → (1 + a) ⊙ f →
//! backbone_post` and yields a feature vector `o_k`. The full model fuses the
//! RGB and depth vectors with learned softmax weights, appends the heuristic
//! input and predicts DC/NDC (or five collision types) with a small MLP.
//!
//! The attention conv reads the batch-normalized class-conv output of the
//! first head (`Any` in collision-type mode), which keeps the single-head
//! model an exact sub-model of the five-head one.

mod config;
mod layers;
mod loss;

pub use config::{InputMode, ModelConfig, Variant, HEAD_NAMES, MODEL_CONFIG_VERSION};
pub use layers::{ConvBnRelu, Mlp, PreActBottleneck};
pub use loss::{one_hot, total_loss, LossTerms};

use gradcore::{BatchNorm2d, Conv2d, Dense, Graph, Mode, ParamStore, Tensor, Var};

use crate::error::{Error, Result};

/// Width of the heuristic input (target w, h, l and camera height).
pub const HEURISTIC_DIM: usize = 4;
/// Upper bound for every heuristic field, in meters.
pub const HEURISTIC_MAX: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Rgb,
    Depth,
    /// Early-fused 6-channel input.
    Rgbd,
}

impl Stream {
    pub fn name(self) -> &'static str {
        match self {
            Stream::Rgb => "rgb",
            Stream::Depth => "depth",
            Stream::Rgbd => "rgbd",
        }
    }
}

/// Heuristic input of one sample: target width, height, length and camera
/// height, all in meters.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HeuristicInput {
    pub width: f64,
    pub height: f64,
    pub length: f64,
    pub camera_height: f64,
}

impl HeuristicInput {
    pub fn as_array(&self) -> [f64; HEURISTIC_DIM] {
        [self.width, self.height, self.length, self.camera_height]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in ["width", "height", "length", "camera_height"].iter().zip(self.as_array()) {
            if !(v > 0.0 && v < HEURISTIC_MAX) {
                return Err(Error::Input(format!("heuristic {name} = {v} outside (0, {HEURISTIC_MAX}) m")));
            }
        }
        Ok(())
    }
}

/// Network-ready minibatch. Images are `[N, 3, side, side]` in `[-0.5, 0.5]`.
#[derive(Clone, Debug)]
pub struct Batch {
    pub rgb: Tensor,
    /// Surface-normal colorized depth, same layout as `rgb`.
    pub depth: Tensor,
    /// `[N, 4]`, see [`HeuristicInput`].
    pub heuristic: Tensor,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rgb.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct AttentionBranch {
    blocks: Vec<PreActBottleneck>,
    class_convs: Vec<(Conv2d, BatchNorm2d)>,
    attention_conv: Conv2d,
}

/// Graph handles produced by one attention branch.
#[derive(Clone, Debug)]
pub struct BranchVars {
    /// `a_k`, `[N, 1, S, S]`, elementwise in `[0, 1]`.
    pub attention: Var,
    /// One `[N, 2]` logit matrix per head.
    pub logits: Vec<Var>,
}

impl AttentionBranch {
    fn new(store: &mut ParamStore, name: &str, cfg: &ModelConfig) -> Result<Self> {
        let c = cfg.feature_channels;
        let blocks = (0..cfg.branch_blocks)
            .map(|i| PreActBottleneck::new(store, &format!("{name}.res{i}"), c, cfg.seed))
            .collect::<Result<Vec<_>>>()?;
        let class_convs = (0..cfg.heads)
            .map(|h| {
                let conv = Conv2d::new(store, &format!("{name}.cls{h}"), c, 2, 1, 1, 0, false, cfg.seed)?;
                let bn = BatchNorm2d::new(store, &format!("{name}.cls{h}.bn"), 2)?;
                Ok((conv, bn))
            })
            .collect::<Result<Vec<_>>>()?;
        let attention_conv = Conv2d::new(store, &format!("{name}.att"), 2, 1, 1, 1, 0, true, cfg.seed)?;
        Ok(Self { blocks, class_convs, attention_conv })
    }

    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, f: Var, mode: Mode) -> Result<BranchVars> {
        let mut x = f;
        for b in &self.blocks {
            x = b.forward(g, store, x, mode)?;
        }
        let mut logits = Vec::with_capacity(self.class_convs.len());
        let mut first_class_map = None;
        for (conv, bn) in &self.class_convs {
            let c = conv.forward(g, store, x)?;
            let c = bn.forward(g, store, c, mode)?;
            first_class_map.get_or_insert(c);
            logits.push(g.global_avg_pool(c)?);
        }
        let c0 = first_class_map.expect("at least one head");
        let a = self.attention_conv.forward(g, store, c0)?;
        let a = g.relu(a);
        let attention = g.sigmoid(a);
        Ok(BranchVars { attention, logits })
    }
}

#[derive(Clone, Debug)]
pub struct BackbonePre {
    layers: Vec<ConvBnRelu>,
}

impl BackbonePre {
    fn new(store: &mut ParamStore, name: &str, in_ch: usize, cfg: &ModelConfig) -> Result<Self> {
        let mut layers = Vec::new();
        let mut prev = in_ch;
        for (i, &w) in cfg.pre_widths.iter().enumerate() {
            layers.push(ConvBnRelu::new(store, &format!("{name}.l{i}"), prev, w, 2, cfg.seed)?);
            prev = w;
        }
        let i = cfg.pre_widths.len();
        layers.push(ConvBnRelu::new(store, &format!("{name}.l{i}"), prev, cfg.feature_channels, 1, cfg.seed)?);
        Ok(Self { layers })
    }

    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let mut y = x;
        for l in &self.layers {
            y = l.forward(g, store, y, mode)?;
        }
        Ok(y)
    }
}

#[derive(Clone, Debug)]
pub struct BackbonePost {
    down: ConvBnRelu,
    conv: ConvBnRelu,
    extra: Vec<PreActBottleneck>,
    fc: Dense,
}

impl BackbonePost {
    fn new(store: &mut ParamStore, name: &str, cfg: &ModelConfig) -> Result<Self> {
        let p = cfg.post_channels;
        let extra_blocks = if cfg.variant == Variant::Type1 { 2 } else { 0 };
        Ok(Self {
            down: ConvBnRelu::new(store, &format!("{name}.l0"), cfg.feature_channels, p, 2, cfg.seed)?,
            conv: ConvBnRelu::new(store, &format!("{name}.l1"), p, p, 1, cfg.seed)?,
            extra: (0..extra_blocks)
                .map(|i| PreActBottleneck::new(store, &format!("{name}.res{i}"), p, cfg.seed))
                .collect::<Result<Vec<_>>>()?,
            fc: Dense::new(store, &format!("{name}.fc"), p, cfg.feature_dim, true, cfg.seed)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, w: Var, mode: Mode) -> Result<Var> {
        let mut y = self.down.forward(g, store, w, mode)?;
        y = self.conv.forward(g, store, y, mode)?;
        for b in &self.extra {
            y = b.forward(g, store, y, mode)?;
        }
        let pooled = g.global_avg_pool(y)?;
        Ok(self.fc.forward(g, store, pooled)?)
    }
}

/// Learnable parameters of the self-attention fusion,
/// `e_k = Vᵀ tanh(W_k o_k + b_k)`.
#[derive(Clone, Debug)]
pub struct FusionParams {
    pub rgb: Dense,
    pub depth: Dense,
    pub v: Dense,
}

pub const FUSION_PARAM_NAMES: [&str; 5] =
    ["fusion.w_r.weight", "fusion.w_r.bias", "fusion.w_d.weight", "fusion.w_d.bias", "fusion.v.weight"];

impl FusionParams {
    fn new(store: &mut ParamStore, dim: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            rgb: Dense::new(store, "fusion.w_r", dim, dim, true, seed)?,
            depth: Dense::new(store, "fusion.w_d", dim, dim, true, seed)?,
            v: Dense::new(store, "fusion.v", dim, 1, false, seed)?,
        })
    }
}

/// Fusion scores and result of [`self_attention_fuse`].
#[derive(Clone, Copy, Debug)]
pub struct FusionVars {
    /// `[N, 2]` raw scores `(e_r, e_d)`.
    pub scores: Var,
    /// `[N, 2]` softmax weights `(α_r, α_d)`.
    pub weights: Var,
    /// `[N, D]` fused vector `m`.
    pub fused: Var,
}

/// `m = α_r o_r + α_d o_d` with `(α_r, α_d) = softmax(e_r, e_d)`.
pub fn self_attention_fuse(g: &mut Graph, store: &ParamStore, params: &FusionParams, o_r: Var, o_d: Var) -> Result<FusionVars> {
    let mut score = |layer: &Dense, o: Var| -> Result<Var> {
        let h = layer.forward(g, store, o)?;
        let h = g.tanh(h);
        Ok(params.v.forward(g, store, h)?)
    };
    let e_r = score(&params.rgb, o_r)?;
    let e_d = score(&params.depth, o_d)?;
    let scores = g.concat(&[e_r, e_d])?;
    let weights = g.softmax(scores)?;
    let fused = g.mix(weights, &[o_r, o_d])?;
    Ok(FusionVars { scores, weights, fused })
}

/// `w_k = (1 + a_k) ⊙ f_k`, the attention map broadcast over channels.
pub fn apply_attention(g: &mut Graph, f: Var, a: Var) -> Result<Var> {
    Ok(g.modulate(f, a)?)
}

#[derive(Clone, Debug)]
enum Fusion {
    SelfAttention(FusionParams),
    Concat,
    Single,
}

#[derive(Clone, Debug)]
struct StreamNet {
    stream: Stream,
    pre: BackbonePre,
    branch: Option<AttentionBranch>,
    post: BackbonePost,
}

#[derive(Clone, Debug)]
pub struct Head {
    hidden: Mlp,
    outputs: Vec<Dense>,
}

impl Head {
    fn new(store: &mut ParamStore, cfg: &ModelConfig) -> Result<Self> {
        let mut widths = vec![cfg.head_input_width()];
        widths.extend(&cfg.head_widths);
        let last = *widths.last().expect("non-empty");
        Ok(Self {
            hidden: Mlp::new(store, "head", &widths, cfg.seed)?,
            outputs: (0..cfg.heads)
                .map(|h| Dense::new(store, &format!("head.out{h}"), last, 2, true, cfg.seed))
                .collect::<gradcore::Result<Vec<_>>>()?,
        })
    }

    /// Per-head `[N, 2]` logits from `concat(m, x_h)`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, m: Var, x_h: Var) -> Result<Vec<Var>> {
        let x = g.concat(&[m, x_h])?;
        let hidden = self.hidden.forward_hidden(g, store, x)?;
        self.outputs.iter().map(|o| o.forward(g, store, hidden).map_err(Error::from)).collect()
    }
}

/// Graph handles of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub logits: Vec<Var>,
    pub probs: Vec<Var>,
    pub branches: Vec<(Stream, BranchVars)>,
    pub features: Vec<(Stream, Var)>,
    pub fusion: Option<FusionVars>,
    pub fused: Var,
}

/// Materialized result of a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `p(y)` per head, `[N, 2]`, column 0 = DC.
    pub probs: Vec<Tensor>,
    pub branches: Vec<BranchOutput>,
    /// `[N, 2]` fusion weights `(α_r, α_d)` for the full variant.
    pub fusion_weights: Option<Tensor>,
    /// `[N, D]` vector `m` fed to the head (before `x_h` is appended).
    pub fused: Tensor,
}

#[derive(Clone, Debug)]
pub struct BranchOutput {
    pub stream: Stream,
    /// `[N, 1, S, S]`.
    pub attention: Tensor,
    /// Per head `[N, 2]`.
    pub logits: Vec<Tensor>,
}

impl ForwardOutput {
    pub fn from_vars(g: &Graph, v: &ForwardVars) -> Self {
        Self {
            probs: v.probs.iter().map(|p| g.value(*p).clone()).collect(),
            branches: v
                .branches
                .iter()
                .map(|(s, b)| BranchOutput {
                    stream: *s,
                    attention: g.value(b.attention).clone(),
                    logits: b.logits.iter().map(|l| g.value(*l).clone()).collect(),
                })
                .collect(),
            fusion_weights: v.fusion.map(|f| g.value(f.weights).clone()),
            fused: g.value(v.fused).clone(),
        }
    }

    pub fn branch(&self, stream: Stream) -> Option<&BranchOutput> {
        self.branches.iter().find(|b| b.stream == stream)
    }
}

/// A model variant together with its parameters.
#[derive(Clone, Debug)]
pub struct PonNet {
    config: ModelConfig,
    pub store: ParamStore,
    streams: Vec<StreamNet>,
    fusion: Fusion,
    head: Head,
}

impl PonNet {
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let streams: Vec<Stream> = match (config.variant.is_dual_stream(), config.input_mode) {
            (true, _) => vec![Stream::Rgb, Stream::Depth],
            (false, InputMode::Rgb) => vec![Stream::Rgb],
            (false, InputMode::Depth) => vec![Stream::Depth],
            (false, InputMode::Rgbd) => vec![Stream::Rgbd],
        };
        let in_ch = config.input_channels();
        let streams = streams
            .into_iter()
            .map(|s| {
                let name = s.name();
                Ok(StreamNet {
                    stream: s,
                    pre: BackbonePre::new(&mut store, &format!("{name}.pre"), in_ch, &config)?,
                    branch: if config.variant.has_attention_branch() {
                        Some(AttentionBranch::new(&mut store, &format!("{name}.branch"), &config)?)
                    } else {
                        None
                    },
                    post: BackbonePost::new(&mut store, &format!("{name}.post"), &config)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let fusion = match config.variant {
            Variant::Full => Fusion::SelfAttention(FusionParams::new(&mut store, config.feature_dim, config.seed)?),
            Variant::Type4 => Fusion::Concat,
            _ => Fusion::Single,
        };
        let head = Head::new(&mut store, &config)?;
        Ok(Self { config, store, streams, fusion, head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn fusion_params(&self) -> Option<&FusionParams> {
        match &self.fusion {
            Fusion::SelfAttention(p) => Some(p),
            _ => None,
        }
    }

    pub fn streams(&self) -> Vec<Stream> {
        self.streams.iter().map(|s| s.stream).collect()
    }

    pub fn parameter_names(&self) -> Vec<String> {
        self.store.names().map(str::to_string).collect()
    }

    fn validate_batch(&self, batch: &Batch) -> Result<()> {
        let side = self.config.input_side;
        let n = batch.len();
        for (name, t) in [("rgb", &batch.rgb), ("depth", &batch.depth)] {
            let s = t.shape();
            if s.len() != 4 || s[1] != 3 {
                return Err(Error::Input(format!("{name} input must be [N,3,{side},{side}] (colorized for depth), got {s:?}")));
            }
            if s[0] != n || s[2] != side || s[3] != side {
                return Err(Error::Input(format!("{name} input {s:?} does not match batch {n} at side {side}")));
            }
        }
        if batch.heuristic.shape() != [n, HEURISTIC_DIM] {
            return Err(Error::Input(format!("heuristic input must be [{n},{HEURISTIC_DIM}], got {:?}", batch.heuristic.shape())));
        }
        for row in batch.heuristic.data().chunks(HEURISTIC_DIM) {
            HeuristicInput { width: row[0], height: row[1], length: row[2], camera_height: row[3] }.validate()?;
        }
        Ok(())
    }

    fn stream_input(&self, batch: &Batch, stream: Stream) -> Result<Tensor> {
        Ok(match stream {
            Stream::Rgb => batch.rgb.clone(),
            Stream::Depth => batch.depth.clone(),
            Stream::Rgbd => concat_channels(&batch.rgb, &batch.depth)?,
        })
    }

    /// Record the full forward pass on `g`. Train mode normalizes with batch
    /// statistics and updates running estimates; eval mode uses the frozen
    /// estimates.
    pub fn forward(&mut self, g: &mut Graph, batch: &Batch, mode: Mode) -> Result<ForwardVars> {
        let mut store = std::mem::take(&mut self.store);
        let out = self.forward_with(g, &mut store, batch, mode);
        self.store = store;
        out
    }

    /// [`PonNet::forward`] against an external parameter store with the same
    /// layout as `self.store`.
    pub fn forward_with(&self, g: &mut Graph, store: &mut ParamStore, batch: &Batch, mode: Mode) -> Result<ForwardVars> {
        self.validate_batch(batch)?;
        let mut features = Vec::with_capacity(self.streams.len());
        let mut branches = Vec::new();
        for s in &self.streams {
            let x = g.constant(self.stream_input(batch, s.stream)?);
            let f = s.pre.forward(g, store, x, mode)?;
            let w = match &s.branch {
                Some(b) => {
                    let bv = b.forward(g, store, f, mode)?;
                    let w = apply_attention(g, f, bv.attention)?;
                    branches.push((s.stream, bv));
                    w
                }
                None => f,
            };
            let o = s.post.forward(g, store, w, mode)?;
            features.push((s.stream, o));
        }
        let (fused, fusion) = match &self.fusion {
            Fusion::SelfAttention(p) => {
                let fv = self_attention_fuse(g, store, p, features[0].1, features[1].1)?;
                (fv.fused, Some(fv))
            }
            Fusion::Concat => (g.concat(&[features[0].1, features[1].1])?, None),
            Fusion::Single => (features[0].1, None),
        };
        let x_h = g.constant(batch.heuristic.clone());
        let logits = self.head.forward(g, store, fused, x_h)?;
        let probs = logits.iter().map(|l| g.softmax(*l).map_err(Error::from)).collect::<Result<Vec<_>>>()?;
        Ok(ForwardVars { logits, probs, branches, features, fusion, fused })
    }

    /// Eval-mode forward returning plain tensors.
    pub fn predict(&mut self, batch: &Batch) -> Result<ForwardOutput> {
        let mut g = Graph::new();
        let v = self.forward(&mut g, batch, Mode::Eval)?;
        Ok(ForwardOutput::from_vars(&g, &v))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        gradcore::checkpoint::save(&self.store, path).map_err(|e| match e {
            gradcore::GradError::Io(io) => Error::io(path, io),
            other => other.into(),
        })
    }

    pub fn load(config: ModelConfig, path: &std::path::Path) -> Result<Self> {
        let mut m = Self::build(config)?;
        gradcore::checkpoint::load_into(&mut m.store, path).map_err(|e| match e {
            gradcore::GradError::Io(io) => Error::io(path, io),
            other => other.into(),
        })?;
        Ok(m)
    }
}

/// Channel-wise concatenation of two `[N, C, H, W]` tensors.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 4 || sb.len() != 4 || sa[0] != sb[0] || sa[2..] != sb[2..] {
        return Err(Error::Input(format!("cannot concatenate {sa:?} and {sb:?} channel-wise")));
    }
    let (n, hw) = (sa[0], sa[2] * sa[3]);
    let (ca, cb) = (sa[1], sb[1]);
    let mut out = Vec::with_capacity(a.numel() + b.numel());
    for i in 0..n {
        out.extend_from_slice(&a.data()[i * ca * hw..(i + 1) * ca * hw]);
        out.extend_from_slice(&b.data()[i * cb * hw..(i + 1) * cb * hw]);
    }
    Ok(Tensor::new(vec![n, ca + cb, sa[2], sa[3]], out)?)
}
