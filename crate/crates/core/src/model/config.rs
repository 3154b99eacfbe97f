use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_CONFIG_VERSION: u32 = 1;

/// Collision-type heads in multi-head mode, in output order.
pub const HEAD_NAMES: [&str; 5] = ["Any", "AO", "TO", "OO", "OD"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Backbone only, two extra residual blocks after the attention point.
    Type1,
    /// Backbone only.
    Type2,
    /// One attention branch on a single (possibly early-fused) input.
    Type3,
    /// Two attention branches, features concatenated before the head.
    Type4,
    /// Two attention branches with self-attention fusion.
    Full,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Type1, Variant::Type2, Variant::Type3, Variant::Type4, Variant::Full];

    pub fn has_attention_branch(self) -> bool {
        matches!(self, Variant::Type3 | Variant::Type4 | Variant::Full)
    }

    pub fn is_dual_stream(self) -> bool {
        matches!(self, Variant::Type4 | Variant::Full)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::Type1 => "type1",
            Variant::Type2 => "type2",
            Variant::Type3 => "type3",
            Variant::Type4 => "type4",
            Variant::Full => "full",
        };
        f.write_str(s)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "type1" => Ok(Variant::Type1),
            "type2" => Ok(Variant::Type2),
            "type3" => Ok(Variant::Type3),
            "type4" => Ok(Variant::Type4),
            "full" | "ponnet" => Ok(Variant::Full),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    Rgb,
    Depth,
    /// RGB and colorized depth concatenated channel-wise (6 channels) for
    /// single-stream variants; separate streams for dual-stream ones.
    Rgbd,
}

impl InputMode {
    pub const ALL: [InputMode; 3] = [InputMode::Rgb, InputMode::Depth, InputMode::Rgbd];
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputMode::Rgb => "RGB",
            InputMode::Depth => "D",
            InputMode::Rgbd => "RGBD",
        })
    }
}

impl FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rgb" => Ok(InputMode::Rgb),
            "d" | "depth" => Ok(InputMode::Depth),
            "rgbd" => Ok(InputMode::Rgbd),
            other => Err(Error::Config(format!("unknown input mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub version: u32,
    pub variant: Variant,
    pub input_mode: InputMode,
    /// Side length of the square network input.
    pub input_side: usize,
    /// Widths of the downsampling convolutions ahead of the feature conv.
    /// Each one halves the spatial size.
    pub pre_widths: Vec<usize>,
    /// Channels of the shared feature map `f_k`.
    pub feature_channels: usize,
    /// Residual blocks inside each attention branch.
    pub branch_blocks: usize,
    /// Channels of the post-attention conv stack.
    pub post_channels: usize,
    /// Width of `o_k` and of the fused vector `m`.
    pub feature_dim: usize,
    /// Hidden widths of the perception head; the output layer (2 per head)
    /// is appended.
    pub head_widths: Vec<usize>,
    pub lambda_r: f64,
    pub lambda_d: f64,
    pub lambda_p: f64,
    /// 1 for DC/NDC, 5 for Any/AO/TO/OO/OD.
    pub heads: usize,
    /// Per-head multipliers inside each loss term.
    pub head_weights: Vec<f64>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            version: MODEL_CONFIG_VERSION,
            variant: Variant::Full,
            input_mode: InputMode::Rgbd,
            input_side: 32,
            pre_widths: vec![8, 16],
            feature_channels: 32,
            branch_blocks: 3,
            post_channels: 64,
            feature_dim: 32,
            head_widths: vec![32, 8],
            lambda_r: 1.0,
            lambda_d: 1.0,
            lambda_p: 0.3,
            heads: 1,
            head_weights: vec![1.0],
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn with_variant(variant: Variant, input_mode: InputMode) -> Self {
        Self { variant, input_mode, ..Self::default() }
    }

    /// Five-head collision-type configuration with unit head weights.
    pub fn collision_types(mut self) -> Self {
        self.heads = HEAD_NAMES.len();
        self.head_weights = vec![1.0; HEAD_NAMES.len()];
        self
    }

    /// Reference-scale dimensions: 224 input, 14×14×256 feature map,
    /// 7×7×512 post features, 256-d fusion, head 256-16-2.
    pub fn full_scale() -> Self {
        Self {
            input_side: 224,
            pre_widths: vec![64, 64, 128, 128],
            feature_channels: 256,
            post_channels: 512,
            feature_dim: 256,
            head_widths: vec![256, 16],
            ..Self::default()
        }
    }

    /// Spatial side `S` of the feature map.
    pub fn feature_side(&self) -> usize {
        self.input_side >> self.pre_widths.len()
    }

    /// Spatial side after the stride-2 post conv.
    pub fn post_side(&self) -> usize {
        self.feature_side().div_ceil(2)
    }

    pub fn input_channels(&self) -> usize {
        match (self.variant.is_dual_stream(), self.input_mode) {
            (false, InputMode::Rgbd) => 6,
            _ => 3,
        }
    }

    pub fn head_input_width(&self) -> usize {
        let streams = if self.variant == Variant::Type4 { 2 } else { 1 };
        streams * self.feature_dim + crate::model::HEURISTIC_DIM
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.version != MODEL_CONFIG_VERSION {
            return err(format!("unsupported model config version {}", self.version));
        }
        if self.variant.is_dual_stream() && self.input_mode != InputMode::Rgbd {
            return err(format!("{} needs both modalities; input mode {} is not supported", self.variant, self.input_mode));
        }
        if self.input_side == 0 || !self.input_side.is_multiple_of(1 << self.pre_widths.len()) {
            return err(format!("input side {} must be divisible by {}", self.input_side, 1 << self.pre_widths.len()));
        }
        if self.feature_side() < 2 {
            return err("feature map must be at least 2x2".into());
        }
        if [self.feature_channels, self.post_channels, self.feature_dim]
            .iter()
            .chain(&self.pre_widths)
            .chain(&self.head_widths)
            .any(|&w| w == 0)
        {
            return err("all layer widths must be positive".into());
        }
        if self.variant.has_attention_branch() && self.feature_channels < 4 {
            return err("attention branches need at least 4 feature channels".into());
        }
        for (name, l) in [("lambda_r", self.lambda_r), ("lambda_d", self.lambda_d), ("lambda_p", self.lambda_p)] {
            if !(l >= 0.0 && l.is_finite()) {
                return err(format!("{name} must be a finite non-negative number"));
            }
        }
        if self.heads != 1 && self.heads != HEAD_NAMES.len() {
            return err(format!("heads must be 1 or {}", HEAD_NAMES.len()));
        }
        if self.head_weights.len() != self.heads || self.head_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return err("head_weights needs one non-negative weight per head".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
