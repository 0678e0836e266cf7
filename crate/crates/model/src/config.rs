//! Architecture sizes and the ablation switches.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, ModelError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    /// No attention: the decoder reads FeatureNet features of all inputs.
    None,
    /// Soft attention reweights the features the decoder reads.
    Vanilla,
    /// Attention-weighted features are compressed into a vector `z` that is
    /// concatenated to the dense-context features.
    Bottleneck,
}

impl AttentionMode {
    pub fn name(self) -> &'static str {
        match self {
            AttentionMode::None => "none",
            AttentionMode::Vanilla => "vanilla",
            AttentionMode::Bottleneck => "bottleneck",
        }
    }
}

impl FromStr for AttentionMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "vanilla" => Ok(Self::Vanilla),
            "bottleneck" => Ok(Self::Bottleneck),
            _ => invalid(format!("unknown attention mode {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VariantConfig {
    pub attention: AttentionMode,
    pub atrous: bool,
    pub positional_encoding: bool,
    pub object_branch: bool,
}

/// Named points of the ablation grid, in table order.
pub const VARIANT_NAMES: [&str; 6] = [
    "A",
    "B",
    "bottleneck-atrous",
    "bottleneck-pe",
    "bottleneck",
    "bottleneck+objects",
];

impl VariantConfig {
    pub fn full() -> Self {
        Self {
            attention: AttentionMode::Bottleneck,
            atrous: true,
            positional_encoding: true,
            object_branch: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::UnsupportedVariant(m.to_string()));
        match self.attention {
            AttentionMode::None if self.atrous || self.positional_encoding => {
                bad("attention=none cannot use atrous attention or positional encoding")
            }
            AttentionMode::Vanilla if self.positional_encoding => {
                bad("positional encoding only applies to the bottleneck")
            }
            AttentionMode::Bottleneck => Ok(()),
            _ if self.object_branch => bad("the object branch feeds the bottleneck"),
            _ => Ok(()),
        }
    }

    /// Looks up a named variant (see [`VARIANT_NAMES`]).
    pub fn named(name: &str) -> Result<Self> {
        let none = Self {
            attention: AttentionMode::None,
            atrous: false,
            positional_encoding: false,
            object_branch: false,
        };
        Ok(match name {
            "A" => none,
            "B" => Self {
                attention: AttentionMode::Vanilla,
                ..none
            },
            "bottleneck-atrous" => Self {
                atrous: false,
                ..Self::full()
            },
            "bottleneck-pe" => Self {
                positional_encoding: false,
                ..Self::full()
            },
            "bottleneck" => Self::full(),
            "bottleneck+objects" => Self {
                object_branch: true,
                ..Self::full()
            },
            _ => return invalid(format!("unknown variant {name:?}")),
        })
    }

    /// Parses either a variant name or a flag list such as
    /// `attention=bottleneck,atrous=on,pe=off,objects=off`.
    pub fn parse(spec: &str) -> Result<Self> {
        if !spec.contains('=') {
            return Self::named(spec);
        }
        let mut v = Self {
            attention: AttentionMode::None,
            atrous: false,
            positional_encoding: false,
            object_branch: false,
        };
        let mut seen_attention = false;
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let Some((key, value)) = part.split_once('=') else {
                return invalid(format!("expected key=value, got {part:?}"));
            };
            let flag = || match value {
                "on" | "true" | "1" => Ok(true),
                "off" | "false" | "0" => Ok(false),
                _ => invalid(format!("expected on/off for {key}, got {value:?}")),
            };
            match key {
                "attention" => {
                    v.attention = value.parse()?;
                    seen_attention = true;
                }
                "atrous" => v.atrous = flag()?,
                "pe" => v.positional_encoding = flag()?,
                "objects" => v.object_branch = flag()?,
                _ => return invalid(format!("unknown variant key {key:?}")),
            }
        }
        if !seen_attention {
            return invalid("variant flags must set attention=...");
        }
        v.validate()?;
        Ok(v)
    }

    /// Name of the matching grid point, if any.
    pub fn name(&self) -> Option<&'static str> {
        VARIANT_NAMES
            .into_iter()
            .find(|n| Self::named(n).is_ok_and(|v| v == *self))
    }

    pub fn has_attention(&self) -> bool {
        self.attention != AttentionMode::None
    }
}

impl fmt::Display for VariantConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let on = |b: bool| if b { "on" } else { "off" };
        write!(
            f,
            "attention={},atrous={},pe={},objects={}",
            self.attention.name(),
            on(self.atrous),
            on(self.positional_encoding),
            on(self.object_branch)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Mean,
    Sum,
}

/// Layer sizes. [`ModelConfig::desk`] is the default used everywhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input raster side in pixels.
    pub resolution: usize,
    /// Input raster side in meters.
    pub field_of_view_m: f64,
    /// Raster channel indices forming each encoder's input.
    pub input_channels: Vec<usize>,
    pub dense_channels: Vec<usize>,
    pub object_channels: Vec<usize>,
    /// Output widths of the stride-2 FeatureNet stages.
    pub stage_widths: Vec<usize>,
    /// Number of same-resolution 3x3 layers after the stages.
    pub tail_layers: usize,
    /// Feature depth `d` (the last stage width).
    pub feature_dim: usize,
    pub attention_hidden: usize,
    pub bottleneck_hidden: usize,
    pub bottleneck_dim: usize,
    pub positional_dim: usize,
    pub pooling: Pooling,
    pub decoder_hidden: usize,
    pub heading_hidden: usize,
    pub horizon: usize,
    pub norm_eps: f64,
}

impl ModelConfig {
    pub fn desk() -> Self {
        Self {
            resolution: 64,
            field_of_view_m: 16.0,
            input_channels: (0..17).collect(),
            dense_channels: vec![0, 3, 4, 5, 6],
            object_channels: (12..17).collect(),
            stage_widths: vec![16, 32],
            tail_layers: 3,
            feature_dim: 32,
            attention_hidden: 64,
            bottleneck_hidden: 64,
            bottleneck_dim: 32,
            positional_dim: 32,
            pooling: Pooling::Mean,
            decoder_hidden: 32,
            heading_hidden: 16,
            horizon: 10,
            norm_eps: 1e-5,
        }
    }

    /// Full-scale encoder: 400 px input, three stride-2 stages, `d = 128`.
    pub fn full_scale() -> Self {
        Self {
            resolution: 400,
            field_of_view_m: 80.0,
            stage_widths: vec![32, 64, 128],
            feature_dim: 128,
            positional_dim: 128,
            bottleneck_dim: 128,
            ..Self::desk()
        }
    }

    /// Narrow layers on the desk grid, for fast tests and smoke runs.
    pub fn tiny() -> Self {
        Self {
            stage_widths: vec![4, 8],
            tail_layers: 1,
            feature_dim: 8,
            attention_hidden: 8,
            bottleneck_hidden: 8,
            bottleneck_dim: 8,
            positional_dim: 8,
            decoder_hidden: 8,
            heading_hidden: 4,
            ..Self::desk()
        }
    }

    /// Downsampling factor between the raster and the feature map.
    pub fn downsample(&self) -> usize {
        1 << self.stage_widths.len()
    }

    /// Feature-map side `w = h`.
    pub fn cells_per_side(&self) -> usize {
        self.resolution / self.downsample()
    }

    pub fn cell_size_m(&self) -> f64 {
        self.field_of_view_m / self.cells_per_side() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_widths.is_empty() || self.resolution % self.downsample() != 0 {
            return invalid(format!(
                "resolution {} must be divisible by 2^{} stages",
                self.resolution,
                self.stage_widths.len()
            ));
        }
        if self.stage_widths.last() != Some(&self.feature_dim) {
            return invalid("the last stage width must equal the feature depth");
        }
        if self.positional_dim % 4 != 0 {
            return invalid("positional encoding depth must be divisible by 4");
        }
        if self.horizon == 0 {
            return invalid("horizon must be positive");
        }
        if self.input_channels.is_empty() || self.dense_channels.is_empty() || self.object_channels.is_empty() {
            return invalid("every encoder needs at least one input channel");
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}
