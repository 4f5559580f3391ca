use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::blocks::{BlockConfig, BlockKind};
use crate::error::{Error, Result};

/// Named architecture presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    AfidafT,
    Afidaf,
    Idaf,
    Aff,
    Hafidaf,
    /// Small two-stage network used for desk-scale training.
    Narrow,
    Custom,
}

impl Variant {
    pub const PRESETS: [Variant; 6] = [
        Variant::AfidafT,
        Variant::Afidaf,
        Variant::Idaf,
        Variant::Aff,
        Variant::Hafidaf,
        Variant::Narrow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::AfidafT => "afidaf-t",
            Self::Afidaf => "afidaf",
            Self::Idaf => "idaf",
            Self::Aff => "aff",
            Self::Hafidaf => "hafidaf",
            Self::Narrow => "narrow",
            Self::Custom => "custom",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::PRESETS
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

/// One convolutional stem layer: a `kernel x kernel` conv with stride and
/// GELU, followed by `blocks` residual `x + GELU(conv3x3(x))` units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StemLayer {
    pub channels: usize,
    #[serde(default = "three")]
    pub kernel: usize,
    pub stride: usize,
    #[serde(default)]
    pub blocks: usize,
}

fn three() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Stem {
    /// Stack of strided convolutions.
    Conv { layers: Vec<StemLayer> },
    /// Non-overlapping `patch x patch` embedding followed by a layer norm.
    Patch { channels: usize, patch: usize },
}

/// Resolution reduction at the start of a stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Downsample {
    None,
    /// 3x3 stride-2 depthwise conv, then a 1x1 channel expansion.
    DwPw,
    /// Layer norm, then a 2x2 stride-2 conv.
    PatchMerge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub blocks: usize,
    pub channels: usize,
    pub kind: BlockKind,
    pub downsample: Downsample,
}

fn d5() -> usize {
    5
}
fn d7() -> usize {
    7
}
fn d3() -> usize {
    3
}
fn d4() -> usize {
    4
}
fn d8() -> usize {
    8
}
fn d1() -> usize {
    1
}
fn d2() -> usize {
    2
}
fn dtrue() -> bool {
    true
}

/// Block knobs shared by every stage; group counts are clamped per stage
/// to divide its width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockTemplate {
    #[serde(default = "d5")]
    pub dw_kernel: usize,
    #[serde(default = "d7")]
    pub dwd_kernel: usize,
    #[serde(default = "d3")]
    pub dwd_dilation: usize,
    #[serde(default = "d4")]
    pub shuffle_groups: usize,
    #[serde(default = "d8")]
    pub mask_groups: usize,
    #[serde(default = "d4")]
    pub mlp_ratio: usize,
    #[serde(default = "d1")]
    pub mask_hidden_ratio: usize,
    #[serde(default = "d3")]
    pub fconv_kernel: usize,
    #[serde(default = "d2")]
    pub fconv_every: usize,
    #[serde(default = "dtrue")]
    pub ffn: bool,
}

impl Default for BlockTemplate {
    fn default() -> Self {
        serde_json::from_str("{}").expect("template defaults")
    }
}

impl BlockTemplate {
    pub fn for_stage(&self, kind: BlockKind, channels: usize) -> BlockConfig {
        BlockConfig {
            kind,
            channels,
            dw_kernel: self.dw_kernel,
            dwd_kernel: self.dwd_kernel,
            dwd_dilation: self.dwd_dilation,
            shuffle_groups: self.shuffle_groups,
            mask_groups: self.mask_groups,
            mlp_ratio: self.mlp_ratio,
            mask_hidden_ratio: self.mask_hidden_ratio,
            fconv_kernel: self.fconv_kernel,
            fconv_every: self.fconv_every,
            ffn: self.ffn,
        }
        .resolved()
    }
}

/// Declarative network description; serializes to the JSON config format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "custom")]
    pub variant: Variant,
    /// `[channels, height, width]`.
    pub input: [usize; 3],
    pub num_classes: usize,
    pub stem: Stem,
    pub stages: Vec<StageConfig>,
    #[serde(default)]
    pub block: BlockTemplate,
}

fn custom() -> Variant {
    Variant::Custom
}

fn lightweight(variant: Variant, widths: [usize; 3], kind: BlockKind) -> ModelConfig {
    let depths = [2, 4, 3];
    ModelConfig {
        variant,
        input: [3, 256, 256],
        num_classes: 1000,
        stem: Stem::Conv {
            layers: vec![
                StemLayer { channels: 16, kernel: 3, stride: 2, blocks: 0 },
                StemLayer { channels: 32, kernel: 3, stride: 2, blocks: 3 },
            ],
        },
        stages: depths
            .iter()
            .zip(widths)
            .map(|(&blocks, channels)| StageConfig { blocks, channels, kind, downsample: Downsample::DwPw })
            .collect(),
        block: BlockTemplate::default(),
    }
}

impl ModelConfig {
    pub fn preset(variant: Variant) -> Result<Self> {
        Ok(match variant {
            Variant::AfidafT => lightweight(variant, [96, 160, 192], BlockKind::Afidaf),
            Variant::Afidaf => lightweight(variant, [128, 256, 320], BlockKind::Afidaf),
            Variant::Idaf => lightweight(variant, [128, 256, 320], BlockKind::Idaf),
            Variant::Aff => lightweight(variant, [128, 256, 320], BlockKind::Aff),
            Variant::Hafidaf => {
                let stage = |blocks, channels, kind, downsample| StageConfig { blocks, channels, kind, downsample };
                ModelConfig {
                    variant,
                    input: [3, 224, 224],
                    num_classes: 1000,
                    stem: Stem::Patch { channels: 96, patch: 4 },
                    stages: vec![
                        stage(2, 96, BlockKind::HafidafConv, Downsample::None),
                        stage(2, 192, BlockKind::HafidafConv, Downsample::PatchMerge),
                        stage(6, 384, BlockKind::HafidafMask, Downsample::PatchMerge),
                        stage(2, 768, BlockKind::HafidafMask, Downsample::PatchMerge),
                    ],
                    block: BlockTemplate { shuffle_groups: 2, mask_groups: 4, ..BlockTemplate::default() },
                }
            }
            Variant::Narrow => ModelConfig {
                variant,
                input: [3, 32, 32],
                num_classes: 4,
                stem: Stem::Conv { layers: vec![StemLayer { channels: 16, kernel: 3, stride: 1, blocks: 0 }] },
                stages: vec![
                    StageConfig { blocks: 1, channels: 16, kind: BlockKind::Afidaf, downsample: Downsample::DwPw },
                    StageConfig { blocks: 1, channels: 32, kind: BlockKind::Afidaf, downsample: Downsample::DwPw },
                ],
                block: BlockTemplate { mlp_ratio: 2, ..BlockTemplate::default() },
            },
            Variant::Custom => return Err(Error::Config("custom has no preset".into())),
        })
    }

    /// Same network with every stage switched to `kind`.
    pub fn with_kind(mut self, kind: BlockKind) -> Self {
        for s in &mut self.stages {
            s.kind = kind;
        }
        self.variant = Variant::Custom;
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let [c, h, w] = self.input;
        if c == 0 || h == 0 || w == 0 || self.num_classes == 0 {
            return bad("input extents and num_classes must be positive".into());
        }
        if self.stages.is_empty() {
            return bad("at least one stage is required".into());
        }
        match &self.stem {
            Stem::Conv { layers } => {
                if layers.is_empty() {
                    return bad("conv stem needs at least one layer".into());
                }
                for l in layers {
                    if l.channels == 0 || l.stride == 0 || l.kernel == 0 {
                        return bad("stem layer channels, kernel and stride must be positive".into());
                    }
                }
            }
            Stem::Patch { channels, patch } => {
                if *channels == 0 || *patch == 0 {
                    return bad("patch stem channels and patch must be positive".into());
                }
            }
        }
        let lightweight = matches!(self.stem, Stem::Conv { .. });
        for (i, s) in self.stages.iter().enumerate() {
            if s.blocks == 0 || s.channels == 0 {
                return bad(format!("stage {i}: blocks and channels must be positive"));
            }
            if s.kind.is_hierarchical() == lightweight {
                return bad(format!("stage {i}: {:?} blocks do not fit this stem", s.kind));
            }
            if s.downsample == Downsample::None && i > 0 && s.channels != self.stages[i - 1].channels {
                return bad(format!("stage {i}: width changes without a downsample layer"));
            }
            self.block.for_stage(s.kind, s.channels).validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_roundtrip_through_json() {
        for v in Variant::PRESETS {
            let cfg = ModelConfig::preset(v).unwrap();
            cfg.validate().unwrap();
            assert_eq!(ModelConfig::from_json(&cfg.to_json()).unwrap(), cfg);
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = ModelConfig::preset(Variant::Afidaf).unwrap();
        cfg.stages[0].channels = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = ModelConfig::preset(Variant::Afidaf).unwrap().with_kind(BlockKind::HafidafMask);
        assert!(cfg.validate().is_err());
        assert!(ModelConfig::from_json("{\"input\": [3, 8, 8]}").is_err());
        assert!("resnet".parse::<Variant>().is_err());
    }
}
