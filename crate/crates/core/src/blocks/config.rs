use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// Image-domain filter followed by the Fourier channel mask.
    Afidaf,
    /// Image-domain filter only.
    Idaf,
    /// Fourier channel mask only.
    Aff,
    /// Alternating spatial / frequency-domain convolution plus GSMLP.
    HafidafConv,
    /// Fourier channel mask plus GSMLP.
    HafidafMask,
}

impl BlockKind {
    pub fn is_hierarchical(self) -> bool {
        matches!(self, Self::HafidafConv | Self::HafidafMask)
    }

    pub fn has_image_filter(self) -> bool {
        matches!(self, Self::Afidaf | Self::Idaf)
    }

    pub fn has_fourier_mask(self) -> bool {
        matches!(self, Self::Afidaf | Self::Aff)
    }
}

fn d_dw() -> usize {
    5
}
fn d_dwd() -> usize {
    7
}
fn d_dil() -> usize {
    3
}
fn d_gs() -> usize {
    4
}
fn d_gm() -> usize {
    8
}
fn d_one() -> usize {
    1
}
fn d_fconv() -> usize {
    3
}
fn d_every() -> usize {
    2
}
fn d_true() -> bool {
    true
}

/// Structural knobs of one block. Missing JSON fields take the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub kind: BlockKind,
    pub channels: usize,
    #[serde(default = "d_dw")]
    pub dw_kernel: usize,
    #[serde(default = "d_dwd")]
    pub dwd_kernel: usize,
    #[serde(default = "d_dil")]
    pub dwd_dilation: usize,
    #[serde(default = "d_gs")]
    pub shuffle_groups: usize,
    #[serde(default = "d_gm")]
    pub mask_groups: usize,
    /// Hidden expansion of the feed-forward sublayer.
    pub mlp_ratio: usize,
    /// Hidden width of the mask subnet relative to its `2C` input.
    #[serde(default = "d_one")]
    pub mask_hidden_ratio: usize,
    #[serde(default = "d_fconv")]
    pub fconv_kernel: usize,
    #[serde(default = "d_every")]
    pub fconv_every: usize,
    /// Dense feed-forward sublayer after the filters (non-hierarchical kinds).
    #[serde(default = "d_true")]
    pub ffn: bool,
}

/// Largest divisor of `c` that does not exceed `want`.
pub fn clamp_groups(c: usize, want: usize) -> usize {
    (1..=want.min(c).max(1)).rev().find(|g| c % g == 0).unwrap_or(1)
}

impl BlockConfig {
    pub fn new(kind: BlockKind, channels: usize) -> Self {
        Self {
            kind,
            channels,
            dw_kernel: d_dw(),
            dwd_kernel: d_dwd(),
            dwd_dilation: d_dil(),
            shuffle_groups: d_gs(),
            mask_groups: d_gm(),
            mlp_ratio: 4,
            mask_hidden_ratio: 1,
            fconv_kernel: d_fconv(),
            fconv_every: d_every(),
            ffn: true,
        }
    }

    /// Copy with the group counts clamped to divide the channel count.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.shuffle_groups = clamp_groups(self.channels, self.shuffle_groups);
        c.mask_groups = clamp_groups(self.channels, self.mask_groups);
        c
    }

    /// Receptive field of the DW followed by the dilated DW convolution.
    pub fn receptive_field(&self) -> usize {
        self.dw_kernel + (self.dwd_kernel - 1) * self.dwd_dilation
    }

    /// Whether in-stage block `index` uses the frequency-domain convolution.
    pub fn uses_fconv(&self, index: usize) -> bool {
        index % self.fconv_every == self.fconv_every - 1
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels;
        let bad = |m: String| Err(Error::Config(m));
        if c == 0 {
            return bad("block channels must be positive".into());
        }
        for (name, k) in [("dw_kernel", self.dw_kernel), ("dwd_kernel", self.dwd_kernel), ("fconv_kernel", self.fconv_kernel)] {
            if k == 0 || k % 2 == 0 {
                return bad(format!("{name} must be odd and positive, got {k}"));
            }
        }
        if self.dwd_dilation == 0 || self.fconv_every == 0 || self.mask_hidden_ratio == 0 {
            return bad("dilation, fconv_every and mask_hidden_ratio must be positive".into());
        }
        if self.mlp_ratio == 0 && (self.ffn || self.kind.is_hierarchical()) {
            return bad("mlp_ratio must be positive".into());
        }
        for (name, g) in [("shuffle_groups", self.shuffle_groups), ("mask_groups", self.mask_groups)] {
            if g == 0 || c % g != 0 {
                return bad(format!("{name} = {g} does not divide {c} channels"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_large_field() {
        let c = BlockConfig::new(BlockKind::Afidaf, 32);
        assert_eq!(c.receptive_field(), 23);
        assert!(c.receptive_field() >= 21);
        c.validate().unwrap();
    }

    #[test]
    fn clamping() {
        assert_eq!(clamp_groups(96, 8), 8);
        assert_eq!(clamp_groups(20, 8), 5);
        assert_eq!(clamp_groups(7, 4), 1);
        assert_eq!(clamp_groups(2, 8), 2);
        let c = BlockConfig::new(BlockKind::Aff, 20);
        assert!(c.validate().is_err());
        c.resolved().validate().unwrap();
    }

    #[test]
    fn parity_dispatch() {
        let c = BlockConfig::new(BlockKind::HafidafConv, 8);
        assert_eq!((0..4).map(|i| c.uses_fconv(i)).collect::<Vec<_>>(), [false, true, false, true]);
    }

    #[test]
    fn json_defaults() {
        let c: BlockConfig = serde_json::from_str(r#"{"kind":"aff","channels":16,"mlp_ratio":2}"#).unwrap();
        assert_eq!(c.mask_groups, 8);
        assert!(c.ffn);
        assert!(serde_json::from_str::<BlockConfig>(r#"{"kind":"aff","channels":16,"mlp_ratio":2,"x":1}"#).is_err());
    }
}
