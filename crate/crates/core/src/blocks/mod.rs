//! Token-mixing filters and the blocks built from them.
//!
//! Every component is a plain struct of parameter handles created through
//! an [`Init`] and evaluated on a tape against a [`Bound`] parameter set.

mod config;

pub use config::{clamp_groups, BlockConfig, BlockKind};

use crate::error::Result;
use crate::ops::Conv2dSpec;
use crate::params::{Bound, Conv, Init, Norm};
use crate::tensor::{Scalar, Var};

/// Real FLOPs of one forward or inverse 2D transform of `planes` planes,
/// counted as `5 N log2 N` per plane with `N = h * w`.
pub fn fft_flops(planes: usize, h: usize, w: usize) -> u64 {
    let n = (h * w) as f64;
    if n <= 1.0 {
        return 0;
    }
    (planes as f64 * 5.0 * n * n.log2()).round() as u64
}

/// FLOPs split into convolution/linear work (`2 * MACs`) and FFT work.
/// Elementwise ops, norms and activations are not counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Flops {
    pub dense: u64,
    pub spectral: u64,
}

impl Flops {
    pub fn dense(n: u64) -> Self {
        Self { dense: n, spectral: 0 }
    }

    pub fn spectral(n: u64) -> Self {
        Self { dense: 0, spectral: n }
    }

    pub fn total(self) -> u64 {
        self.dense + self.spectral
    }
}

impl std::ops::Add for Flops {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self { dense: self.dense + o.dense, spectral: self.spectral + o.spectral }
    }
}

impl std::ops::AddAssign for Flops {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl std::iter::Sum for Flops {
    fn sum<I: Iterator<Item = Self>>(it: I) -> Self {
        it.fold(Self::default(), |a, b| a + b)
    }
}

fn conv_flops(c: &Conv, h: usize, w: usize) -> Result<Flops> {
    Ok(Flops::dense(c.flops(h, w)?))
}

/// Decomposed large-kernel convolution with channel group shuffles:
/// `Conv1x1(GS(DWD(GS(DW(x)))))`.
#[derive(Clone, Debug)]
pub struct AttentionConv {
    pub dw: Conv,
    pub dwd: Conv,
    pub pw: Conv,
    pub groups: usize,
}

impl AttentionConv {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, cfg: &BlockConfig) -> Result<Self> {
        let c = cfg.channels;
        Ok(Self {
            dw: init.conv("dw", Conv2dSpec::depthwise(c, cfg.dw_kernel, 1))?,
            dwd: init.conv("dwd", Conv2dSpec::depthwise(c, cfg.dwd_kernel, cfg.dwd_dilation))?,
            pw: init.conv("pw", Conv2dSpec::pointwise(c, c, cfg.shuffle_groups))?,
            groups: cfg.shuffle_groups,
        })
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let x = self.dw.forward(p, x)?.group_shuffle(self.groups)?;
        let x = self.dwd.forward(p, x)?.group_shuffle(self.groups)?;
        self.pw.forward(p, x)
    }

    pub fn flops(&self, h: usize, w: usize) -> Result<Flops> {
        Ok(conv_flops(&self.dw, h, w)? + conv_flops(&self.dwd, h, w)? + conv_flops(&self.pw, h, w)?)
    }
}

/// Image-domain adaptive filter: `x + out(attn(a) * a)` with `a = GELU(in(x))`.
#[derive(Clone, Debug)]
pub struct ImageFilter {
    pub proj_in: Conv,
    pub attn: AttentionConv,
    pub proj_out: Conv,
}

impl ImageFilter {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, cfg: &BlockConfig) -> Result<Self> {
        let c = cfg.channels;
        Ok(Self {
            proj_in: init.conv("proj_in", Conv2dSpec::pointwise(c, c, 1))?,
            attn: AttentionConv::new(&mut init.scope("attn"), cfg)?,
            proj_out: init.conv("proj_out", Conv2dSpec::pointwise(c, c, 1))?,
        })
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let a = self.proj_in.forward(p, x)?.gelu();
        let gated = self.attn.forward(p, a)?.mul(a)?;
        self.proj_out.forward(p, gated)?.add(x)
    }

    pub fn flops(&self, h: usize, w: usize) -> Result<Flops> {
        Ok(conv_flops(&self.proj_in, h, w)? + self.attn.flops(h, w)? + conv_flops(&self.proj_out, h, w)?)
    }
}

/// Fourier channel mask: `irfft2(M(S) * S)` where `S = rfft2(x)` is viewed
/// as `2C` real channels (real and imaginary parts interleaved) and `M` is a
/// grouped pointwise subnet applied identically at every frequency bin.
#[derive(Clone, Debug)]
pub struct FourierMask {
    pub fc1: Conv,
    pub fc2: Conv,
}

impl FourierMask {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, cfg: &BlockConfig) -> Result<Self> {
        let c2 = 2 * cfg.channels;
        let hidden = c2 * cfg.mask_hidden_ratio;
        Ok(Self {
            fc1: init.conv("fc1", Conv2dSpec::pointwise(c2, hidden, cfg.mask_groups))?,
            fc2: init.conv("fc2", Conv2dSpec::pointwise(hidden, c2, cfg.mask_groups))?,
        })
    }

    /// Mask values for a packed spectrum `[B, 2C, H, Wf]`.
    pub fn mask<'t, T: Scalar>(&self, p: &Bound<'t, T>, spec: Var<'t, T>) -> Result<Var<'t, T>> {
        let h = self.fc1.forward(p, spec)?.relu();
        self.fc2.forward(p, h)
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let width = x.shape()[3];
        let s = x.rfft2()?;
        self.mask(p, s)?.mul(s)?.irfft2(width)
    }

    pub fn flops(&self, h: usize, w: usize) -> Result<Flops> {
        let c = self.fc1.spec.in_ch / 2;
        let wf = w / 2 + 1;
        Ok(Flops::spectral(2 * fft_flops(c, h, w)) + conv_flops(&self.fc1, h, wf)? + conv_flops(&self.fc2, h, wf)?)
    }
}

/// Frequency-domain convolution `irfft2(Conv(rfft2(x)))`: a small per-channel
/// kernel over the half-plane spectrum grid, mixing each channel's real and
/// imaginary planes, zero padded at the grid edges.
#[derive(Clone, Debug)]
pub struct FourierConv {
    pub conv: Conv,
}

impl FourierConv {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, cfg: &BlockConfig) -> Result<Self> {
        let c = cfg.channels;
        let spec = Conv2dSpec::new(2 * c, 2 * c, cfg.fconv_kernel)
            .with_groups(c)
            .same_padding()
            .without_bias();
        Ok(Self { conv: init.conv("conv", spec)? })
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let width = x.shape()[3];
        self.conv.forward(p, x.rfft2()?)?.irfft2(width)
    }

    pub fn flops(&self, h: usize, w: usize) -> Result<Flops> {
        let c = self.conv.spec.in_ch / 2;
        Ok(Flops::spectral(2 * fft_flops(c, h, w)) + conv_flops(&self.conv, h, w / 2 + 1)?)
    }
}

/// Pointwise MLP `GL2(GS(GELU(GL1(x))))` with grouped linear layers.
/// Without residual; blocks add it.
#[derive(Clone, Debug)]
pub struct Gsmlp {
    pub fc1: Conv,
    pub fc2: Conv,
    pub groups: usize,
}

impl Gsmlp {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, channels: usize, ratio: usize, groups: usize) -> Result<Self> {
        let hidden = channels * ratio;
        Ok(Self {
            fc1: init.conv("fc1", Conv2dSpec::pointwise(channels, hidden, groups))?,
            fc2: init.conv("fc2", Conv2dSpec::pointwise(hidden, channels, groups))?,
            groups,
        })
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let mut h = self.fc1.forward(p, x)?.gelu();
        if self.groups > 1 {
            h = h.group_shuffle(self.groups)?;
        }
        self.fc2.forward(p, h)
    }

    pub fn flops(&self, h: usize, w: usize) -> Result<Flops> {
        Ok(conv_flops(&self.fc1, h, w)? + conv_flops(&self.fc2, h, w)?)
    }
}

/// Spatial or frequency-domain mixer of a hierarchical block.
#[derive(Clone, Debug)]
pub enum Mixer {
    Spatial(AttentionConv),
    Fourier(FourierConv),
    Mask(FourierMask),
}

impl Mixer {
    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        match self {
            Self::Spatial(m) => m.forward(p, x),
            Self::Fourier(m) => m.forward(p, x),
            Self::Mask(m) => m.forward(p, x),
        }
    }

    pub fn flops(&self, h: usize, w: usize) -> Result<Flops> {
        match self {
            Self::Spatial(m) => m.flops(h, w),
            Self::Fourier(m) => m.flops(h, w),
            Self::Mask(m) => m.flops(h, w),
        }
    }
}

/// Dual-domain block of the lightweight networks.
///
/// * `Afidaf`: `y = x + Mc(LN2(Mi(LN1 x)))`
/// * `Idaf`: `y = x + Mi(LN1 x)`
/// * `Aff`: `y = x + Mc(LN2 x)`
///
/// followed, when enabled, by `y + FFN(LN3 y)`.
#[derive(Clone, Debug)]
pub struct DualBlock {
    pub kind: BlockKind,
    pub norm1: Option<Norm>,
    pub image: Option<ImageFilter>,
    pub norm2: Option<Norm>,
    pub fourier: Option<FourierMask>,
    pub ffn: Option<(Norm, Gsmlp)>,
}

impl DualBlock {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, cfg: &BlockConfig) -> Result<Self> {
        let c = cfg.channels;
        let (norm1, image) = if cfg.kind.has_image_filter() {
            (Some(init.norm("norm1", c)?), Some(ImageFilter::new(&mut init.scope("mi"), cfg)?))
        } else {
            (None, None)
        };
        let (norm2, fourier) = if cfg.kind.has_fourier_mask() {
            (Some(init.norm("norm2", c)?), Some(FourierMask::new(&mut init.scope("mc"), cfg)?))
        } else {
            (None, None)
        };
        let ffn = if cfg.ffn {
            Some((init.norm("norm3", c)?, Gsmlp::new(&mut init.scope("ffn"), c, cfg.mlp_ratio, 1)?))
        } else {
            None
        };
        Ok(Self { kind: cfg.kind, norm1, image, norm2, fourier, ffn })
    }

    /// The two filters without the outer residual or the feed-forward part.
    pub fn filters<'t, T: Scalar>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let mut h = x;
        if let (Some(n), Some(m)) = (&self.norm1, &self.image) {
            h = m.forward(p, n.forward(p, h)?)?;
        }
        if let (Some(n), Some(m)) = (&self.norm2, &self.fourier) {
            h = m.forward(p, n.forward(p, h)?)?;
        }
        Ok(h)
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let y = self.filters(p, x)?.add(x)?;
        match &self.ffn {
            Some((n, mlp)) => mlp.forward(p, n.forward(p, y)?)?.add(y),
            None => Ok(y),
        }
    }

    pub fn flops(&self, h: usize, w: usize) -> Result<Flops> {
        let mut f = Flops::default();
        if let Some(m) = &self.image {
            f += m.flops(h, w)?;
        }
        if let Some(m) = &self.fourier {
            f += m.flops(h, w)?;
        }
        if let Some((_, m)) = &self.ffn {
            f += m.flops(h, w)?;
        }
        Ok(f)
    }
}

/// Hierarchical block: `x + mixer(LN1 x)`, then `+ GSMLP(LN2 .)`.
#[derive(Clone, Debug)]
pub struct HierBlock {
    pub norm1: Norm,
    pub mixer: Mixer,
    pub norm2: Norm,
    pub mlp: Gsmlp,
}

impl HierBlock {
    /// `index` is the block's position inside its stage; it selects the
    /// spatial or the frequency-domain convolution for conv blocks.
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, cfg: &BlockConfig, index: usize) -> Result<Self> {
        let c = cfg.channels;
        let norm1 = init.norm("norm1", c)?;
        let mixer = match cfg.kind {
            BlockKind::HafidafMask => Mixer::Mask(FourierMask::new(&mut init.scope("fmask"), cfg)?),
            _ if cfg.uses_fconv(index) => Mixer::Fourier(FourierConv::new(&mut init.scope("fconv"), cfg)?),
            _ => Mixer::Spatial(AttentionConv::new(&mut init.scope("attn"), cfg)?),
        };
        let norm2 = init.norm("norm2", c)?;
        let mlp = Gsmlp::new(&mut init.scope("gsmlp"), c, cfg.mlp_ratio, cfg.shuffle_groups)?;
        Ok(Self { norm1, mixer, norm2, mlp })
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let y = self.mixer.forward(p, self.norm1.forward(p, x)?)?.add(x)?;
        self.mlp.forward(p, self.norm2.forward(p, y)?)?.add(y)
    }

    pub fn flops(&self, h: usize, w: usize) -> Result<Flops> {
        Ok(self.mixer.flops(h, w)? + self.mlp.flops(h, w)?)
    }
}

/// Any block kind, built from its config.
#[derive(Clone, Debug)]
pub enum Block {
    Dual(DualBlock),
    Hier(HierBlock),
}

impl Block {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, cfg: &BlockConfig, index: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(if cfg.kind.is_hierarchical() {
            Self::Hier(HierBlock::new(init, cfg, index)?)
        } else {
            Self::Dual(DualBlock::new(init, cfg)?)
        })
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        match self {
            Self::Dual(b) => b.forward(p, x),
            Self::Hier(b) => b.forward(p, x),
        }
    }

    pub fn flops(&self, h: usize, w: usize) -> Result<Flops> {
        match self {
            Self::Dual(b) => b.flops(h, w),
            Self::Hier(b) => b.flops(h, w),
        }
    }
}
