use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::tensor::{dims4, gemm, Scalar, Tensor, Var};

/// Zero padding added on each side of the input plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub fn uniform(p: usize) -> Self {
        Self { top: p, bottom: p, left: p, right: p }
    }
}

/// Geometry of a 2D cross-correlation layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2dSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub dilation: (usize, usize),
    pub groups: usize,
    pub padding: Padding,
    pub bias: bool,
}

impl Conv2dSpec {
    /// Dense `k x k` convolution, stride 1, no padding, with bias.
    pub fn new(in_ch: usize, out_ch: usize, k: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel: (k, k),
            stride: (1, 1),
            dilation: (1, 1),
            groups: 1,
            padding: Padding::default(),
            bias: true,
        }
    }

    /// Depthwise `k x k` convolution with "same" padding.
    pub fn depthwise(ch: usize, k: usize, dilation: usize) -> Self {
        Self::new(ch, ch, k).with_groups(ch).with_dilation(dilation).same_padding()
    }

    pub fn pointwise(in_ch: usize, out_ch: usize, groups: usize) -> Self {
        Self::new(in_ch, out_ch, 1).with_groups(groups)
    }

    pub fn with_stride(mut self, s: usize) -> Self {
        self.stride = (s, s);
        self
    }

    pub fn with_dilation(mut self, d: usize) -> Self {
        self.dilation = (d, d);
        self
    }

    pub fn with_groups(mut self, g: usize) -> Self {
        self.groups = g;
        self
    }

    pub fn with_padding(mut self, p: Padding) -> Self {
        self.padding = p;
        self
    }

    /// Pads `dilation * (k - 1) / 2` on every side (shape-preserving for odd
    /// kernels at stride 1).
    pub fn same_padding(mut self) -> Self {
        let ph = self.dilation.0 * (self.kernel.0 - 1) / 2;
        let pw = self.dilation.1 * (self.kernel.1 - 1) / 2;
        self.padding = Padding { top: ph, bottom: ph, left: pw, right: pw };
        self
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.in_ch && self.in_ch == self.out_ch
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.in_ch,
            self.out_ch,
            self.kernel.0,
            self.kernel.1,
            self.stride.0,
            self.stride.1,
            self.dilation.0,
            self.dilation.1,
            self.groups,
        ];
        if positive.contains(&0) {
            return Err(shape_err!("conv spec has a zero field: {self:?}"));
        }
        if self.in_ch % self.groups != 0 || self.out_ch % self.groups != 0 {
            return Err(shape_err!(
                "channels {} -> {} not divisible by groups {}",
                self.in_ch,
                self.out_ch,
                self.groups
            ));
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_ch, self.in_ch / self.groups, self.kernel.0, self.kernel.1]
    }

    /// `floor((in + pad - dilation (k - 1) - 1) / stride) + 1` per axis.
    pub fn out_extent(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let axis = |n: usize, pad: usize, k: usize, d: usize, s: usize| {
            let span = d * (k - 1) + 1;
            let padded = n + pad;
            if padded < span {
                Err(shape_err!("input extent {n} (+{pad} padding) smaller than kernel span {span}"))
            } else {
                Ok((padded - span) / s + 1)
            }
        };
        let p = self.padding;
        Ok((
            axis(h, p.top + p.bottom, self.kernel.0, self.dilation.0, self.stride.0)?,
            axis(w, p.left + p.right, self.kernel.1, self.dilation.1, self.stride.1)?,
        ))
    }

    pub fn weight_count(&self) -> usize {
        self.weight_shape().iter().product::<usize>() + if self.bias { self.out_ch } else { 0 }
    }

    /// Multiply-accumulates for one `h x w` input image.
    pub fn macs(&self, h: usize, w: usize) -> Result<u64> {
        let (ho, wo) = self.out_extent(h, w)?;
        let [o, i, kh, kw] = self.weight_shape();
        Ok((ho * wo * o * i * kh * kw) as u64)
    }

    fn is_plain_pointwise(&self) -> bool {
        self.kernel == (1, 1) && self.stride == (1, 1) && self.padding == Padding::default()
    }
}

#[derive(Clone, Copy)]
struct Geom {
    b: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    cin_g: usize,
    cout_g: usize,
    spec: Conv2dSpec,
}

impl Geom {
    fn new(x: &[usize], spec: &Conv2dSpec, w: &[usize]) -> Result<Self> {
        spec.validate()?;
        let (b, c, h, wd) = dims4(x, "conv2d")?;
        if c != spec.in_ch {
            return Err(shape_err!("conv2d expects {} input channels, got {c}", spec.in_ch));
        }
        if w != spec.weight_shape() {
            return Err(shape_err!(
                "conv2d weight {w:?} does not match {:?}",
                spec.weight_shape()
            ));
        }
        let (ho, wo) = spec.out_extent(h, wd)?;
        Ok(Self {
            b,
            h,
            w: wd,
            ho,
            wo,
            cin_g: spec.in_ch / spec.groups,
            cout_g: spec.out_ch / spec.groups,
            spec: *spec,
        })
    }

    fn ksize(&self) -> usize {
        self.spec.kernel.0 * self.spec.kernel.1
    }

    /// Input row for output row `oh` and kernel row `ki`, if inside the image.
    fn in_row(&self, oh: usize, ki: usize) -> Option<usize> {
        let r = (oh * self.spec.stride.0 + ki * self.spec.dilation.0) as isize
            - self.spec.padding.top as isize;
        (r >= 0 && (r as usize) < self.h).then_some(r as usize)
    }

    /// Column offset `iw - ow * stride` for kernel column `kj`, and the range
    /// of output columns whose input column is inside the image.
    fn col_span(&self, kj: usize) -> (isize, usize, usize) {
        let sw = self.spec.stride.1 as isize;
        let off = (kj * self.spec.dilation.1) as isize - self.spec.padding.left as isize;
        let lo = if off >= 0 { 0 } else { ((-off + sw - 1) / sw) as usize };
        let last = self.w as isize - 1 - off;
        let hi = if last < 0 {
            0
        } else {
            ((last / sw) as usize + 1).min(self.wo)
        };
        (off, lo.min(hi), hi)
    }
}

fn forward_kernel<T: Scalar>(x: &[T], w: &[T], bias: Option<&[T]>, g: &Geom) -> Vec<T> {
    let Geom { b, h, w: wd, ho, wo, cin_g, cout_g, spec } = *g;
    let cout = spec.out_ch;
    let mut out = vec![T::ZERO; b * cout * ho * wo];
    if spec.is_plain_pointwise() {
        let hw = h * wd;
        out.par_chunks_mut(cout_g * hw).enumerate().for_each(|(bg, dst)| {
            let (bi, gi) = (bg / spec.groups, bg % spec.groups);
            if let Some(bias) = bias {
                for (o, row) in dst.chunks_mut(hw).enumerate() {
                    row.fill(bias[gi * cout_g + o]);
                }
            }
            let xs = &x[(bi * spec.in_ch + gi * cin_g) * hw..][..cin_g * hw];
            gemm(cout_g, cin_g, hw, &w[gi * cout_g * cin_g..][..cout_g * cin_g], xs, dst);
        });
        return out;
    }
    let ks = g.ksize();
    let (kh, kw) = spec.kernel;
    let sw = spec.stride.1;
    out.par_chunks_mut(ho * wo).enumerate().for_each(|(boc, dst)| {
        let (bi, oc) = (boc / cout, boc % cout);
        let gi = oc / cout_g;
        if let Some(bias) = bias {
            dst.fill(bias[oc]);
        }
        for icl in 0..cin_g {
            let ic = gi * cin_g + icl;
            let xp = &x[(bi * spec.in_ch + ic) * h * wd..][..h * wd];
            let wk = &w[(oc * cin_g + icl) * ks..][..ks];
            for ki in 0..kh {
                for kj in 0..kw {
                    let wv = wk[ki * kw + kj];
                    let (off, lo, hi) = g.col_span(kj);
                    if lo >= hi {
                        continue;
                    }
                    for oh in 0..ho {
                        let Some(ih) = g.in_row(oh, ki) else { continue };
                        let xrow = &xp[ih * wd..(ih + 1) * wd];
                        let orow = &mut dst[oh * wo..(oh + 1) * wo];
                        if sw == 1 {
                            let start = (lo as isize + off) as usize;
                            for (o, &xv) in orow[lo..hi].iter_mut().zip(&xrow[start..start + hi - lo]) {
                                *o += wv * xv;
                            }
                        } else {
                            for ow in lo..hi {
                                orow[ow] += wv * xrow[((ow * sw) as isize + off) as usize];
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

fn backward_input<T: Scalar>(gout: &[T], w: &[T], g: &Geom) -> Vec<T> {
    let Geom { b, h, w: wd, ho, wo, cin_g, cout_g, spec } = *g;
    let cin = spec.in_ch;
    let mut gx = vec![T::ZERO; b * cin * h * wd];
    if spec.is_plain_pointwise() {
        let hw = h * wd;
        gx.par_chunks_mut(cin_g * hw).enumerate().for_each(|(bg, dst)| {
            let (bi, gi) = (bg / spec.groups, bg % spec.groups);
            let wg = &w[gi * cout_g * cin_g..][..cout_g * cin_g];
            let wt = crate::tensor::transpose2d(cout_g, cin_g, wg);
            let gs = &gout[(bi * spec.out_ch + gi * cout_g) * hw..][..cout_g * hw];
            gemm(cin_g, cout_g, hw, &wt, gs, dst);
        });
        return gx;
    }
    let ks = g.ksize();
    let (kh, kw) = spec.kernel;
    let sw = spec.stride.1;
    gx.par_chunks_mut(h * wd).enumerate().for_each(|(bic, dst)| {
        let (bi, ic) = (bic / cin, bic % cin);
        let (gi, icl) = (ic / cin_g, ic % cin_g);
        for oc in gi * cout_g..(gi + 1) * cout_g {
            let gp = &gout[(bi * spec.out_ch + oc) * ho * wo..][..ho * wo];
            let wk = &w[(oc * cin_g + icl) * ks..][..ks];
            for ki in 0..kh {
                for kj in 0..kw {
                    let wv = wk[ki * kw + kj];
                    let (off, lo, hi) = g.col_span(kj);
                    if lo >= hi {
                        continue;
                    }
                    for oh in 0..ho {
                        let Some(ih) = g.in_row(oh, ki) else { continue };
                        let grow = &gp[oh * wo..(oh + 1) * wo];
                        let xrow = &mut dst[ih * wd..(ih + 1) * wd];
                        if sw == 1 {
                            let start = (lo as isize + off) as usize;
                            for (x, &gv) in xrow[start..start + hi - lo].iter_mut().zip(&grow[lo..hi]) {
                                *x += wv * gv;
                            }
                        } else {
                            for ow in lo..hi {
                                xrow[((ow * sw) as isize + off) as usize] += wv * grow[ow];
                            }
                        }
                    }
                }
            }
        }
    });
    gx
}

fn backward_weight<T: Scalar>(gout: &[T], x: &[T], g: &Geom) -> Vec<T> {
    let Geom { b, h, w: wd, ho, wo, cin_g, cout_g, spec } = *g;
    let ks = g.ksize();
    let (kh, kw) = spec.kernel;
    let sw = spec.stride.1;
    let mut gw = vec![T::ZERO; spec.out_ch * cin_g * ks];
    gw.par_chunks_mut(cin_g * ks).enumerate().for_each(|(oc, dst)| {
        let gi = oc / cout_g;
        for bi in 0..b {
            let gp = &gout[(bi * spec.out_ch + oc) * ho * wo..][..ho * wo];
            for icl in 0..cin_g {
                let ic = gi * cin_g + icl;
                let xp = &x[(bi * spec.in_ch + ic) * h * wd..][..h * wd];
                for ki in 0..kh {
                    for kj in 0..kw {
                        let (off, lo, hi) = g.col_span(kj);
                        if lo >= hi {
                            continue;
                        }
                        let mut acc = T::ZERO;
                        for oh in 0..ho {
                            let Some(ih) = g.in_row(oh, ki) else { continue };
                            let xrow = &xp[ih * wd..(ih + 1) * wd];
                            let grow = &gp[oh * wo..(oh + 1) * wo];
                            if sw == 1 {
                                let start = (lo as isize + off) as usize;
                                acc += grow[lo..hi]
                                    .iter()
                                    .zip(&xrow[start..start + hi - lo])
                                    .map(|(&a, &b)| a * b)
                                    .sum::<T>();
                            } else {
                                for ow in lo..hi {
                                    acc += grow[ow] * xrow[((ow * sw) as isize + off) as usize];
                                }
                            }
                        }
                        dst[icl * ks + ki * kw + kj] += acc;
                    }
                }
            }
        }
    });
    gw
}

fn backward_bias<T: Scalar>(gout: &[T], g: &Geom) -> Vec<T> {
    let cout = g.spec.out_ch;
    let plane = g.ho * g.wo;
    let mut gb = vec![T::ZERO; cout];
    for bi in 0..g.b {
        for (oc, acc) in gb.iter_mut().enumerate() {
            *acc += gout[(bi * cout + oc) * plane..][..plane].iter().copied().sum::<T>();
        }
    }
    gb
}

fn check_bias<T: Scalar>(spec: &Conv2dSpec, bias: Option<&Tensor<T>>) -> Result<()> {
    match (spec.bias, bias) {
        (true, Some(b)) if b.shape() == [spec.out_ch] => Ok(()),
        (true, Some(b)) => Err(shape_err!("conv2d bias {:?}, expected [{}]", b.shape(), spec.out_ch)),
        (true, None) => Err(shape_err!("conv2d spec requires a bias")),
        (false, None) => Ok(()),
        (false, Some(_)) => Err(shape_err!("conv2d spec has no bias but one was given")),
    }
}

/// 2D cross-correlation with zero padding, stride, dilation and groups.
///
/// `x: [B, Cin, H, W]`, `weight: [Cout, Cin / groups, kh, kw]`.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    spec: &Conv2dSpec,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let g = Geom::new(x.shape(), spec, weight.shape())?;
    check_bias(spec, bias)?;
    let out = forward_kernel(x.data(), weight.data(), bias.map(|b| b.data()), &g);
    Ok(Tensor::from_parts(vec![g.b, spec.out_ch, g.ho, g.wo], out))
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn conv2d(
        self,
        spec: &Conv2dSpec,
        weight: Var<'t, T>,
        bias: Option<Var<'t, T>>,
    ) -> Result<Var<'t, T>> {
        self.check_same_tape(&weight)?;
        let (x, w) = (self.value(), weight.value());
        let bv = bias.map(|b| b.value());
        let out = conv2d(&x, spec, &w, bv.as_deref())?;
        let g = Geom::new(x.shape(), spec, w.shape())?;
        let mut inputs = vec![self, weight];
        inputs.extend(bias);
        Ok(self.tape().record(
            out,
            &inputs,
            Box::new(move |gout, needs| {
                let gd = gout.data();
                let mut grads = vec![
                    needs[0].then(|| Tensor::from_parts(x.shape().to_vec(), backward_input(gd, w.data(), &g))),
                    needs[1].then(|| Tensor::from_parts(w.shape().to_vec(), backward_weight(gd, x.data(), &g))),
                ];
                if needs.len() > 2 {
                    grads.push(needs[2].then(|| Tensor::from_parts(vec![g.spec.out_ch], backward_bias(gd, &g))));
                }
                Ok(grads)
            }),
        ))
    }
}
