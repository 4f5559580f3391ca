//! Real 2D DFT over the spatial plane of `[B, C, H, W]` tensors.
//!
//! Conventions: the forward transform is unnormalized, the inverse carries
//! the `1/(H W)` factor. Only the half plane `kw in 0..W/2+1` is stored; the
//! rest follows from conjugate symmetry of a real signal's spectrum.
//!
//! On the autodiff tape a spectrum travels as a *packed* real tensor of shape
//! `[B, 2C, H, Wf]` where channel `2c` holds the real part and `2c + 1` the
//! imaginary part of input channel `c`.

mod fft;

use num_complex::Complex64;
use rayon::prelude::*;

pub use fft::FftPlan;

use crate::error::{shape_err, Result};
use crate::tensor::{dims4, Scalar, Tensor, Var};

/// Half-plane spectrum of a real `[B, C, H, W]` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum<T> {
    re: Tensor<T>,
    im: Tensor<T>,
    width: usize,
}

pub fn half_width(width: usize) -> usize {
    width / 2 + 1
}

impl<T: Scalar> Spectrum<T> {
    /// Builds a spectrum from `[B, C, H, W/2+1]` real and imaginary parts.
    pub fn new(re: Tensor<T>, im: Tensor<T>, width: usize) -> Result<Self> {
        let (_, _, _, wf) = dims4(re.shape(), "Spectrum")?;
        if re.shape() != im.shape() {
            return Err(shape_err!("re {:?} vs im {:?}", re.shape(), im.shape()));
        }
        if wf != half_width(width) {
            return Err(shape_err!("half width {wf} does not match signal width {width}"));
        }
        Ok(Self { re, im, width })
    }

    pub fn re(&self) -> &Tensor<T> {
        &self.re
    }

    pub fn im(&self) -> &Tensor<T> {
        &self.im
    }

    pub fn batch(&self) -> usize {
        self.re.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.re.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.re.shape()[2]
    }

    pub fn width_half(&self) -> usize {
        self.re.shape()[3]
    }

    /// Width of the real signal this spectrum came from.
    pub fn orig_width(&self) -> usize {
        self.width
    }

    /// Interleaved `[B, 2C, H, Wf]` layout used on the tape.
    pub fn to_packed(&self) -> Tensor<T> {
        let (b, c, h, wf) = (self.batch(), self.channels(), self.height(), self.width_half());
        let plane = h * wf;
        let mut out = vec![T::ZERO; 2 * self.re.numel()];
        for bc in 0..b * c {
            let src = bc * plane;
            out[2 * src..2 * src + plane].copy_from_slice(&self.re.data()[src..src + plane]);
            out[2 * src + plane..2 * src + 2 * plane].copy_from_slice(&self.im.data()[src..src + plane]);
        }
        Tensor::from_parts(vec![b, 2 * c, h, wf], out)
    }

    pub fn from_packed(packed: &Tensor<T>, width: usize) -> Result<Self> {
        let (b, c2, h, wf) = dims4(packed.shape(), "Spectrum::from_packed")?;
        if c2 % 2 != 0 {
            return Err(shape_err!("packed spectrum needs an even channel count, got {c2}"));
        }
        let c = c2 / 2;
        let plane = h * wf;
        let mut re = Vec::with_capacity(b * c * plane);
        let mut im = Vec::with_capacity(b * c * plane);
        for bc in 0..b * c {
            let d = &packed.data()[2 * bc * plane..2 * (bc + 1) * plane];
            re.extend_from_slice(&d[..plane]);
            im.extend_from_slice(&d[plane..]);
        }
        let shape = vec![b, c, h, wf];
        Self::new(
            Tensor::from_parts(shape.clone(), re),
            Tensor::from_parts(shape, im),
            width,
        )
    }

    /// Full `H x W` complex plane of `(b, c)`, reconstructed by conjugate
    /// symmetry, row-major.
    pub fn full_plane(&self, b: usize, c: usize) -> Vec<Complex64> {
        let (h, w, wf) = (self.height(), self.width, self.width_half());
        let base = (b * self.channels() + c) * h * wf;
        let at = |kh: usize, kw: usize| {
            let i = base + kh * wf + kw;
            Complex64::new(self.re.data()[i].to_f64(), self.im.data()[i].to_f64())
        };
        let mut out = Vec::with_capacity(h * w);
        for kh in 0..h {
            for kw in 0..w {
                out.push(if kw < wf {
                    at(kh, kw)
                } else {
                    at((h - kh) % h, w - kw).conj()
                });
            }
        }
        out
    }

    /// Largest `|im|` over the self-conjugate bins, which must be real.
    pub fn self_conjugate_residual(&self) -> f64 {
        let (h, w, wf) = (self.height(), self.width, self.width_half());
        let rows: Vec<usize> = if h % 2 == 0 { vec![0, h / 2] } else { vec![0] };
        let cols: Vec<usize> = if w % 2 == 0 { vec![0, w / 2] } else { vec![0] };
        let mut worst = 0.0f64;
        for bc in 0..self.batch() * self.channels() {
            for &kh in &rows {
                for &kw in &cols {
                    let v = self.im.data()[bc * h * wf + kh * wf + kw].to_f64().abs();
                    worst = worst.max(v);
                }
            }
        }
        worst
    }
}

struct Plans {
    h: usize,
    w: usize,
    rows: FftPlan,
    cols: FftPlan,
}

impl Plans {
    fn new(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            rows: FftPlan::new(w),
            cols: FftPlan::new(h),
        }
    }

    fn wf(&self) -> usize {
        half_width(self.w)
    }

    /// One real plane to its half spectrum.
    fn forward_plane(&self, src: &[f64], re: &mut [f64], im: &mut [f64]) {
        let (h, w, wf) = (self.h, self.w, self.wf());
        let mut half = vec![Complex64::new(0.0, 0.0); h * wf];
        let mut row = vec![Complex64::new(0.0, 0.0); w];
        for r in 0..h {
            for (dst, &v) in row.iter_mut().zip(&src[r * w..(r + 1) * w]) {
                *dst = Complex64::new(v, 0.0);
            }
            self.rows.forward(&mut row);
            half[r * wf..(r + 1) * wf].copy_from_slice(&row[..wf]);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); h];
        for kw in 0..wf {
            for r in 0..h {
                col[r] = half[r * wf + kw];
            }
            self.cols.forward(&mut col);
            for r in 0..h {
                re[r * wf + kw] = col[r].re;
                im[r * wf + kw] = col[r].im;
            }
        }
        // Self-conjugate bins of a real signal are exactly real.
        for kh in [0, h / 2] {
            if kh == 0 || h % 2 == 0 {
                im[kh * wf] = 0.0;
                if w % 2 == 0 {
                    im[kh * wf + w / 2] = 0.0;
                }
            }
        }
    }

    /// Half spectrum back to a real plane: the real part of the inverse DFT
    /// of the conjugate-symmetric extension, scaled by `1/(H W)`.
    fn inverse_plane(&self, re: &[f64], im: &[f64], dst: &mut [f64]) {
        let (h, w, wf) = (self.h, self.w, self.wf());
        let mut half = vec![Complex64::new(0.0, 0.0); h * wf];
        let mut col = vec![Complex64::new(0.0, 0.0); h];
        for kw in 0..wf {
            for r in 0..h {
                col[r] = Complex64::new(re[r * wf + kw], im[r * wf + kw]);
            }
            self.cols.inverse(&mut col);
            for r in 0..h {
                half[r * wf + kw] = col[r];
            }
        }
        let scale = 1.0 / (h * w) as f64;
        let mut row = vec![Complex64::new(0.0, 0.0); w];
        for r in 0..h {
            let y = &half[r * wf..(r + 1) * wf];
            row[..wf].copy_from_slice(y);
            for k in wf..w {
                row[k] = y[w - k].conj();
            }
            self.rows.inverse(&mut row);
            for (d, v) in dst[r * w..(r + 1) * w].iter_mut().zip(&row) {
                *d = v.re * scale;
            }
        }
    }
}

/// Half-plane multiplicity of column `kw`: 1 for self-paired columns (DC,
/// and Nyquist for even widths), 2 otherwise.
fn column_weight(kw: usize, width: usize) -> f64 {
    if kw == 0 || (width % 2 == 0 && kw == width / 2) {
        1.0
    } else {
        2.0
    }
}

/// Unnormalized forward 2D DFT of every `(b, c)` plane.
pub fn fft2<T: Scalar>(x: &Tensor<T>) -> Result<Spectrum<T>> {
    let (b, c, h, w) = dims4(x.shape(), "fft2")?;
    let plans = Plans::new(h, w);
    let wf = plans.wf();
    let mut re = vec![0.0f64; b * c * h * wf];
    let mut im = vec![0.0f64; b * c * h * wf];
    let src: Vec<f64> = x.data().iter().map(|v| v.to_f64()).collect();
    re.par_chunks_mut(h * wf)
        .zip(im.par_chunks_mut(h * wf))
        .zip(src.par_chunks(h * w))
        .for_each(|((re, im), src)| plans.forward_plane(src, re, im));
    let shape = vec![b, c, h, wf];
    Spectrum::new(
        Tensor::from_parts(shape.clone(), re.into_iter().map(T::from_f64).collect()),
        Tensor::from_parts(shape, im.into_iter().map(T::from_f64).collect()),
        w,
    )
}

/// Inverse 2D DFT with `1/(H W)` normalization; the output is real by
/// construction.
pub fn ifft2<T: Scalar>(s: &Spectrum<T>) -> Tensor<T> {
    let (b, c, h, w, wf) = (s.batch(), s.channels(), s.height(), s.orig_width(), s.width_half());
    let plans = Plans::new(h, w);
    let re: Vec<f64> = s.re.data().iter().map(|v| v.to_f64()).collect();
    let im: Vec<f64> = s.im.data().iter().map(|v| v.to_f64()).collect();
    let mut out = vec![0.0f64; b * c * h * w];
    out.par_chunks_mut(h * w)
        .zip(re.par_chunks(h * wf).zip(im.par_chunks(h * wf)))
        .for_each(|(dst, (re, im))| plans.inverse_plane(re, im, dst));
    Tensor::from_parts(vec![b, c, h, w], out.into_iter().map(T::from_f64).collect())
}

/// Per-channel circular convolution of `x: [B, C, H, W]` with `k: [C, H, W]`
/// through the convolution theorem.
pub fn circular_conv_fft<T: Scalar>(x: &Tensor<T>, k: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = dims4(x.shape(), "circular_conv_fft")?;
    if k.shape() != [c, h, w] {
        return Err(shape_err!(
            "kernel {:?} must match signal planes [{c}, {h}, {w}]",
            k.shape()
        ));
    }
    let xs = fft2(x)?;
    let ks = fft2(&k.reshape(&[1, c, h, w])?)?;
    let wf = xs.width_half();
    let plane = h * wf;
    let mut re = Vec::with_capacity(xs.re.numel());
    let mut im = Vec::with_capacity(xs.re.numel());
    for bi in 0..b {
        for ci in 0..c {
            for i in 0..plane {
                let xi = (bi * c + ci) * plane + i;
                let ki = ci * plane + i;
                let p = Complex64::new(xs.re.data()[xi].to_f64(), xs.im.data()[xi].to_f64())
                    * Complex64::new(ks.re.data()[ki].to_f64(), ks.im.data()[ki].to_f64());
                re.push(T::from_f64(p.re));
                im.push(T::from_f64(p.im));
            }
        }
    }
    let shape = vec![b, c, h, wf];
    Ok(ifft2(&Spectrum::new(
        Tensor::from_parts(shape.clone(), re),
        Tensor::from_parts(shape, im),
        w,
    )?))
}

/// Scales each packed-spectrum column `kw` by `f(kw)`.
fn scale_columns<T: Scalar>(packed: &Tensor<T>, f: impl Fn(usize) -> f64) -> Tensor<T> {
    let wf = packed.shape()[3];
    let d = packed
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| v * T::from_f64(f(i % wf)))
        .collect();
    Tensor::from_parts(packed.shape().to_vec(), d)
}

impl<'t, T: Scalar> Var<'t, T> {
    /// Forward real FFT: `[B, C, H, W] -> packed [B, 2C, H, W/2+1]`.
    pub fn rfft2(self) -> Result<Var<'t, T>> {
        let x = self.value();
        let (_, _, h, w) = dims4(x.shape(), "rfft2")?;
        let out = fft2(&x)?.to_packed();
        Ok(self.tape().record(
            out,
            &[self],
            Box::new(move |g, _| {
                // Adjoint: dx = H W * irfft2(G / weight).
                let hw = (h * w) as f64;
                let s = Spectrum::from_packed(&scale_columns(g, |kw| hw / column_weight(kw, w)), w)?;
                Ok(vec![Some(ifft2(&s))])
            }),
        ))
    }

    /// Inverse real FFT: packed `[B, 2C, H, Wf] -> [B, C, H, width]`.
    pub fn irfft2(self, width: usize) -> Result<Var<'t, T>> {
        let s = Spectrum::from_packed(&self.value(), width)?;
        let (h, w) = (s.height(), width);
        let out = ifft2(&s);
        Ok(self.tape().record(
            out,
            &[self],
            Box::new(move |g, _| {
                // Adjoint: d(re, im) = weight / (H W) * rfft2(g).
                let hw = (h * w) as f64;
                let packed = fft2(g)?.to_packed();
                Ok(vec![Some(scale_columns(&packed, |kw| column_weight(kw, w) / hw))])
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    #[test]
    fn constant_plane_is_dc_only() {
        let x = Tensor::<f64>::full(&[1, 1, 4, 4], 2.5);
        let s = fft2(&x).unwrap();
        assert_eq!(s.re().shape(), &[1, 1, 4, 3]);
        assert!((s.re().data()[0] - 40.0).abs() < 1e-12);
        let rest = s.re().data()[1..].iter().chain(s.im().data()).map(|v| v.abs()).fold(0.0, f64::max);
        assert!(rest < 1e-12);
    }

    #[test]
    fn dc_only_spectrum_inverts_to_constant() {
        let mut re = vec![0.0f64; 12];
        re[0] = 8.0;
        let s = Spectrum::new(
            Tensor::new(&[1, 1, 4, 3], re).unwrap(),
            Tensor::zeros(&[1, 1, 4, 3]),
            4,
        )
        .unwrap();
        let x = ifft2(&s);
        assert!(x.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn packed_layout_roundtrip() {
        let x = Tensor::<f64>::from_fn(&[2, 3, 4, 5], |i| (i as f64 * 0.7).sin());
        let s = fft2(&x).unwrap();
        let p = s.to_packed();
        assert_eq!(p.shape(), &[2, 6, 4, 3]);
        assert_eq!(Spectrum::from_packed(&p, 5).unwrap(), s);
        assert!(Spectrum::from_packed(&p, 7).is_err());
    }

    #[test]
    fn odd_sizes_roundtrip() {
        let x = Tensor::<f64>::from_fn(&[1, 2, 5, 7], |i| (i as f64 * 1.3).cos());
        let y = ifft2(&fft2(&x).unwrap());
        assert!(x.max_abs_diff(&y) < 1e-12);
        assert_eq!(fft2(&x).unwrap().self_conjugate_residual(), 0.0);
    }

    #[test]
    fn kernel_shape_mismatch_is_error() {
        let x = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
        assert!(circular_conv_fft(&x, &Tensor::zeros(&[2, 3, 3])).is_err());
    }

    #[test]
    fn irfft2_discards_imaginary_residue_consistently() {
        // Arbitrary (non-Hermitian) packed input: forward value and adjoint
        // must describe the same real-linear map.
        let tape = Tape::<f64>::new();
        let p = Tensor::from_fn(&[1, 2, 4, 3], |i| ((i * 7 % 11) as f64 - 5.0) / 3.0);
        let r = Tensor::from_fn(&[1, 1, 4, 4], |i| ((i * 5 % 13) as f64 - 6.0) / 4.0);
        let pv = tape.leaf(p.clone());
        let rv = tape.constant(r.clone());
        let loss = pv.irfft2(4).unwrap().mul(rv).unwrap().sum();
        let g = tape.backward(loss).unwrap().wrt(pv);
        // <g, p> equals the loss since the map is linear.
        let lhs: f64 = g.data().iter().zip(p.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - loss.value().item().unwrap()).abs() < 1e-12);
    }
}
