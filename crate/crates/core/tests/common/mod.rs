//! Independent reference implementations used as test oracles. None of
//! these call into the library's kernels.
#![allow(dead_code)]

use afidaf_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn rand_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::new(shape, rand_vec(rng, shape.iter().product())).unwrap()
}

/// Naive double-sum DFT of an `h x w` real plane; returns (re, im) full plane.
pub fn naive_dft2(x: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut re = vec![0.0; h * w];
    let mut im = vec![0.0; h * w];
    for kh in 0..h {
        for kw in 0..w {
            let (mut sr, mut si) = (0.0, 0.0);
            for n in 0..h {
                for m in 0..w {
                    let th = 2.0 * PI * ((kh * n) as f64 / h as f64 + (kw * m) as f64 / w as f64);
                    sr += x[n * w + m] * th.cos();
                    si -= x[n * w + m] * th.sin();
                }
            }
            re[kh * w + kw] = sr;
            im[kh * w + kw] = si;
        }
    }
    (re, im)
}

/// Direct circular convolution of one plane: `y[n] = sum_m x[m] k[n - m]`.
pub fn circular_conv(x: &[f64], k: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut y = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let mut s = 0.0;
            for a in 0..h {
                for b in 0..w {
                    s += x[a * w + b] * k[((i + h - a) % h) * w + (j + w - b) % w];
                }
            }
            y[i * w + j] = s;
        }
    }
    y
}

pub struct Conv {
    pub stride: usize,
    pub dilation: usize,
    pub pad: usize,
    pub groups: usize,
}

/// Six-loop cross-correlation with zero padding.
pub fn naive_conv2d(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    bias: Option<&[f64]>,
    c: &Conv,
) -> Tensor<f64> {
    let (b, cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (cout, cin_g, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    let cout_g = cout / c.groups;
    let ho = (h + 2 * c.pad - c.dilation * (kh - 1) - 1) / c.stride + 1;
    let wo = (wd + 2 * c.pad - c.dilation * (kw - 1) - 1) / c.stride + 1;
    let mut out = vec![0.0; b * cout * ho * wo];
    for bi in 0..b {
        for oc in 0..cout {
            let g = oc / cout_g;
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut s = bias.map_or(0.0, |bb| bb[oc]);
                    for icl in 0..cin_g {
                        let ic = g * cin_g + icl;
                        for i in 0..kh {
                            for j in 0..kw {
                                let ih = (oh * c.stride + i * c.dilation) as isize - c.pad as isize;
                                let iw = (ow * c.stride + j * c.dilation) as isize - c.pad as isize;
                                if ih < 0 || iw < 0 || ih >= h as isize || iw >= wd as isize {
                                    continue;
                                }
                                s += w.get(&[oc, icl, i, j]).unwrap()
                                    * x.get(&[bi, ic, ih as usize, iw as usize]).unwrap();
                            }
                        }
                    }
                    out[((bi * cout + oc) * ho + oh) * wo + ow] = s;
                }
            }
        }
    }
    let _ = cin;
    Tensor::new(&[b, cout, ho, wo], out).unwrap()
}

pub fn triple_loop_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

/// Random scalar loss weights for reducing a tensor output to a scalar.
pub fn projection(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    rand_tensor(rng, shape)
}
