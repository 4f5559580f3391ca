mod common;

use afidaf_core::blocks::{
    AttentionConv, Block, BlockConfig, BlockKind, DualBlock, FourierConv, FourierMask, Gsmlp, HierBlock,
    ImageFilter, Mixer,
};
use afidaf_core::ops::{conv2d, group_shuffle, layer_norm, LAYER_NORM_EPS};
use afidaf_core::params::{Bound, Conv, Init, ParamStore};
use afidaf_core::spectral::{fft2, ifft2, Spectrum};
use afidaf_core::tensor::{gelu, grad_check};
use afidaf_core::{Scalar, Tape, Tensor};
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn build<T: Scalar, B>(seed: u64, f: impl FnOnce(&mut Init<'_, T>) -> B) -> (ParamStore<T>, B) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = f(&mut Init::new(&mut store, &mut rng));
    (store, b)
}

/// Replaces every parameter with uniform noise so no weight sits at a
/// degenerate initial value (zero biases, unit gains).
fn randomize(store: &mut ParamStore<f64>, seed: u64, amp: f64) {
    let mut r = rng(seed);
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let shape = store.get(id).value.shape().to_vec();
        let t = rand_tensor(&mut r, &shape).map(|v| v * amp);
        store.set(id, t).unwrap();
    }
}

fn eval<T: Scalar>(
    store: &ParamStore<T>,
    x: &Tensor<T>,
    f: impl for<'t> Fn(&Bound<'t, T>, afidaf_core::Var<'t, T>) -> afidaf_core::Result<afidaf_core::Var<'t, T>>,
) -> Tensor<T> {
    let tape = Tape::new();
    let p = store.bind_frozen(&tape);
    let y = f(&p, tape.constant(x.clone())).unwrap();
    (*y.value()).clone()
}

fn cfg(kind: BlockKind, c: usize) -> BlockConfig {
    BlockConfig::new(kind, c).resolved()
}

fn set(store: &mut ParamStore<f64>, conv: &Conv, w: impl Fn(&[usize]) -> f64) {
    let shape = conv.spec.weight_shape();
    let strides = [shape[1] * shape[2] * shape[3], shape[2] * shape[3], shape[3], 1];
    let t = Tensor::from_fn(&shape, |i| {
        let idx: Vec<usize> = (0..4).map(|d| i / strides[d] % shape[d]).collect();
        w(&idx)
    });
    store.set(conv.weight, t).unwrap();
    if let Some(b) = conv.bias {
        store.set(b, Tensor::zeros(&[conv.spec.out_ch])).unwrap();
    }
}

fn centered_delta(conv: &Conv) -> impl Fn(&[usize]) -> f64 {
    let (kh, kw) = conv.spec.kernel;
    move |i: &[usize]| if i[2] == kh / 2 && i[3] == kw / 2 { 1.0 } else { 0.0 }
}

/// Central-difference check of `sum(proj * f(x))` w.r.t. the input and
/// every parameter tensor, at three random points. Points whose
/// perturbations come within 1e-3 of a ReLU kink are redrawn.
fn check_all<B>(
    label: &str,
    seed: u64,
    shape: &[usize],
    make: impl Fn(&mut Init<'_, f64>) -> B,
    f: impl for<'t> Fn(&B, &Bound<'t, f64>, afidaf_core::Var<'t, f64>) -> afidaf_core::Result<afidaf_core::Var<'t, f64>>,
) {
    let mut accepted = 0;
    let mut attempt = 0;
    while accepted < 3 {
        attempt += 1;
        assert!(attempt < 30, "{label}: could not find kink-free points");
        let s = seed * 1000 + attempt;
        let (mut store, block) = build(s, &make);
        randomize(&mut store, s, 0.5);
        let mut r = rng(s);
        let x = rand_tensor(&mut r, shape);
        let out_shape = eval(&store, &x, |p, v| f(&block, p, v)).shape().to_vec();
        let proj = rand_tensor(&mut r, &out_shape);

        let mut worst = 0.0f64;
        let mut kinked = false;
        let rep = grad_check(
            |t, v| Ok(f(&block, &store.bind_frozen(t), v)?.mul(t.constant(proj.clone()))?.sum()),
            &x,
            1e-5,
        )
        .unwrap();
        kinked |= rep.kink_margin < 1e-3;
        worst = worst.max(rep.max_rel_error);
        for (id, param) in store.iter() {
            let rep = grad_check(
                |t, v| {
                    let mut p = store.bind_frozen(t);
                    p.replace(id, v);
                    Ok(f(&block, &p, t.constant(x.clone()))?.mul(t.constant(proj.clone()))?.sum())
                },
                &param.value,
                1e-5,
            )
            .unwrap();
            kinked |= rep.kink_margin < 1e-3;
            if !kinked {
                assert!(rep.max_rel_error < 1e-5, "{label} wrt {}: {rep:?}", param.name);
            }
            worst = worst.max(rep.max_rel_error);
        }
        if kinked {
            continue;
        }
        assert!(worst < 1e-5, "{label}: {worst}");
        accepted += 1;
    }
}

#[test]
fn attention_conv_shape_and_delta_identity() {
    let c = cfg(BlockKind::Afidaf, 32);
    let (store, m) = build::<f32, _>(1, |i| AttentionConv::new(i, &c).unwrap());
    let x = Tensor::<f32>::randn(&[2, 32, 16, 16], 1.0, &mut rng(2));
    assert_eq!(eval(&store, &x, |p, v| m.forward(p, v)).shape(), &[2, 32, 16, 16]);

    let mut c1 = BlockConfig::new(BlockKind::Afidaf, 8);
    c1.shuffle_groups = 1;
    let (mut store, m) = build::<f64, _>(1, |i| AttentionConv::new(i, &c1).unwrap());
    set(&mut store, &m.dw, centered_delta(&m.dw));
    set(&mut store, &m.dwd, centered_delta(&m.dwd));
    set(&mut store, &m.pw, |i| if i[0] == i[1] { 1.0 } else { 0.0 });
    let x = rand_tensor(&mut rng(3), &[1, 8, 9, 9]);
    assert!(eval(&store, &x, |p, v| m.forward(p, v)).bit_eq(&x));
}

#[test]
fn attention_conv_matches_op_composition() {
    let c = cfg(BlockKind::Afidaf, 16);
    let (mut store, m) = build::<f64, _>(4, |i| AttentionConv::new(i, &c).unwrap());
    randomize(&mut store, 4, 1.0);
    let x = rand_tensor(&mut rng(5), &[2, 16, 12, 12]);
    let w = |conv: &Conv| store.get(conv.weight).value.clone();
    let b = |conv: &Conv| store.get(conv.bias.unwrap()).value.clone();
    let h = conv2d(&x, &m.dw.spec, &w(&m.dw), Some(&b(&m.dw))).unwrap();
    let h = group_shuffle(&h, 4).unwrap();
    let h = conv2d(&h, &m.dwd.spec, &w(&m.dwd), Some(&b(&m.dwd))).unwrap();
    let h = group_shuffle(&h, 4).unwrap();
    let want = conv2d(&h, &m.pw.spec, &w(&m.pw), Some(&b(&m.pw))).unwrap();
    assert_eq!(m.dw.spec.kernel, (5, 5));
    assert_eq!((m.dwd.spec.kernel, m.dwd.spec.dilation), ((7, 7), (3, 3)));
    assert_eq!(m.pw.spec.groups, 4);
    assert!(eval(&store, &x, |p, v| m.forward(p, v)).bit_eq(&want));
}

#[test]
fn image_filter_shape_and_zero_gate() {
    let c = cfg(BlockKind::Afidaf, 96);
    let (store, m) = build::<f32, _>(6, |i| ImageFilter::new(i, &c).unwrap());
    let x = Tensor::<f32>::randn(&[1, 96, 32, 32], 1.0, &mut rng(7));
    assert_eq!(eval(&store, &x, |p, v| m.forward(p, v)).shape(), &[1, 96, 32, 32]);

    let c = cfg(BlockKind::Afidaf, 8);
    let (mut store, m) = build::<f64, _>(6, |i| ImageFilter::new(i, &c).unwrap());
    randomize(&mut store, 6, 1.0);
    set(&mut store, &m.attn.pw, |_| 0.0);
    set(&mut store, &m.proj_out, |_| 0.5);
    let x = rand_tensor(&mut rng(8), &[2, 8, 6, 6]);
    assert!(eval(&store, &x, |p, v| m.forward(p, v)).bit_eq(&x));
}

fn mask_oracle(store: &ParamStore<f64>, m: &FourierMask, x: &Tensor<f64>) -> Tensor<f64> {
    let s = fft2(x).unwrap().to_packed();
    let w = |conv: &Conv| store.get(conv.weight).value.clone();
    let b = |conv: &Conv| store.get(conv.bias.unwrap()).value.clone();
    let h = conv2d(&s, &m.fc1.spec, &w(&m.fc1), Some(&b(&m.fc1))).unwrap().map(|v| v.max(0.0));
    let mask = conv2d(&h, &m.fc2.spec, &w(&m.fc2), Some(&b(&m.fc2))).unwrap();
    let masked = mask.zip_map(&s, |a, b| a * b).unwrap();
    ifft2(&Spectrum::from_packed(&masked, x.shape()[3]).unwrap())
}

#[test]
fn fourier_mask_identity_zero_and_oracle() {
    let c = cfg(BlockKind::Aff, 8);
    let (mut store, m) = build::<f64, _>(9, |i| FourierMask::new(i, &c).unwrap());
    let x = rand_tensor(&mut rng(10), &[2, 8, 8, 6]);

    set(&mut store, &m.fc1, |_| 0.0);
    set(&mut store, &m.fc2, |_| 0.0);
    store.set(m.fc2.bias.unwrap(), Tensor::ones(&[16])).unwrap();
    assert!(eval(&store, &x, |p, v| m.forward(p, v)).max_abs_diff(&x) < 1e-10);

    store.set(m.fc2.bias.unwrap(), Tensor::zeros(&[16])).unwrap();
    assert_eq!(eval(&store, &x, |p, v| m.forward(p, v)).max_abs(), 0.0);

    randomize(&mut store, 11, 1.0);
    let got = eval(&store, &x, |p, v| m.forward(p, v));
    assert!(got.max_abs_diff(&mask_oracle(&store, &m, &x)) < 1e-9);
    assert!(got.all_finite());
}

#[test]
fn fourier_mask_output_is_hermitian_projection() {
    // The inverse keeps the real part of the full-plane inverse of the
    // conjugate-symmetric extension, i.e. it projects the masked spectrum
    // onto its Hermitian part. Check that against a naive full inverse.
    let c = cfg(BlockKind::Aff, 2);
    let (mut store, m) = build::<f64, _>(12, |i| FourierMask::new(i, &c).unwrap());
    randomize(&mut store, 12, 1.0);
    let (h, w) = (4, 6);
    let x = rand_tensor(&mut rng(13), &[1, 2, h, w]);
    let got = eval(&store, &x, |p, v| m.forward(p, v));

    let tape = Tape::new();
    let p = store.bind_frozen(&tape);
    let packed = tape.constant(fft2(&x).unwrap().to_packed());
    let masked = m.mask(&p, packed).unwrap().mul(packed).unwrap();
    let s = Spectrum::from_packed(&masked.value(), w).unwrap();
    for ch in 0..2 {
        let full = s.full_plane(0, ch);
        for n in 0..h {
            for k in 0..w {
                let mut acc = 0.0;
                for a in 0..h {
                    for b in 0..w {
                        let th = 2.0 * std::f64::consts::PI * ((a * n) as f64 / h as f64 + (b * k) as f64 / w as f64);
                        let z = full[a * w + b];
                        acc += z.re * th.cos() - z.im * th.sin();
                    }
                }
                let want = acc / (h * w) as f64;
                assert!((got.get(&[0, ch, n, k]).unwrap() - want).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn mask_is_frequency_identity() {
    let c = cfg(BlockKind::Aff, 4);
    let (mut store, m) = build::<f64, _>(14, |i| FourierMask::new(i, &c).unwrap());
    randomize(&mut store, 14, 1.0);
    let mut r = rng(15);
    let mut spec = rand_tensor(&mut r, &[1, 8, 5, 3]);
    // copy the channel vector of bin (0, 1) into bin (3, 2)
    let mut data = spec.data().to_vec();
    for ch in 0..8 {
        data[(ch * 5 + 3) * 3 + 2] = data[ch * 15 + 1];
    }
    spec = Tensor::new(&[1, 8, 5, 3], data).unwrap();
    let mask = eval(&store, &spec, |p, v| m.mask(p, v));
    for ch in 0..8 {
        assert_eq!(mask.get(&[0, ch, 0, 1]).unwrap(), mask.get(&[0, ch, 3, 2]).unwrap());
    }
    // permuting bins permutes the mask the same way
    let flipped = spec.permute(&[0, 1, 3, 2]).unwrap();
    let mask_t = eval(&store, &flipped, |p, v| m.mask(p, v));
    assert!(mask_t.bit_eq(&mask.permute(&[0, 1, 3, 2]).unwrap()));
}

#[test]
fn fourier_conv_delta_identity_and_oracle() {
    let c = cfg(BlockKind::HafidafConv, 96);
    let (store, m) = build::<f32, _>(16, |i| FourierConv::new(i, &c).unwrap());
    let x = Tensor::<f32>::randn(&[1, 96, 16, 16], 1.0, &mut rng(17));
    assert_eq!(eval(&store, &x, |p, v| m.forward(p, v)).shape(), &[1, 96, 16, 16]);

    let c = cfg(BlockKind::HafidafConv, 4);
    let (mut store, m) = build::<f64, _>(16, |i| FourierConv::new(i, &c).unwrap());
    assert_eq!(m.conv.spec.weight_shape(), [8, 2, 3, 3]);
    set(&mut store, &m.conv, |i| if i[0] % 2 == i[1] && i[2] == 1 && i[3] == 1 { 1.0 } else { 0.0 });
    let x = rand_tensor(&mut rng(18), &[2, 4, 8, 7]);
    assert!(eval(&store, &x, |p, v| m.forward(p, v)).max_abs_diff(&x) < 1e-10);

    randomize(&mut store, 19, 1.0);
    let s = fft2(&x).unwrap().to_packed();
    let y = conv2d(&s, &m.conv.spec, &store.get(m.conv.weight).value, None).unwrap();
    let want = ifft2(&Spectrum::from_packed(&y, 7).unwrap());
    assert!(eval(&store, &x, |p, v| m.forward(p, v)).max_abs_diff(&want) < 1e-9);
}

#[test]
fn gsmlp_count_and_identity() {
    let (store, _) = build::<f32, _>(20, |i| Gsmlp::new(i, 96, 2, 4).unwrap());
    let (c, r, g) = (96usize, 2usize, 4usize);
    assert_eq!(store.count(), 2 * r * c * c / g + r * c + c);

    let (mut store, m) = build::<f64, _>(21, |i| Gsmlp::new(i, 6, 1, 1).unwrap());
    set(&mut store, &m.fc1, |i| if i[0] == i[1] { 1.0 } else { 0.0 });
    set(&mut store, &m.fc2, |i| if i[0] == i[1] { 1.0 } else { 0.0 });
    let x = rand_tensor(&mut rng(22), &[1, 6, 3, 3]);
    // identity weights leave the core equal to GELU; the residual adds x
    let core = eval(&store, &x, |p, v| m.forward(p, v));
    assert!(core.bit_eq(&x.map(gelu)));
}

#[test]
fn dual_block_kinds_are_sub_configurations() {
    let x = rand_tensor(&mut rng(23), &[2, 8, 8, 8]);
    for kind in [BlockKind::Afidaf, BlockKind::Idaf, BlockKind::Aff] {
        let mut c = cfg(kind, 8);
        c.ffn = false;
        let (mut store, b) = build::<f64, _>(24, |i| DualBlock::new(i, &c).unwrap());
        randomize(&mut store, 24, 0.7);
        let y = eval(&store, &x, |p, v| b.forward(p, v));
        let ln = |n: &afidaf_core::params::Norm, t: &Tensor<f64>| {
            layer_norm(t, 1..2, &store.get(n.gamma).value, &store.get(n.beta).value, LAYER_NORM_EPS).unwrap()
        };
        let mut h = x.clone();
        if let (Some(n), Some(mi)) = (&b.norm1, &b.image) {
            h = eval(&store, &ln(n, &h), |p, v| mi.forward(p, v));
        }
        if let (Some(n), Some(mc)) = (&b.norm2, &b.fourier) {
            h = eval(&store, &ln(n, &h), |p, v| mc.forward(p, v));
        }
        let want = h.zip_map(&x, |a, b| a + b).unwrap();
        assert!(y.bit_eq(&want), "{kind:?}");
        assert_eq!(b.image.is_some(), kind != BlockKind::Aff);
        assert_eq!(b.fourier.is_some(), kind != BlockKind::Idaf);
    }
}

#[test]
fn aff_block_with_identity_mask_degenerates() {
    let mut c = cfg(BlockKind::Aff, 8);
    c.ffn = false;
    let (mut store, b) = build::<f64, _>(25, |i| DualBlock::new(i, &c).unwrap());
    let mc = b.fourier.as_ref().unwrap();
    set(&mut store, &mc.fc1, |_| 0.0);
    set(&mut store, &mc.fc2, |_| 0.0);
    store.set(mc.fc2.bias.unwrap(), Tensor::ones(&[16])).unwrap();
    let x = rand_tensor(&mut rng(26), &[1, 8, 6, 6]);
    let y = eval(&store, &x, |p, v| b.forward(p, v));
    let n = layer_norm(&x, 1..2, &Tensor::ones(&[8]), &Tensor::zeros(&[8]), LAYER_NORM_EPS).unwrap();
    assert!(y.max_abs_diff(&x.zip_map(&n, |a, b| a + b).unwrap()) < 1e-10);
}

#[test]
fn afidaf_block_shape() {
    let c = cfg(BlockKind::Afidaf, 128);
    let (store, b) = build::<f32, _>(27, |i| Block::new(i, &c, 0).unwrap());
    let x = Tensor::<f32>::randn(&[2, 128, 32, 32], 1.0, &mut rng(28));
    let y = eval(&store, &x, |p, v| b.forward(p, v));
    assert_eq!(y.shape(), &[2, 128, 32, 32]);
    assert!(y.all_finite());
}

#[test]
fn fourier_mask_block_matches_aff_filter() {
    let c = cfg(BlockKind::HafidafMask, 8);
    let (mut hs, hb) = build::<f64, _>(29, |i| HierBlock::new(i, &c, 0).unwrap());
    randomize(&mut hs, 29, 1.0);
    let Mixer::Mask(fm) = &hb.mixer else { panic!("mask block without mask mixer") };
    let (mut s2, m2) = build::<f64, _>(30, |i| FourierMask::new(i, &c).unwrap());
    for (a, b) in [(&fm.fc1, &m2.fc1), (&fm.fc2, &m2.fc2)] {
        s2.set(b.weight, hs.get(a.weight).value.clone()).unwrap();
        s2.set(b.bias.unwrap(), hs.get(a.bias.unwrap()).value.clone()).unwrap();
    }
    let x = rand_tensor(&mut rng(31), &[1, 8, 7, 7]);
    let y1 = eval(&hs, &x, |p, v| hb.mixer.forward(p, v));
    let y2 = eval(&s2, &x, |p, v| m2.forward(p, v));
    assert!(y1.bit_eq(&y2));
}

#[test]
fn hierarchical_dispatch_and_stage_shapes() {
    let c = cfg(BlockKind::HafidafConv, 8);
    let (store, blocks) = build::<f32, _>(32, |i| {
        (0..4).map(|k| HierBlock::new(&mut i.scope(k), &c, k).unwrap()).collect::<Vec<_>>()
    });
    for (k, b) in blocks.iter().enumerate() {
        match &b.mixer {
            Mixer::Spatial(a) => {
                assert_eq!(k % 2, 0);
                assert_eq!(store.get(a.dw.weight).value.shape(), &[8, 1, 5, 5]);
            }
            Mixer::Fourier(f) => {
                assert_eq!(k % 2, 1);
                assert_eq!(store.get(f.conv.weight).value.shape(), &[16, 2, 3, 3]);
            }
            Mixer::Mask(_) => panic!("conv block built a mask mixer"),
        }
    }
    for res in [56, 28, 14, 7] {
        let x = Tensor::<f32>::randn(&[1, 8, res, res], 1.0, &mut rng(res as u64));
        for b in &blocks[..2] {
            assert_eq!(eval(&store, &x, |p, v| b.forward(p, v)).shape(), &[1, 8, res, res]);
        }
    }
    let cm = cfg(BlockKind::HafidafMask, 16);
    let (store, b) = build::<f32, _>(33, |i| HierBlock::new(i, &cm, 0).unwrap());
    let x = Tensor::<f32>::randn(&[1, 16, 7, 7], 1.0, &mut rng(34));
    assert_eq!(eval(&store, &x, |p, v| b.forward(p, v)).shape(), &[1, 16, 7, 7]);
}

#[test]
fn gradients_image_filter() {
    let c = cfg(BlockKind::Afidaf, 4);
    check_all("m_i", 1, &[1, 4, 6, 6], |i| ImageFilter::new(i, &c).unwrap(), |m, p, x| m.forward(p, x));
}

#[test]
fn gradients_fourier_mask() {
    let mut c = cfg(BlockKind::Aff, 4);
    c.mask_groups = 2;
    check_all("m_c", 2, &[2, 4, 4, 5], |i| FourierMask::new(i, &c).unwrap(), |m, p, x| m.forward(p, x));
}

#[test]
fn gradients_fourier_conv() {
    let c = cfg(BlockKind::HafidafConv, 3);
    check_all("f_conv", 3, &[1, 3, 5, 6], |i| FourierConv::new(i, &c).unwrap(), |m, p, x| m.forward(p, x));
}

#[test]
fn gradients_gsmlp() {
    check_all("gsmlp", 4, &[2, 4, 3, 3], |i| Gsmlp::new(i, 4, 2, 2).unwrap(), |m, p, x| m.forward(p, x));
}

#[test]
fn gradients_dual_blocks() {
    for (k, kind) in [BlockKind::Afidaf, BlockKind::Idaf, BlockKind::Aff].into_iter().enumerate() {
        let mut c = cfg(kind, 4);
        c.mlp_ratio = 2;
        check_all(&format!("{kind:?}"), 5 + k as u64, &[1, 4, 6, 6], |i| Block::new(i, &c, 0).unwrap(), |m, p, x| {
            m.forward(p, x)
        });
    }
}

#[test]
fn gradients_hierarchical_blocks() {
    let mut c = cfg(BlockKind::HafidafConv, 4);
    c.mlp_ratio = 2;
    for index in [0, 1] {
        check_all(&format!("conv{index}"), 10 + index as u64, &[1, 4, 6, 6], |i| Block::new(i, &c, index).unwrap(), |m, p, x| {
            m.forward(p, x)
        });
    }
    let mut c = cfg(BlockKind::HafidafMask, 4);
    c.mlp_ratio = 2;
    check_all("mask", 12, &[1, 4, 5, 5], |i| Block::new(i, &c, 0).unwrap(), |m, p, x| m.forward(p, x));
}

#[test]
fn gradient_of_classification_loss_through_two_blocks() {
    let c = cfg(BlockKind::Afidaf, 4);
    let (mut store, blocks) = build::<f64, _>(40, |i| {
        (0..2).map(|k| Block::new(&mut i.scope(k), &c, k).unwrap()).collect::<Vec<_>>()
    });
    randomize(&mut store, 40, 0.5);
    let x = rand_tensor(&mut rng(41), &[2, 4, 5, 5]);
    let labels = [1, 3];
    let rep = grad_check(
        |t, v| {
            let p = store.bind_frozen(t);
            let mut h = v;
            for b in &blocks {
                h = b.forward(&p, h)?;
            }
            h.global_avg_pool()?.softmax_cross_entropy(&labels)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(rep.max_rel_error < 1e-5, "{rep:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn blocks_preserve_shape(
        kind in prop::sample::select(vec![BlockKind::Afidaf, BlockKind::Idaf, BlockKind::Aff, BlockKind::HafidafConv, BlockKind::HafidafMask]),
        c in prop::sample::select(vec![2usize, 4, 6, 8]),
        b in 1usize..3, h in 2usize..9, w in 2usize..9, index in 0usize..3, seed in any::<u64>(),
    ) {
        let cfg = BlockConfig::new(kind, c).resolved();
        let (store, blk) = build::<f64, _>(seed, |i| Block::new(i, &cfg, index).unwrap());
        let x = rand_tensor(&mut rng(seed), &[b, c, h, w]);
        let y = eval(&store, &x, |p, v| blk.forward(p, v));
        prop_assert_eq!(y.shape(), x.shape());
        prop_assert!(y.all_finite());
    }
}
