//! Self-check suites behind `afidaf verify`.
//!
//! Every check compares the library against a slow reference (naive DFT,
//! direct convolution, loop-level formulas) or against central differences,
//! and reports the measured error next to its tolerance.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocks::{Block, BlockConfig, BlockKind, FourierConv, FourierMask, Gsmlp, ImageFilter};
use crate::error::{Error, Result};
use crate::models::top_k_accuracy;
use crate::ops::{
    conv2d, group_linear, group_shuffle, layer_norm, linear, shuffle_permutation, softmax_cross_entropy,
    Conv2dSpec, Padding,
};
use crate::params::{Bound, Init, ParamStore};
use crate::spectral::{circular_conv_fft, fft2, ifft2};
use crate::tensor::{grad_check, matmul, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Grad,
    Spectral,
    Shuffle,
    Oracle,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 5] = ["grad", "spectral", "shuffle", "oracle", "all"];
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "grad" => Suite::Grad,
            "spectral" => Suite::Spectral,
            "shuffle" => Suite::Shuffle,
            "oracle" => Suite::Oracle,
            "all" => Suite::All,
            _ => return Err(Error::Config(format!("unknown suite {s:?}"))),
        })
    }
}

/// Outcome of one check. `error` is the measured discrepancy; a check
/// passes when it ran and `error < tol`.
#[derive(Clone, Debug)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub error: f64,
    pub tol: f64,
    pub failure: Option<String>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.error < self.tol
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        match &self.failure {
            Some(m) => write!(f, "{status} {}/{}: {m}", self.suite, self.name),
            None => write!(f, "{status} {}/{}: err {:.3e} (tol {:.0e})", self.suite, self.name, self.error, self.tol),
        }
    }
}

struct Report {
    suite: &'static str,
    checks: Vec<Check>,
}

impl Report {
    fn new(suite: &'static str) -> Self {
        Self { suite, checks: Vec::new() }
    }

    fn record(&mut self, name: impl Into<String>, tol: f64, r: Result<f64>) {
        let (error, failure) = match r {
            Ok(e) if e.is_nan() => (e, Some("measured error is NaN".to_string())),
            Ok(e) => (e, None),
            Err(e) => (f64::INFINITY, Some(e.to_string())),
        };
        self.checks.push(Check { suite: self.suite, name: name.into(), error, tol, failure });
    }

    /// Boolean property; error is 0 when it holds and 1 otherwise.
    fn holds(&mut self, name: impl Into<String>, ok: bool) {
        self.record(name, 0.5, Ok(if ok { 0.0 } else { 1.0 }));
    }
}

/// Runs one suite (or all of them) and returns every check.
pub fn run(suite: Suite) -> Vec<Check> {
    match suite {
        Suite::Grad => grad_suite(),
        Suite::Spectral => spectral_suite(),
        Suite::Shuffle => shuffle_suite(),
        Suite::Oracle => oracle_suite(),
        Suite::All => [spectral_suite(), shuffle_suite(), oracle_suite(), grad_suite()].concat(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_tensor(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| r.gen_range(-1.0..1.0))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------- spectral

fn naive_dft(x: &[f64], h: usize, w: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(h * w);
    for kh in 0..h {
        for kw in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for n in 0..h {
                for m in 0..w {
                    let t = 2.0 * PI * ((kh * n) as f64 / h as f64 + (kw * m) as f64 / w as f64);
                    re += x[n * w + m] * t.cos();
                    im -= x[n * w + m] * t.sin();
                }
            }
            out.push((re, im));
        }
    }
    out
}

fn direct_circular(x: &[f64], k: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut y = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            for a in 0..h {
                for b in 0..w {
                    y[i * w + j] += x[a * w + b] * k[((i + h - a) % h) * w + (j + w - b) % w];
                }
            }
        }
    }
    y
}

fn spectral_suite() -> Vec<Check> {
    let mut rep = Report::new("spectral");
    let mut r = rng(11);
    for (h, w) in [(4, 4), (8, 8), (5, 6), (7, 3)] {
        let x = rand_tensor(&mut r, &[1, 1, h, w]);
        rep.record(
            format!("dft_{h}x{w}"),
            1e-9,
            fft2(&x).map(|s| {
                let full = s.full_plane(0, 0);
                let naive = naive_dft(x.data(), h, w);
                full.iter()
                    .zip(&naive)
                    .map(|(a, &(re, im))| (a.re - re).abs().max((a.im - im).abs()))
                    .fold(0.0, f64::max)
            }),
        );
    }
    for (h, w) in [(8, 8), (16, 16), (12, 10)] {
        let x = rand_tensor(&mut r, &[2, 3, h, w]);
        rep.record(format!("roundtrip_{h}x{w}"), 1e-10, fft2(&x).map(|s| ifft2(&s).max_abs_diff(&x)));
        rep.record(
            format!("parseval_{h}x{w}"),
            1e-10,
            fft2(&x).map(|s| {
                let (b, c) = (2, 3);
                let mut energy = 0.0;
                for bi in 0..b {
                    for ci in 0..c {
                        energy += s.full_plane(bi, ci).iter().map(|z| z.norm_sqr()).sum::<f64>();
                    }
                }
                let direct: f64 = x.data().iter().map(|v| v * v).sum();
                (energy / (h * w) as f64 - direct).abs() / direct
            }),
        );
    }
    let mut worst = 0.0f64;
    let mut failure = None;
    for pair in 0..50 {
        let n = [4, 8, 16][pair % 3];
        let x = rand_tensor(&mut r, &[1, 1, n, n]);
        let k = rand_tensor(&mut r, &[1, n, n]);
        match circular_conv_fft(&x, &k) {
            Ok(y) => worst = worst.max(max_diff(y.data(), &direct_circular(x.data(), k.data(), n, n))),
            Err(e) => failure = Some(e),
        }
    }
    rep.record("convolution_theorem_50_pairs", 1e-9, failure.map_or(Ok(worst), Err));
    rep.checks
}

// ----------------------------------------------------------------- shuffle

fn shuffle_suite() -> Vec<Check> {
    let mut rep = Report::new("shuffle");
    let mut bijective = true;
    let mut inverse = true;
    let mut trivial = true;
    let mut moves = true;
    for c in 1..=32 {
        for g in (1..=c).filter(|g| c % g == 0) {
            let Ok(p) = shuffle_permutation(c, g) else {
                bijective = false;
                continue;
            };
            let mut seen = vec![false; c];
            p.iter().for_each(|&s| seen[s] = true);
            bijective &= seen.iter().all(|&s| s);
            let q = shuffle_permutation(c, c / g).unwrap_or_default();
            inverse &= q.len() == c && (0..c).all(|k| p[q[k]] == k);
            if g == 1 || g == c {
                trivial &= p.iter().enumerate().all(|(i, &s)| i == s);
            }
            let x = Tensor::<f64>::from_fn(&[2, c, 1, 1], |i| i as f64);
            let back = group_shuffle(&x, g).and_then(|y| group_shuffle(&y, c / g));
            inverse &= back.is_ok_and(|b| b.bit_eq(&x));
            if let Ok(y) = group_shuffle(&x, g) {
                moves &= (0..c).all(|k| y.data()[c + k] == (c + p[k]) as f64);
            } else {
                moves = false;
            }
        }
    }
    rep.holds("permutation_is_bijective", bijective);
    rep.holds("inverse_is_transposed_shuffle", inverse);
    rep.holds("one_or_c_groups_is_identity", trivial);
    rep.holds("tensor_matches_permutation", moves);
    let p = shuffle_permutation(8, 2).unwrap_or_default();
    rep.holds("c8_g2_interleaves_halves", p == [0, 4, 1, 5, 2, 6, 3, 7]);
    rep.holds("indivisible_rejected", shuffle_permutation(6, 4).is_err() && shuffle_permutation(6, 0).is_err());
    rep.checks
}

// ------------------------------------------------------------------ oracle

fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, bias: &[f64], spec: &Conv2dSpec) -> Vec<f64> {
    let s = x.shape();
    let (b, cin, h, wd) = (s[0], s[1], s[2], s[3]);
    let [cout, cin_g, kh, kw] = spec.weight_shape();
    let Padding { top, left, .. } = spec.padding;
    let (ho, wo) = spec.out_extent(h, wd).unwrap_or((0, 0));
    let cout_g = cout / spec.groups;
    let mut out = vec![0.0; b * cout * ho * wo];
    for bi in 0..b {
        for co in 0..cout {
            let grp = co / cout_g;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bias[co];
                    for ci in 0..cin_g {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * spec.stride.0 + ky * spec.dilation.0) as isize - top as isize;
                                let ix = (ox * spec.stride.1 + kx * spec.dilation.1) as isize - left as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let xi = ((bi * cin + grp * cin_g + ci) * h + iy as usize) * wd + ix as usize;
                                let wi = ((co * cin_g + ci) * kh + ky) * kw + kx;
                                acc += x.data()[xi] * w.data()[wi];
                            }
                        }
                    }
                    out[((bi * cout + co) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    out
}

fn oracle_suite() -> Vec<Check> {
    let mut rep = Report::new("oracle");
    let mut r = rng(23);
    let specs = [
        Conv2dSpec::new(4, 6, 3).same_padding(),
        Conv2dSpec::new(4, 6, 3).with_stride(2).same_padding(),
        Conv2dSpec::depthwise(4, 5, 1).same_padding(),
        Conv2dSpec::depthwise(4, 3, 3).same_padding(),
        Conv2dSpec::pointwise(4, 8, 2),
        Conv2dSpec::new(4, 4, 2).with_stride(2),
    ];
    for (i, spec) in specs.iter().enumerate() {
        let x = rand_tensor(&mut r, &[2, 4, 9, 8]);
        let w = rand_tensor(&mut r, &spec.weight_shape());
        let b = rand_tensor(&mut r, &[spec.out_ch]);
        let bias = spec.bias.then_some(&b);
        let zeros = vec![0.0; spec.out_ch];
        let bdata = bias.map_or(&zeros[..], |b| b.data());
        rep.record(
            format!("conv2d_{i}_k{}_s{}_d{}_g{}", spec.kernel.0, spec.stride.0, spec.dilation.0, spec.groups),
            1e-11,
            conv2d(&x, spec, &w, bias).map(|y| max_diff(y.data(), &naive_conv(&x, &w, bdata, spec))),
        );
    }

    let (m, k, n) = (7, 5, 6);
    let a = rand_tensor(&mut r, &[m, k]);
    let b = rand_tensor(&mut r, &[k, n]);
    let mut want = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            want[i * n + j] = (0..k).map(|t| a.data()[i * k + t] * b.data()[t * n + j]).sum();
        }
    }
    rep.record("matmul", 1e-12, matmul(&a, &b).map(|y| max_diff(y.data(), &want)));

    let x = rand_tensor(&mut r, &[3, 8]);
    let w = rand_tensor(&mut r, &[4, 8]);
    let bias = rand_tensor(&mut r, &[4]);
    let mut want = vec![0.0; 12];
    for i in 0..3 {
        for o in 0..4 {
            want[i * 4 + o] = bias.data()[o] + (0..8).map(|t| x.data()[i * 8 + t] * w.data()[o * 8 + t]).sum::<f64>();
        }
    }
    rep.record("linear", 1e-12, linear(&x, &w, Some(&bias)).map(|y| max_diff(y.data(), &want)));

    // Grouped linear equals a dense layer with a block-diagonal weight.
    let gw = rand_tensor(&mut r, &[2, 2, 4]);
    let dense = Tensor::from_fn(&[4, 8], |i| {
        let (o, t) = (i / 8, i % 8);
        if o / 2 == t / 4 {
            gw.data()[o * 4 + t % 4]
        } else {
            0.0
        }
    });
    rep.record(
        "group_linear_block_diagonal",
        1e-12,
        group_linear(&x, 2, &gw, None).and_then(|g| Ok(g.max_abs_diff(&linear(&x, &dense, None)?))),
    );

    let x = rand_tensor(&mut r, &[2, 6, 3, 3]);
    let gamma = rand_tensor(&mut r, &[6]);
    let beta = rand_tensor(&mut r, &[6]);
    let eps = 1e-5;
    let mut want = vec![0.0; x.numel()];
    for bi in 0..2 {
        for p in 0..9 {
            let col: Vec<f64> = (0..6).map(|c| x.data()[(bi * 6 + c) * 9 + p]).collect();
            let mean = col.iter().sum::<f64>() / 6.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
            for c in 0..6 {
                want[(bi * 6 + c) * 9 + p] = gamma.data()[c] * (col[c] - mean) / (var + eps).sqrt() + beta.data()[c];
            }
        }
    }
    rep.record(
        "layer_norm_channels",
        1e-12,
        layer_norm(&x, 1..2, &gamma, &beta, eps).map(|y| max_diff(y.data(), &want)),
    );

    let logits = rand_tensor(&mut r, &[5, 4]).scale(3.0);
    let labels = [0, 3, 1, 2, 3];
    let want: f64 = logits
        .data()
        .chunks(4)
        .zip(&labels)
        .map(|(row, &l)| row.iter().map(|v| v.exp()).sum::<f64>().ln() - row[l])
        .sum::<f64>()
        / 5.0;
    rep.record("cross_entropy", 1e-12, softmax_cross_entropy(&logits, &labels).map(|v| (v - want).abs()));

    let mut hits = 0;
    for (row, &l) in logits.data().chunks(4).zip(&labels) {
        let mut idx: Vec<usize> = (0..4).collect();
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        hits += idx[..2].contains(&l) as usize;
    }
    rep.record(
        "top2_accuracy",
        1e-15,
        top_k_accuracy(&logits, &labels, 2).map(|a| (a - hits as f64 / 5.0).abs()),
    );
    rep.checks
}

// -------------------------------------------------------------------- grad

const GRAD_TOL: f64 = 1e-5;
const FD_EPS: f64 = 1e-5;
const KINK: f64 = 1e-3;

/// Pins a closure to the higher-ranked signature `grad_check` expects.
fn hr<F>(f: F) -> F
where
    F: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    f
}

/// Worst relative error of the scalar function `f` at `x`, or `None` when
/// a perturbation lands within `KINK` of a ReLU kink.
fn fd<F>(f: F, x: &Tensor<f64>) -> Result<Option<f64>>
where
    F: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let rep = grad_check(f, x, FD_EPS)?;
    Ok((rep.kink_margin >= KINK).then_some(rep.max_rel_error))
}

/// Checks `sum(proj * f(x))`, projecting onto a random direction.
fn fd_projected<F>(f: F, x: &Tensor<f64>, proj: &Tensor<f64>) -> Result<Option<f64>>
where
    F: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    fd(hr(|t, v| Ok(f(t, v)?.mul(t.constant(proj.clone()))?.sum())), x)
}

fn out_shape<F>(f: F, x: &Tensor<f64>) -> Result<Vec<usize>>
where
    F: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let tape = Tape::new();
    Ok(f(&tape, tape.constant(x.clone()))?.shape())
}

/// Checks one op at three random inputs of `shape`.
fn op_case(
    rep: &mut Report,
    name: &str,
    seed: u64,
    shape: &[usize],
    f: impl for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>> + Copy,
) {
    let result = (|| {
        let mut worst = 0.0f64;
        let mut accepted = 0;
        for attempt in 0..30 {
            let mut r = rng(seed * 100 + attempt);
            let x = rand_tensor(&mut r, shape);
            let proj = rand_tensor(&mut r, &out_shape(f, &x)?);
            if let Some(e) = fd_projected(f, &x, &proj)? {
                worst = worst.max(e);
                accepted += 1;
                if accepted == 3 {
                    return Ok(worst);
                }
            }
        }
        Err(Error::Numeric("no kink-free points found".into()))
    })();
    rep.record(name, GRAD_TOL, result);
}

/// Checks a parameterized layer w.r.t. its input and every parameter at
/// three random points.
fn layer_case<B>(
    rep: &mut Report,
    name: &str,
    seed: u64,
    shape: &[usize],
    make: impl Fn(&mut Init<'_, f64>) -> Result<B>,
    f: impl for<'t> Fn(&B, &Bound<'t, f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
) {
    let result = (|| {
        let mut worst = 0.0f64;
        let mut accepted = 0;
        'points: for attempt in 0..30 {
            let s = seed * 100 + attempt;
            let mut store = ParamStore::new();
            let mut r = rng(s);
            let layer = make(&mut Init::new(&mut store, &mut r))?;
            let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
            for id in ids {
                let shape = store.get(id).value.shape().to_vec();
                store.set(id, rand_tensor(&mut r, &shape).scale(0.5))?;
            }
            let x = rand_tensor(&mut r, shape);
            let wrt_x = hr(|t, v| f(&layer, &store.bind_frozen(t), v));
            let proj = rand_tensor(&mut r, &out_shape(wrt_x, &x)?);
            let mut errs = vec![fd_projected(wrt_x, &x, &proj)?];
            for (id, param) in store.iter() {
                let wrt_p = hr(|t, v| {
                    let mut p = store.bind_frozen(t);
                    p.replace(id, v);
                    f(&layer, &p, t.constant(x.clone()))
                });
                errs.push(fd_projected(wrt_p, &param.value, &proj)?);
            }
            let mut point = 0.0f64;
            for e in errs {
                match e {
                    Some(e) => point = point.max(e),
                    None => continue 'points,
                }
            }
            worst = worst.max(point);
            accepted += 1;
            if accepted == 3 {
                return Ok(worst);
            }
        }
        Err(Error::Numeric("no kink-free points found".into()))
    })();
    rep.record(name, GRAD_TOL, result);
}

/// A fixed random constant operand.
fn c<'t>(t: &'t Tape<f64>, seed: u64, shape: &[usize]) -> Var<'t, f64> {
    t.constant(rand_tensor(&mut rng(seed), shape))
}

fn grad_suite() -> Vec<Check> {
    let mut rep = Report::new("grad");

    op_case(&mut rep, "add", 1, &[2, 3], |t, x| x.add(c(t, 9, &[2, 3])));
    op_case(&mut rep, "sub", 2, &[2, 3], |t, x| c(t, 9, &[2, 3]).sub(x));
    op_case(&mut rep, "mul", 3, &[2, 3], |t, x| x.mul(x)?.mul(c(t, 9, &[2, 3])));
    op_case(&mut rep, "relu", 4, &[3, 4], |_, x| Ok(x.relu()));
    op_case(&mut rep, "gelu", 5, &[3, 4], |_, x| Ok(x.gelu()));
    op_case(&mut rep, "scale_sum_mean", 6, &[3, 4], |_, x| Ok(x.scale(-1.5).mul(x)?.mean()));
    op_case(&mut rep, "reshape_permute", 7, &[2, 3, 4], |_, x| x.reshape(&[6, 4])?.permute(&[1, 0]));
    op_case(&mut rep, "matmul", 8, &[3, 4], |t, x| x.matmul(c(t, 9, &[4, 2])));
    op_case(&mut rep, "global_avg_pool", 9, &[2, 3, 4, 4], |_, x| x.global_avg_pool());
    op_case(&mut rep, "softmax_cross_entropy", 10, &[4, 5], |_, x| x.scale(2.0).softmax_cross_entropy(&[0, 4, 2, 2]));
    op_case(&mut rep, "group_shuffle", 11, &[2, 6, 2, 2], |_, x| x.group_shuffle(3));
    op_case(&mut rep, "rfft2", 12, &[1, 2, 4, 6], |_, x| x.rfft2());
    op_case(&mut rep, "irfft2", 13, &[1, 4, 5, 4], |_, x| x.irfft2(6));
    op_case(&mut rep, "rfft2_odd_width", 14, &[1, 1, 3, 5], |_, x| x.rfft2()?.irfft2(5)?.mul(x));

    let conv_specs = [
        ("conv2d_3x3", Conv2dSpec::new(2, 3, 3).same_padding()),
        ("conv2d_stride2_groups2", Conv2dSpec::new(4, 4, 3).with_stride(2).with_groups(2).same_padding()),
        ("conv2d_dilated_depthwise", Conv2dSpec::depthwise(2, 3, 2).same_padding()),
        ("conv2d_pointwise_grouped", Conv2dSpec::pointwise(4, 6, 2)),
    ];
    for (i, (name, spec)) in conv_specs.into_iter().enumerate() {
        let cin = spec.in_ch;
        layer_case(&mut rep, name, 20 + i as u64, &[2, cin, 5, 5], move |init| init.conv("c", spec), |l, p, x| l.forward(p, x));
    }
    layer_case(&mut rep, "layer_norm", 30, &[2, 4, 3, 3], |init| init.norm("n", 4), |l, p, x| l.forward(p, x));
    layer_case(&mut rep, "linear", 31, &[3, 5], |init| init.linear("l", 5, 4), |l, p, x| l.forward(p, x));
    layer_case(
        &mut rep,
        "group_linear",
        32,
        &[3, 6],
        |init| init.linear("l", 3, 4),
        |l, p, x| x.group_linear(2, p[l.weight].reshape(&[2, 2, 3])?, Some(p[l.bias])),
    );

    let (ch, hw) = (8, 6);
    let cfg = |kind| BlockConfig::new(kind, ch).resolved();
    let shape = [1, ch, hw, hw];
    let afidaf = cfg(BlockKind::Afidaf);
    layer_case(&mut rep, "m_i_image_filter", 40, &shape, |i| ImageFilter::new(i, &afidaf), |l, p, x| l.forward(p, x));
    layer_case(&mut rep, "m_c_fourier_mask", 41, &shape, |i| FourierMask::new(i, &afidaf), |l, p, x| l.forward(p, x));
    layer_case(&mut rep, "f_conv", 42, &shape, |i| FourierConv::new(i, &afidaf), |l, p, x| l.forward(p, x));
    let hier = cfg(BlockKind::HafidafMask);
    layer_case(&mut rep, "f_mask", 43, &shape, |i| FourierMask::new(i, &hier), |l, p, x| l.forward(p, x));
    layer_case(&mut rep, "gsmlp", 44, &shape, |i| Gsmlp::new(i, ch, 2, 2), |l, p, x| l.forward(p, x));
    for (seed, kind, index) in [
        (50, BlockKind::Afidaf, 0),
        (51, BlockKind::Idaf, 0),
        (52, BlockKind::Aff, 0),
        (53, BlockKind::HafidafConv, 0),
        (54, BlockKind::HafidafConv, 1),
        (55, BlockKind::HafidafMask, 0),
    ] {
        let bc = cfg(kind);
        let name = format!("block_{kind:?}_{index}").to_lowercase();
        layer_case(&mut rep, &name, seed, &shape, |i| Block::new(i, &bc, index), |l, p, x| l.forward(p, x));
    }
    rep.checks
}
