mod common;

use afidaf_core::tensor::{elementwise, grad_check, matmul, Elementwise, Tape};
use afidaf_core::Tensor;
use common::*;

fn unravel(mut o: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for d in (0..shape.len()).rev() {
        idx[d] = o % shape[d];
        o /= shape[d];
    }
    idx
}

/// Scalar-loop broadcast oracle: maps each output index to operand indices
/// by clamping broadcast axes to 0.
fn oracle_binary(a: &Tensor<f64>, b: &Tensor<f64>, f: fn(f64, f64) -> f64) -> Option<Tensor<f64>> {
    let rank = a.rank().max(b.rank());
    let pad = |s: &[usize]| {
        let mut v = vec![1; rank - s.len()];
        v.extend_from_slice(s);
        v
    };
    let (sa, sb) = (pad(a.shape()), pad(b.shape()));
    let mut out_shape = vec![0; rank];
    for d in 0..rank {
        out_shape[d] = if sa[d] == sb[d] || sb[d] == 1 {
            sa[d]
        } else if sa[d] == 1 {
            sb[d]
        } else {
            return None;
        };
    }
    let n: usize = out_shape.iter().product();
    let mut out = Vec::with_capacity(n);
    for o in 0..n {
        let idx = unravel(o, &out_shape);
        let ia: Vec<usize> = idx.iter().zip(&sa).map(|(&i, &d)| if d == 1 { 0 } else { i }).collect();
        let ib: Vec<usize> = idx.iter().zip(&sb).map(|(&i, &d)| if d == 1 { 0 } else { i }).collect();
        let va = a.get(&ia[rank - a.rank()..]).unwrap();
        let vb = b.get(&ib[rank - b.rank()..]).unwrap();
        out.push(f(va, vb));
    }
    Some(Tensor::new(&out_shape, out).unwrap())
}

#[test]
fn mul_matches_scalar_loop() {
    let mut r = rng(1);
    let a = rand_tensor(&mut r, &[3, 4]);
    let b = rand_tensor(&mut r, &[3, 4]);
    let got = elementwise(Elementwise::Mul, &a, Some(&b)).unwrap();
    let want = oracle_binary(&a, &b, |x, y| x * y).unwrap();
    assert!(got.max_abs_diff(&want) < 1e-12);
}

fn all_shapes(max_rank: usize, max_extent: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_rank {
        let mut next = Vec::new();
        for s in &frontier {
            for e in 1..=max_extent {
                let mut t: Vec<usize> = s.clone();
                t.push(e);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[test]
fn broadcast_sweep_matches_oracle() {
    // Every shape up to rank 4 with extents <= 5, paired with every
    // broadcast-compatible partner obtained by squashing axes to 1 and
    // dropping leading axes.
    let mut r = rng(2);
    let mut checked = 0usize;
    for sa in all_shapes(4, 5) {
        let a = rand_tensor(&mut r, &sa);
        for mask in 0..(1u32 << sa.len()) {
            for drop in 0..=sa.len() {
                let sb: Vec<usize> = sa
                    .iter()
                    .enumerate()
                    .skip(drop)
                    .map(|(d, &e)| if mask >> d & 1 == 1 { 1 } else { e })
                    .collect();
                let b = rand_tensor(&mut r, &sb);
                for (op, f) in [
                    (Elementwise::Add, (|x, y| x + y) as fn(f64, f64) -> f64),
                    (Elementwise::Sub, |x, y| x - y),
                    (Elementwise::Mul, |x, y| x * y),
                ] {
                    let want = oracle_binary(&a, &b, f).unwrap();
                    assert_eq!(elementwise(op, &a, Some(&b)).unwrap(), want, "{sa:?} {sb:?}");
                    let want = oracle_binary(&b, &a, f).unwrap();
                    assert_eq!(elementwise(op, &b, Some(&a)).unwrap(), want, "{sb:?} {sa:?}");
                }
                checked += 1;
            }
        }
    }
    assert!(checked > 10_000);
}

#[test]
fn incompatible_broadcast_is_shape_error() {
    let a = Tensor::<f64>::zeros(&[2, 3]);
    let b = Tensor::<f64>::zeros(&[4, 3]);
    assert!(matches!(
        elementwise(Elementwise::Add, &a, Some(&b)),
        Err(afidaf_core::Error::Shape(_))
    ));
}

#[test]
fn matmul_matches_triple_loop() {
    let mut r = rng(3);
    let a = rand_tensor(&mut r, &[5, 4]);
    let b = rand_tensor(&mut r, &[4, 3]);
    let got = matmul(&a, &b).unwrap();
    let want = triple_loop_matmul(a.data(), b.data(), 5, 4, 3);
    assert_eq!(got.shape(), &[5, 3]);
    let err = got.data().iter().zip(&want).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(err < 1e-12);

    let a = rand_tensor(&mut r, &[2, 3, 5, 4]);
    let got = matmul(&a, &b).unwrap();
    for i in 0..6 {
        let want = triple_loop_matmul(&a.data()[i * 20..(i + 1) * 20], b.data(), 5, 4, 3);
        let err = got.data()[i * 15..(i + 1) * 15]
            .iter()
            .zip(&want)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);
    }
}

#[test]
fn elementwise_and_matmul_gradients() {
    let mut r = rng(4);
    for _ in 0..3 {
        let other = rand_tensor(&mut r, &[4]);
        let x = rand_tensor(&mut r, &[3, 4]);
        let proj = rand_tensor(&mut r, &[3, 4]);
        let check = |f: &dyn for<'t> Fn(&'t Tape<f64>, afidaf_core::Var<'t, f64>) -> afidaf_core::Result<afidaf_core::Var<'t, f64>>| {
            grad_check(|t, v| f(t, v), &x, 1e-5).unwrap().max_rel_error
        };
        assert!(check(&|t, v| v.add(t.constant(other.clone()))?.mul(t.constant(proj.clone()))?.sum().into_ok()) < 1e-5);
        assert!(check(&|t, v| t.constant(other.clone()).sub(v)?.mul(t.constant(proj.clone()))?.sum().into_ok()) < 1e-5);
        assert!(check(&|t, v| v.mul(v)?.mul(t.constant(proj.clone()))?.sum().into_ok()) < 1e-5);
        assert!(check(&|t, v| v.gelu().mul(t.constant(proj.clone()))?.sum().into_ok()) < 1e-5);
        assert!(check(&|_, v| v.scale(-2.5).mean().into_ok()) < 1e-5);
        assert!(check(&|t, v| v.permute(&[1, 0])?.reshape(&[12])?.mul(t.constant(proj.reshape(&[12])?))?.sum().into_ok()) < 1e-5);
        let bm = rand_tensor(&mut r, &[4, 2]);
        let pm = rand_tensor(&mut r, &[3, 2]);
        assert!(check(&|t, v| v.matmul(t.constant(bm.clone()))?.mul(t.constant(pm.clone()))?.sum().into_ok()) < 1e-5);
        // gradient with respect to the right operand
        let am = rand_tensor(&mut r, &[2, 3]);
        assert!(check(&|t, v| t.constant(am.clone()).matmul(v)?.mul(t.constant(rand_tensor(&mut rng(9), &[2, 4])))?.sum().into_ok()) < 1e-5);
    }
}

#[test]
fn relu_gradient_away_from_kink() {
    let mut r = rng(5);
    let mut done = 0;
    while done < 3 {
        let x = rand_tensor(&mut r, &[10]);
        let proj = rand_tensor(&mut r, &[10]);
        let rep = grad_check(|t, v| v.relu().mul(t.constant(proj.clone()))?.sum().into_ok(), &x, 1e-5).unwrap();
        if rep.kink_margin < 1e-3 {
            continue;
        }
        assert!(rep.max_rel_error < 1e-5);
        done += 1;
    }
}

#[test]
fn forward_is_deterministic() {
    let mut r = rng(6);
    let a = rand_tensor(&mut r, &[7, 9]);
    let b = rand_tensor(&mut r, &[9, 5]);
    assert!(matmul(&a, &b).unwrap().bit_eq(&matmul(&a, &b).unwrap()));
}

trait IntoOk: Sized {
    fn into_ok(self) -> afidaf_core::Result<Self> {
        Ok(self)
    }
}
impl<T> IntoOk for T {}
