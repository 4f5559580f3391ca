use super::{strides_of, Scalar, Tensor};
use crate::error::{shape_err, Result};

/// Broadcast shape under trailing-dimension rules.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(shape_err!("cannot broadcast {a:?} with {b:?}")),
        };
    }
    Ok(out)
}

/// Strides of `shape` viewed inside `out_shape`, with 0 on broadcast axes.
fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let lead = out_shape.len() - shape.len();
    let own = strides_of(shape);
    (0..out_shape.len())
        .map(|i| {
            if i < lead || shape[i - lead] == 1 {
                0
            } else {
                own[i - lead]
            }
        })
        .collect()
}

/// Walks every index of `out_shape` calling `f(out_offset, offsets...)`.
fn for_each_broadcast(
    out_shape: &[usize],
    strides: &[Vec<usize>],
    mut f: impl FnMut(usize, &[usize]),
) {
    let rank = out_shape.len();
    let n: usize = out_shape.iter().product();
    let mut idx = vec![0usize; rank];
    let mut offs = vec![0usize; strides.len()];
    for o in 0..n {
        f(o, &offs);
        for d in (0..rank).rev() {
            idx[d] += 1;
            for (off, s) in offs.iter_mut().zip(strides) {
                *off += s[d];
            }
            if idx[d] < out_shape[d] {
                break;
            }
            for (off, s) in offs.iter_mut().zip(strides) {
                *off -= s[d] * out_shape[d];
            }
            idx[d] = 0;
        }
    }
}

pub(crate) fn broadcast_binary<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let out_shape = broadcast_shape(a.shape(), b.shape())?;
    let strides = [
        broadcast_strides(a.shape(), &out_shape),
        broadcast_strides(b.shape(), &out_shape),
    ];
    let n = out_shape.iter().product();
    let mut out = vec![T::ZERO; n];
    let (ad, bd) = (a.data(), b.data());
    for_each_broadcast(&out_shape, &strides, |o, offs| {
        out[o] = f(ad[offs[0]], bd[offs[1]]);
    });
    Ok(Tensor::from_parts(out_shape, out))
}

/// Sums `grad` down to `shape`, undoing a broadcast to `grad.shape()`.
pub fn reduce_to_shape<T: Scalar>(grad: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
    if grad.shape() == shape {
        return Ok(grad.clone());
    }
    let expected = broadcast_shape(shape, grad.shape())?;
    if expected != grad.shape() {
        return Err(shape_err!("{shape:?} does not broadcast to {:?}", grad.shape()));
    }
    let strides = [broadcast_strides(shape, grad.shape())];
    let mut out = vec![T::ZERO; shape.iter().product()];
    let gd = grad.data();
    for_each_broadcast(grad.shape(), &strides, |o, offs| {
        out[offs[0]] += gd[o];
    });
    Ok(Tensor::from_parts(shape.to_vec(), out))
}

/// `c += a · b` for row-major `a: m×k`, `b: k×n`, `c: m×n`.
pub(crate) fn gemm<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::ZERO {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

pub(crate) fn transpose2d<T: Scalar>(rows: usize, cols: usize, a: &[T]) -> Vec<T> {
    let mut out = vec![T::ZERO; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}
