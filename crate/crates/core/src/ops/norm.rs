use std::ops::Range;

use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Tensor, Var};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `(outer, n, inner)` view of `shape` normalizing over the contiguous axes
/// `dims`.
fn split(shape: &[usize], dims: &Range<usize>) -> Result<(usize, usize, usize)> {
    if dims.start >= dims.end || dims.end > shape.len() {
        return Err(shape_err!("normalized dims {dims:?} invalid for shape {shape:?}"));
    }
    Ok((
        shape[..dims.start].iter().product(),
        shape[dims.clone()].iter().product(),
        shape[dims.end..].iter().product(),
    ))
}

struct Normalized<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

fn normalize<T: Scalar>(x: &[T], outer: usize, n: usize, inner: usize, eps: f64) -> Normalized<T> {
    let mut xhat = vec![T::ZERO; x.len()];
    let mut rstd = vec![T::ZERO; outer * inner];
    let inv_n = T::from_f64(1.0 / n as f64);
    let eps = T::from_f64(eps);
    let mut mean = vec![T::ZERO; inner];
    let mut var = vec![T::ZERO; inner];
    for o in 0..outer {
        let block = &x[o * n * inner..(o + 1) * n * inner];
        mean.fill(T::ZERO);
        var.fill(T::ZERO);
        for row in block.chunks(inner) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m *= inv_n);
        for row in block.chunks(inner) {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        let r = &mut rstd[o * inner..(o + 1) * inner];
        for (r, &s) in r.iter_mut().zip(&var) {
            *r = T::ONE / (s * inv_n + eps).sqrt();
        }
        let out = &mut xhat[o * n * inner..(o + 1) * n * inner];
        for (orow, row) in out.chunks_mut(inner).zip(block.chunks(inner)) {
            for (((y, &v), &m), &r) in orow.iter_mut().zip(row).zip(&mean).zip(r.iter()) {
                *y = (v - m) * r;
            }
        }
    }
    Normalized { xhat, rstd }
}

fn affine<T: Scalar>(xhat: &[T], gamma: &[T], beta: &[T], n: usize, inner: usize) -> Vec<T> {
    xhat.chunks(inner)
        .enumerate()
        .flat_map(|(r, row)| {
            let (g, b) = (gamma[r % n], beta[r % n]);
            row.iter().map(move |&v| v * g + b)
        })
        .collect()
}

fn check_affine<T: Scalar>(x: &[usize], dims: &Range<usize>, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<()> {
    let want = &x[dims.clone()];
    if gamma.shape() != want || beta.shape() != want {
        return Err(shape_err!(
            "layer_norm affine {:?}/{:?} must match normalized dims {want:?}",
            gamma.shape(),
            beta.shape()
        ));
    }
    Ok(())
}

/// Layer normalization over the contiguous axes `dims`, then `gamma * x + beta`.
pub fn layer_norm<T: Scalar>(
    x: &Tensor<T>,
    dims: Range<usize>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    let (outer, n, inner) = split(x.shape(), &dims)?;
    check_affine(x.shape(), &dims, gamma, beta)?;
    let nz = normalize(x.data(), outer, n, inner, eps);
    Ok(Tensor::from_parts(
        x.shape().to_vec(),
        affine(&nz.xhat, gamma.data(), beta.data(), n, inner),
    ))
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn layer_norm(
        self,
        dims: Range<usize>,
        gamma: Var<'t, T>,
        beta: Var<'t, T>,
        eps: f64,
    ) -> Result<Var<'t, T>> {
        self.check_same_tape(&gamma)?;
        let x = self.value();
        let (gv, bv) = (gamma.value(), beta.value());
        let (outer, n, inner) = split(x.shape(), &dims)?;
        check_affine(x.shape(), &dims, &gv, &bv)?;
        let Normalized { xhat, rstd } = normalize(x.data(), outer, n, inner, eps);
        let out = Tensor::from_parts(x.shape().to_vec(), affine(&xhat, gv.data(), bv.data(), n, inner));
        let shape = x.shape().to_vec();
        Ok(self.tape().record(
            out,
            &[self, gamma, beta],
            Box::new(move |g, needs| {
                let gd = g.data();
                let gamma = gv.data();
                let mut dgamma = vec![T::ZERO; n];
                let mut dbeta = vec![T::ZERO; n];
                for (r, (grow, xrow)) in gd.chunks(inner).zip(xhat.chunks(inner)).enumerate() {
                    let k = r % n;
                    for (&gv, &xv) in grow.iter().zip(xrow) {
                        dgamma[k] += gv * xv;
                        dbeta[k] += gv;
                    }
                }
                let dx = needs[0].then(|| {
                    let inv_n = T::from_f64(1.0 / n as f64);
                    let mut dx = vec![T::ZERO; gd.len()];
                    let mut m1 = vec![T::ZERO; inner];
                    let mut m2 = vec![T::ZERO; inner];
                    for o in 0..outer {
                        let span = o * n * inner..(o + 1) * n * inner;
                        let (gb, xb) = (&gd[span.clone()], &xhat[span.clone()]);
                        m1.fill(T::ZERO);
                        m2.fill(T::ZERO);
                        for (k, (grow, xrow)) in gb.chunks(inner).zip(xb.chunks(inner)).enumerate() {
                            for ((a, b), (&gv, &xv)) in m1.iter_mut().zip(m2.iter_mut()).zip(grow.iter().zip(xrow)) {
                                let dy = gv * gamma[k];
                                *a += dy;
                                *b += dy * xv;
                            }
                        }
                        let r = &rstd[o * inner..(o + 1) * inner];
                        for (k, ((drow, grow), xrow)) in dx[span]
                            .chunks_mut(inner)
                            .zip(gb.chunks(inner))
                            .zip(xb.chunks(inner))
                            .enumerate()
                        {
                            for i in 0..inner {
                                let dy = grow[i] * gamma[k];
                                drow[i] = r[i] * (dy - m1[i] * inv_n - xrow[i] * m2[i] * inv_n);
                            }
                        }
                    }
                    Tensor::from_parts(shape.clone(), dx)
                });
                let pshape = gv.shape().to_vec();
                Ok(vec![
                    dx,
                    Some(Tensor::from_parts(pshape.clone(), dgamma)),
                    Some(Tensor::from_parts(pshape, dbeta)),
                ])
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_normalizes_to_zero() {
        let x = Tensor::<f64>::full(&[2, 4, 3], 7.0);
        let y = layer_norm(&x, 1..2, &Tensor::ones(&[4]), &Tensor::zeros(&[4]), LAYER_NORM_EPS).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn affine_shape_checked() {
        let x = Tensor::<f64>::zeros(&[2, 4, 3]);
        assert!(layer_norm(&x, 1..2, &Tensor::ones(&[3]), &Tensor::zeros(&[3]), 1e-5).is_err());
        assert!(layer_norm(&x, 2..2, &Tensor::ones(&[3]), &Tensor::zeros(&[3]), 1e-5).is_err());
    }
}
