//! Elementwise, reduction, reshape and matmul ops on [`Tensor`] and [`Var`].

use super::kernels::{broadcast_binary, gemm, reduce_to_shape, transpose2d};
use super::{Scalar, Tensor, Var};
use crate::error::{shape_err, Error, Result};

// tanh-approximation GELU constants: sqrt(2/pi) and the cubic coefficient.
const GELU_C: f64 = 0.797_884_560_802_865_4;
const GELU_A: f64 = 0.044_715;

/// Pointwise ops; `Add`, `Sub` and `Mul` are binary with broadcasting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Relu,
    Gelu,
}

pub fn gelu<T: Scalar>(x: T) -> T {
    let x = x.to_f64();
    T::from_f64(0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()))
}

pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let x = x.to_f64();
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    T::from_f64(0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x))
}

pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::ZERO {
        x
    } else {
        T::ZERO
    }
}

/// Applies an elementwise op. Binary ops require `b`; unary ops reject it.
pub fn elementwise<T: Scalar>(op: Elementwise, a: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    match (op, b) {
        (Elementwise::Add, Some(b)) => broadcast_binary(a, b, |x, y| x + y),
        (Elementwise::Sub, Some(b)) => broadcast_binary(a, b, |x, y| x - y),
        (Elementwise::Mul, Some(b)) => broadcast_binary(a, b, |x, y| x * y),
        (Elementwise::Relu, None) => Ok(a.map(relu)),
        (Elementwise::Gelu, None) => Ok(a.map(gelu)),
        (op, _) => Err(Error::Contract(format!("wrong operand count for {op:?}"))),
    }
}

struct MatmulDims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    a_batched: bool,
    b_batched: bool,
    out_shape: Vec<usize>,
}

fn matmul_dims(a: &[usize], b: &[usize]) -> Result<MatmulDims> {
    if a.len() < 2 || b.len() < 2 {
        return Err(shape_err!("matmul needs rank >= 2, got {a:?} and {b:?}"));
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
    if k != k2 {
        return Err(shape_err!("matmul inner extents differ: {a:?} x {b:?}"));
    }
    let (la, lb) = (&a[..a.len() - 2], &b[..b.len() - 2]);
    let lead = if la == lb || lb.is_empty() {
        la
    } else if la.is_empty() {
        lb
    } else {
        return Err(shape_err!("matmul batch dims differ: {a:?} x {b:?}"));
    };
    let mut out_shape = lead.to_vec();
    out_shape.extend([m, n]);
    Ok(MatmulDims {
        batch: lead.iter().product(),
        m,
        k,
        n,
        a_batched: !la.is_empty(),
        b_batched: !lb.is_empty(),
        out_shape,
    })
}

/// Batched matrix product `[.., M, K] x [.., K, N] -> [.., M, N]`.
///
/// Leading dims must match, or one operand may be a plain matrix shared
/// across the batch.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let d = matmul_dims(a.shape(), b.shape())?;
    let mut out = vec![T::ZERO; d.batch * d.m * d.n];
    for i in 0..d.batch {
        let ao = if d.a_batched { i * d.m * d.k } else { 0 };
        let bo = if d.b_batched { i * d.k * d.n } else { 0 };
        gemm(
            d.m,
            d.k,
            d.n,
            &a.data()[ao..ao + d.m * d.k],
            &b.data()[bo..bo + d.k * d.n],
            &mut out[i * d.m * d.n..(i + 1) * d.m * d.n],
        );
    }
    Ok(Tensor::from_parts(d.out_shape, out))
}

impl<'t, T: Scalar> Var<'t, T> {
    fn binary(
        self,
        other: Var<'t, T>,
        op: Elementwise,
        grads: fn(&Tensor<T>, &Tensor<T>, &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)>,
    ) -> Result<Var<'t, T>> {
        self.check_same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        let out = elementwise(op, &a, Some(&b))?;
        Ok(self.tape().record(
            out,
            &[self, other],
            Box::new(move |g, needs| {
                let (ga, gb) = grads(g, &a, &b)?;
                Ok(vec![
                    needs[0].then(|| reduce_to_shape(&ga, a.shape())).transpose()?,
                    needs[1].then(|| reduce_to_shape(&gb, b.shape())).transpose()?,
                ])
            }),
        ))
    }

    pub fn add(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, Elementwise::Add, |g, _, _| Ok((g.clone(), g.clone())))
    }

    pub fn sub(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, Elementwise::Sub, |g, _, _| Ok((g.clone(), g.map(|v| -v))))
    }

    pub fn mul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, Elementwise::Mul, |g, a, b| {
            Ok((broadcast_binary(g, b, |x, y| x * y)?, broadcast_binary(g, a, |x, y| x * y)?))
        })
    }

    fn unary(self, out: Tensor<T>, dfdx: impl Fn(T, T) -> T + 'static) -> Var<'t, T> {
        let x = self.value();
        self.tape().record(
            out,
            &[self],
            Box::new(move |g, _| Ok(vec![Some(g.zip_map(&x, &dfdx)?)])),
        )
    }

    /// ReLU with subgradient 0 at the origin.
    pub fn relu(self) -> Var<'t, T> {
        let x = self.value();
        let margin = x.data().iter().map(|v| v.to_f64().abs()).fold(f64::INFINITY, f64::min);
        self.tape().note_kink(margin);
        self.unary(x.map(relu), |g, x| if x > T::ZERO { g } else { T::ZERO })
    }

    /// GELU, tanh approximation.
    pub fn gelu(self) -> Var<'t, T> {
        let out = self.value().map(gelu);
        self.unary(out, |g, x| g * gelu_grad(x))
    }

    pub fn scale(self, c: f64) -> Var<'t, T> {
        let c = T::from_f64(c);
        let out = self.value().scale(c);
        self.tape()
            .record(out, &[self], Box::new(move |g, _| Ok(vec![Some(g.scale(c))])))
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(self) -> Var<'t, T> {
        let shape = self.shape();
        let out = Tensor::scalar(self.value().sum());
        self.tape().record(
            out,
            &[self],
            Box::new(move |g, _| Ok(vec![Some(Tensor::full(&shape, g.data()[0]))])),
        )
    }

    pub fn mean(self) -> Var<'t, T> {
        let n = self.value().numel();
        self.sum().scale(1.0 / n as f64)
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t, T>> {
        let old = self.shape();
        let out = self.value().reshape(shape)?;
        Ok(self.tape().record(
            out,
            &[self],
            Box::new(move |g, _| Ok(vec![Some(g.reshape(&old)?)])),
        ))
    }

    pub fn permute(self, axes: &[usize]) -> Result<Var<'t, T>> {
        let out = self.value().permute(axes)?;
        let mut inverse = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        Ok(self.tape().record(
            out,
            &[self],
            Box::new(move |g, _| Ok(vec![Some(g.permute(&inverse)?)])),
        ))
    }

    pub fn matmul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.check_same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        let d = matmul_dims(a.shape(), b.shape())?;
        let out = matmul(&a, &b)?;
        Ok(self.tape().record(
            out,
            &[self, other],
            Box::new(move |g, needs| {
                let (m, k, n) = (d.m, d.k, d.n);
                let mut ga = needs[0].then(|| vec![T::ZERO; a.numel()]);
                let mut gb = needs[1].then(|| vec![T::ZERO; b.numel()]);
                for i in 0..d.batch {
                    let ao = if d.a_batched { i * m * k } else { 0 };
                    let bo = if d.b_batched { i * k * n } else { 0 };
                    let gs = &g.data()[i * m * n..(i + 1) * m * n];
                    if let Some(ga) = ga.as_mut() {
                        let bt = transpose2d(k, n, &b.data()[bo..bo + k * n]);
                        gemm(m, n, k, gs, &bt, &mut ga[ao..ao + m * k]);
                    }
                    if let Some(gb) = gb.as_mut() {
                        let at = transpose2d(m, k, &a.data()[ao..ao + m * k]);
                        gemm(k, m, n, &at, gs, &mut gb[bo..bo + k * n]);
                    }
                }
                Ok(vec![
                    ga.map(|v| Tensor::from_parts(a.shape().to_vec(), v)),
                    gb.map(|v| Tensor::from_parts(b.shape().to_vec(), v)),
                ])
            }),
        ))
    }
}
