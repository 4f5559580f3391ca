use crate::error::{shape_err, Result};
use crate::tensor::{gemm, transpose2d, Scalar, Tensor, Var};

/// Rows and group geometry of a (grouped) linear map on the last axis.
#[derive(Clone, Copy)]
struct Geom {
    rows: usize,
    groups: usize,
    din_g: usize,
    dout_g: usize,
}

impl Geom {
    fn new(x: &[usize], w: &[usize], groups: usize, bias: Option<&[usize]>) -> Result<Self> {
        let din = *x.last().ok_or_else(|| shape_err!("linear input must have rank >= 1"))?;
        let (dout_g, din_g) = match *w {
            [o, i] if groups == 1 => (o, i),
            [g, o, i] if g == groups => (o, i),
            _ => return Err(shape_err!("linear weight {w:?} invalid for {groups} groups")),
        };
        if groups == 0 || din % groups != 0 || din / groups != din_g {
            return Err(shape_err!("linear input width {din} incompatible with weight {w:?}"));
        }
        if let Some(b) = bias {
            if b != [groups * dout_g] {
                return Err(shape_err!("linear bias {b:?}, expected [{}]", groups * dout_g));
            }
        }
        Ok(Self {
            rows: x.iter().product::<usize>() / din,
            groups,
            din_g,
            dout_g,
        })
    }

    fn dout(&self) -> usize {
        self.groups * self.dout_g
    }

    /// Columns `[g * width, (g + 1) * width)` of a `rows x (groups * width)` matrix.
    fn take_cols<T: Scalar>(&self, m: &[T], width: usize, g: usize) -> Vec<T> {
        m.chunks(self.groups * width)
            .flat_map(|row| row[g * width..(g + 1) * width].iter().copied())
            .collect()
    }

    fn put_cols<T: Scalar>(&self, m: &mut [T], width: usize, g: usize, block: &[T]) {
        for (row, src) in m.chunks_mut(self.groups * width).zip(block.chunks(width)) {
            row[g * width..(g + 1) * width].copy_from_slice(src);
        }
    }

    fn forward<T: Scalar>(&self, x: &[T], w: &[T], b: Option<&[T]>) -> Vec<T> {
        let mut out = vec![T::ZERO; self.rows * self.dout()];
        for g in 0..self.groups {
            let xg = self.take_cols(x, self.din_g, g);
            let wg = &w[g * self.dout_g * self.din_g..][..self.dout_g * self.din_g];
            let wt = transpose2d(self.dout_g, self.din_g, wg);
            let mut yg = vec![T::ZERO; self.rows * self.dout_g];
            gemm(self.rows, self.din_g, self.dout_g, &xg, &wt, &mut yg);
            self.put_cols(&mut out, self.dout_g, g, &yg);
        }
        if let Some(b) = b {
            for row in out.chunks_mut(self.dout()) {
                for (v, &bv) in row.iter_mut().zip(b) {
                    *v += bv;
                }
            }
        }
        out
    }
}

/// `y = x W^T + b` over the last axis; `W: [Dout, Din]`.
pub fn linear<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    group_linear(x, 1, w, b)
}

/// Block-diagonal linear map over the last axis: input channels are split
/// into `groups` contiguous slices, each mapped by its own `W[g]`.
/// `W: [groups, Dout / groups, Din / groups]` (or `[Dout, Din]` when
/// `groups == 1`).
pub fn group_linear<T: Scalar>(x: &Tensor<T>, groups: usize, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let g = Geom::new(x.shape(), w.shape(), groups, b.map(|b| b.shape()))?;
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = g.dout();
    Ok(Tensor::from_parts(shape, g.forward(x.data(), w.data(), b.map(|b| b.data()))))
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn linear(self, w: Var<'t, T>, b: Option<Var<'t, T>>) -> Result<Var<'t, T>> {
        self.group_linear(1, w, b)
    }

    pub fn group_linear(self, groups: usize, w: Var<'t, T>, b: Option<Var<'t, T>>) -> Result<Var<'t, T>> {
        self.check_same_tape(&w)?;
        let (x, wv) = (self.value(), w.value());
        let bv = b.map(|b| b.value());
        let out = group_linear(&x, groups, &wv, bv.as_deref())?;
        let geom = Geom::new(x.shape(), wv.shape(), groups, bv.as_ref().map(|b| b.shape()))?;
        let mut inputs = vec![self, w];
        inputs.extend(b);
        Ok(self.tape().record(
            out,
            &inputs,
            Box::new(move |gout, needs| {
                let gd = gout.data();
                let (rows, di, do_) = (geom.rows, geom.din_g, geom.dout_g);
                let mut gx = needs[0].then(|| vec![T::ZERO; x.numel()]);
                let mut gw = needs[1].then(|| vec![T::ZERO; wv.numel()]);
                for g in 0..geom.groups {
                    let gy = geom.take_cols(gd, do_, g);
                    let wg = &wv.data()[g * do_ * di..][..do_ * di];
                    if let Some(gx) = gx.as_mut() {
                        let mut block = vec![T::ZERO; rows * di];
                        gemm(rows, do_, di, &gy, wg, &mut block);
                        geom.put_cols(gx, di, g, &block);
                    }
                    if let Some(gw) = gw.as_mut() {
                        let xg = geom.take_cols(x.data(), di, g);
                        let gyt = transpose2d(rows, do_, &gy);
                        gemm(do_, rows, di, &gyt, &xg, &mut gw[g * do_ * di..][..do_ * di]);
                    }
                }
                let mut grads = vec![
                    gx.map(|v| Tensor::from_parts(x.shape().to_vec(), v)),
                    gw.map(|v| Tensor::from_parts(wv.shape().to_vec(), v)),
                ];
                if needs.len() > 2 {
                    grads.push(needs[2].then(|| {
                        let mut gb = vec![T::ZERO; geom.dout()];
                        for row in gd.chunks(geom.dout()) {
                            for (a, &v) in gb.iter_mut().zip(row) {
                                *a += v;
                            }
                        }
                        Tensor::from_parts(vec![geom.dout()], gb)
                    }));
                }
                Ok(grads)
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_maps() {
        let x = Tensor::<f64>::from_fn(&[3, 4], |i| i as f64 - 5.0);
        let eye4 = Tensor::from_fn(&[4, 4], |i| if i % 5 == 0 { 1.0 } else { 0.0 });
        assert_eq!(linear(&x, &eye4, None).unwrap(), x);
        let eye2 = Tensor::from_fn(&[2, 2, 2], |i| if i % 4 == 0 || i % 4 == 3 { 1.0 } else { 0.0 });
        assert_eq!(group_linear(&x, 2, &eye2, None).unwrap(), x);
    }

    #[test]
    fn shape_errors() {
        let x = Tensor::<f64>::zeros(&[3, 6]);
        assert!(group_linear(&x, 4, &Tensor::zeros(&[4, 1, 1]), None).is_err());
        assert!(linear(&x, &Tensor::zeros(&[2, 5]), None).is_err());
        assert!(linear(&x, &Tensor::zeros(&[2, 6]), Some(&Tensor::zeros(&[3]))).is_err());
    }
}
