use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Tensor, Var};

/// Source channel for every output channel of a `g`-group shuffle over `c`
/// channels: channel `i * (c / g) + j` moves to `j * g + i`.
pub fn shuffle_permutation(c: usize, g: usize) -> Result<Vec<usize>> {
    if g == 0 || c % g != 0 {
        return Err(shape_err!("{c} channels not divisible into {g} shuffle groups"));
    }
    let per = c / g;
    let mut src = vec![0; c];
    for i in 0..g {
        for j in 0..per {
            src[j * g + i] = i * per + j;
        }
    }
    Ok(src)
}

/// Gathers channels (axis 1) of a `[B, C, ...]` tensor: `out[:, k] = x[:, src[k]]`.
fn gather_channels<T: Scalar>(x: &Tensor<T>, src: &[usize]) -> Tensor<T> {
    let shape = x.shape();
    let (b, c) = (shape[0], shape[1]);
    let inner: usize = shape[2..].iter().product();
    let mut out = Vec::with_capacity(x.numel());
    for bi in 0..b {
        for &s in src {
            out.extend_from_slice(&x.data()[(bi * c + s) * inner..][..inner]);
        }
    }
    Tensor::from_parts(shape.to_vec(), out)
}

fn check_rank<T: Scalar>(x: &Tensor<T>) -> Result<()> {
    if x.rank() < 2 {
        return Err(shape_err!("group_shuffle expects [B, C, ...], got {:?}", x.shape()));
    }
    Ok(())
}

/// Channel group shuffle (reshape to `(g, C/g)`, transpose, flatten).
pub fn group_shuffle<T: Scalar>(x: &Tensor<T>, g: usize) -> Result<Tensor<T>> {
    check_rank(x)?;
    Ok(gather_channels(x, &shuffle_permutation(x.shape()[1], g)?))
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn group_shuffle(self, g: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        check_rank(&x)?;
        let src = shuffle_permutation(x.shape()[1], g)?;
        let out = gather_channels(&x, &src);
        let mut inverse = vec![0; src.len()];
        for (k, &s) in src.iter().enumerate() {
            inverse[s] = k;
        }
        Ok(self.tape().record(
            out,
            &[self],
            Box::new(move |g, _| Ok(vec![Some(gather_channels(g, &inverse))])),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_channels_two_groups() {
        assert_eq!(shuffle_permutation(4, 2).unwrap(), vec![0, 2, 1, 3]);
        assert_eq!(shuffle_permutation(5, 1).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(shuffle_permutation(6, 4).is_err());
    }

    #[test]
    fn spatial_content_moves_with_channel() {
        let x = Tensor::<f64>::from_fn(&[2, 4, 2, 2], |i| i as f64);
        let y = group_shuffle(&x, 2).unwrap();
        for b in 0..2 {
            for (k, s) in [0, 2, 1, 3].into_iter().enumerate() {
                for p in 0..4 {
                    assert_eq!(y.data()[(b * 4 + k) * 4 + p], x.data()[(b * 4 + s) * 4 + p]);
                }
            }
        }
    }
}
