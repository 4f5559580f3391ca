use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of a finite-difference gradient check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    /// `max_i |g_ad - g_fd| / max(1, |g_ad|, |g_fd|)`.
    pub max_rel_error: f64,
    /// Coordinate where the maximum was attained.
    pub worst_index: usize,
    /// Distance of the nearest kinked-activation input to its kink at `x`.
    /// Central differences are unreliable when this is below ~1e-3.
    pub kink_margin: f64,
}

/// Compares the tape gradient of the scalar function `f` at `x` with
/// central differences of step `eps`.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let y = f(&tape, xv)?;
    let analytic = tape.backward(y)?.wrt(xv);
    let kink_margin = tape.kink_margin();

    let eval = |data: Vec<f64>| -> Result<f64> {
        let tape = Tape::new();
        let v = tape.constant(Tensor::new(x.shape(), data)?);
        f(&tape, v)?.value().item()
    };

    let mut max_rel_error = 0.0;
    let mut worst_index = 0;
    let mut probe = x.data().to_vec();
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let fp = eval(probe.clone())?;
        probe[i] = orig - eps;
        let fm = eval(probe.clone())?;
        probe[i] = orig;
        let fd = (fp - fm) / (2.0 * eps);
        let ad = analytic.data()[i];
        if !fd.is_finite() || !ad.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient at coordinate {i}: analytic {ad}, numeric {fd}"
            )));
        }
        let rel = (ad - fd).abs() / 1.0f64.max(ad.abs()).max(fd.abs());
        if rel > max_rel_error {
            max_rel_error = rel;
            worst_index = i;
        }
    }
    Ok(GradCheck {
        max_rel_error,
        worst_index,
        kink_margin,
    })
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::from_fn(&[5], |i| i as f64 * 0.3 - 0.7);
        let r = grad_check(|_, v| Ok(v.sum().scale(3.5)), &x, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn quadratic_is_exact_under_central_differences() {
        let x = Tensor::from_fn(&[6], |i| i as f64 * 0.4 - 1.1);
        let r = grad_check(|_, v| Ok(v.mul(v)?.sum()), &x, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn nan_is_reported() {
        let x = Tensor::from_fn(&[2], |_| 1.0);
        let r = grad_check(|_, v| Ok(v.scale(f64::NAN).sum()), &x, 1e-5);
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
