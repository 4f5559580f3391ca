use crate::error::{shape_err, Error, Result};
use crate::tensor::{dims4, Scalar, Tensor, Var};

/// Mean over the spatial plane: `[B, C, H, W] -> [B, C]`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = dims4(x.shape(), "global_avg_pool")?;
    let inv = T::from_f64(1.0 / (h * w) as f64);
    let out = x.data().chunks(h * w).map(|p| p.iter().copied().sum::<T>() * inv).collect();
    Ok(Tensor::from_parts(vec![b, c], out))
}

fn check_labels(logits: &[usize], labels: &[usize]) -> Result<(usize, usize)> {
    let [b, k] = *logits else {
        return Err(shape_err!("logits must be [B, K], got {logits:?}"));
    };
    if labels.len() != b {
        return Err(shape_err!("{} labels for batch of {b}", labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Contract(format!("label {bad} outside [0, {k})")));
    }
    Ok((b, k))
}

/// Row-wise softmax probabilities and the batch-mean cross-entropy.
fn softmax_ce<T: Scalar>(logits: &[T], labels: &[usize], k: usize) -> (Vec<f64>, f64) {
    let mut probs = Vec::with_capacity(logits.len());
    let mut total = 0.0;
    for (row, &label) in logits.chunks(k).zip(labels) {
        let row: Vec<f64> = row.iter().map(|v| v.to_f64()).collect();
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let lse = m + z.ln();
        total += lse - row[label];
        probs.extend(row.iter().map(|v| (v - lse).exp()));
    }
    (probs, total / labels.len() as f64)
}

/// Mean cross-entropy of `logits: [B, K]` against integer labels, using a
/// max-shifted log-sum-exp.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<T> {
    let (_, k) = check_labels(logits.shape(), labels)?;
    Ok(T::from_f64(softmax_ce(logits.data(), labels, k).1))
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn global_avg_pool(self) -> Result<Var<'t, T>> {
        let x = self.value();
        let (_, _, h, w) = dims4(x.shape(), "global_avg_pool")?;
        let out = global_avg_pool(&x)?;
        let shape = x.shape().to_vec();
        Ok(self.tape().record(
            out,
            &[self],
            Box::new(move |g, _| {
                let inv = T::from_f64(1.0 / (h * w) as f64);
                let d = g.data().iter().flat_map(|&v| std::iter::repeat_n(v * inv, h * w)).collect();
                Ok(vec![Some(Tensor::from_parts(shape.clone(), d))])
            }),
        ))
    }

    pub fn softmax_cross_entropy(self, labels: &[usize]) -> Result<Var<'t, T>> {
        let x = self.value();
        let (b, k) = check_labels(x.shape(), labels)?;
        let (probs, loss) = softmax_ce(x.data(), labels, k);
        let labels = labels.to_vec();
        let shape = x.shape().to_vec();
        Ok(self.tape().record(
            Tensor::scalar(T::from_f64(loss)),
            &[self],
            Box::new(move |g, _| {
                let scale = g.data()[0].to_f64() / b as f64;
                let mut d = probs.clone();
                for (i, &l) in labels.iter().enumerate() {
                    d[i * k + l] -= 1.0;
                }
                let d = d.into_iter().map(|v| T::from_f64(v * scale)).collect();
                Ok(vec![Some(Tensor::from_parts(shape.clone(), d))])
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        let l = Tensor::<f64>::full(&[3, 10], 0.7);
        let loss = softmax_cross_entropy(&l, &[0, 4, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logit_gives_tiny_loss() {
        let mut d = vec![0.0f64; 5];
        d[2] = 1e4;
        let loss = softmax_cross_entropy(&Tensor::new(&[1, 5], d).unwrap(), &[2]).unwrap();
        assert!(loss < 1e-8);
    }

    #[test]
    fn label_out_of_range_is_contract_error() {
        let l = Tensor::<f64>::zeros(&[2, 3]);
        assert!(matches!(softmax_cross_entropy(&l, &[0, 3]), Err(Error::Contract(_))));
        assert!(softmax_cross_entropy(&l, &[0]).is_err());
    }

    #[test]
    fn pool_averages_planes() {
        let x = Tensor::<f64>::from_fn(&[1, 2, 2, 2], |i| i as f64);
        assert_eq!(global_avg_pool(&x).unwrap().data(), &[1.5, 5.5]);
    }
}
