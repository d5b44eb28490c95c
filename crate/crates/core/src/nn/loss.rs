use super::ops::softmax;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Sum over output columns of the batch-mean absolute error.
/// Returns the loss and its gradient with respect to `pred`.
pub fn l1_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    pred.expect_shape(target.shape(), "l1_loss")?;
    pred.expect_rank(2, "l1_loss")?;
    let inv_n = T::one() / T::from_f64_lossy(pred.dim(0) as f64);
    let loss: T = pred.data().iter().zip(target.data()).map(|(&p, &t)| (p - t).abs()).sum();
    let grad = pred.zip_map(target, "l1_loss", |p, t| {
        let d = p - t;
        if d > T::zero() {
            inv_n
        } else if d < T::zero() {
            -inv_n
        } else {
            T::zero()
        }
    })?;
    Ok((loss * inv_n, grad))
}

/// Batch-mean of `-log softmax(logits)[class]` and its gradient.
pub fn cross_entropy_loss<T: Scalar>(logits: &Tensor<T>, classes: &[usize]) -> Result<(T, Tensor<T>)> {
    logits.expect_rank(2, "cross_entropy_loss")?;
    let (n, k) = (logits.dim(0), logits.dim(1));
    if classes.len() != n {
        return Err(Error::Shape {
            op: "cross_entropy_loss",
            left: logits.shape().to_vec(),
            right: vec![classes.len()],
        });
    }
    if let Some(&bad) = classes.iter().find(|&&c| c >= k) {
        return Err(Error::domain(format!("class index {bad} out of range for {k} classes")));
    }
    let mut grad = softmax(logits)?;
    let inv_n = T::one() / T::from_f64_lossy(n as f64);
    let mut loss = T::zero();
    for (row, (&c, logit_row)) in grad
        .data_mut()
        .chunks_exact_mut(k)
        .zip(classes.iter().zip(logits.data().chunks_exact(k)))
    {
        // log-sum-exp form keeps tiny probabilities accurate.
        let max = logit_row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + logit_row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        loss = loss + lse - logit_row[c];
        row[c] = row[c] - T::one();
        for v in row.iter_mut() {
            *v = *v * inv_n;
        }
    }
    Ok((loss * inv_n, grad))
}

/// `L_bio + alpha * L_id` and the partial derivatives `(1, alpha)`.
pub fn joint_loss<T: Scalar>(bio: T, id: T, alpha: T) -> Result<(T, (T, T))> {
    if alpha < T::zero() {
        return Err(Error::domain("joint_loss: alpha must be >= 0"));
    }
    Ok((bio + alpha * id, (T::one(), alpha)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_zero_when_equal() {
        let p = Tensor::new(&[2, 4], vec![0.1f64, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]).unwrap();
        let (l, g) = l1_loss(&p, &p).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn l1_sums_biometrics() {
        let p = Tensor::new(&[2, 2], vec![1.0f64, 0.0, 0.0, 0.0]).unwrap();
        let t = Tensor::new(&[2, 2], vec![0.0f64, 2.0, 0.0, 0.0]).unwrap();
        // column means 0.5 and 1.0
        assert_eq!(l1_loss(&p, &t).unwrap().0, 1.5);
    }

    #[test]
    fn ce_uniform_is_ln_k() {
        let x = Tensor::full(&[3, 30], 0.25f64);
        let (l, _) = cross_entropy_loss(&x, &[0, 7, 29]).unwrap();
        assert!((l - 30f64.ln()).abs() < 1e-12);
        assert!((l - 3.4012).abs() < 1e-4);
        assert!(cross_entropy_loss(&x, &[0, 7, 30]).is_err());
    }

    #[test]
    fn joint_alpha_one_is_sum() {
        let (l, d) = joint_loss(0.375f32, 1.25, 1.0).unwrap();
        assert_eq!(l, 0.375 + 1.25);
        assert_eq!(d, (1.0, 1.0));
        assert!(joint_loss(1.0f32, 1.0, -0.5).is_err());
    }
}
