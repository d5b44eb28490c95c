use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Saved forward state for [`batchnorm2d_backward`].
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

fn channel_view(shape: &[usize]) -> (usize, usize, usize) {
    (shape[0], shape[1], shape[2] * shape[3])
}

/// Per-channel normalization over `(N, H, W)`.
///
/// Train mode normalizes with biased batch statistics and folds them into
/// the running estimates (`momentum` weight on the new value, unbiased
/// variance). Eval mode uses the running estimates.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm2d<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &mut Tensor<T>,
    running_var: &mut Tensor<T>,
    eps: T,
    momentum: T,
    mode: Mode,
) -> Result<(Tensor<T>, BnCache<T>)> {
    x.expect_rank(4, "batchnorm2d")?;
    let (n, c, plane) = channel_view(x.shape());
    for t in [gamma, beta, running_mean, running_var] {
        t.expect_shape(&[c], "batchnorm2d")?;
    }
    if mode == Mode::Train && n < 2 {
        return Err(Error::domain("batchnorm2d: train mode needs a batch of at least 2"));
    }
    let m = n * plane;
    let mut xhat = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    let mut inv_std = vec![T::zero(); c];
    let one = T::one();
    for ch in 0..c {
        let idx = |i: usize| (i * c + ch) * plane;
        let (mean, var) = match mode {
            Mode::Train => {
                let mf = T::from_f64_lossy(m as f64);
                let mean = (0..n).map(|i| x.data()[idx(i)..idx(i) + plane].iter().copied().sum::<T>()).sum::<T>() / mf;
                let var = (0..n)
                    .map(|i| {
                        x.data()[idx(i)..idx(i) + plane]
                            .iter()
                            .map(|&v| (v - mean) * (v - mean))
                            .sum::<T>()
                    })
                    .sum::<T>()
                    / mf;
                let unbiased = if m > 1 { var * mf / (mf - one) } else { var };
                let rm = &mut running_mean.data_mut()[ch];
                *rm = (one - momentum) * *rm + momentum * mean;
                let rv = &mut running_var.data_mut()[ch];
                *rv = (one - momentum) * *rv + momentum * unbiased;
                (mean, var)
            }
            Mode::Eval => (running_mean.data()[ch], running_var.data()[ch]),
        };
        let is = one / (var + eps).sqrt();
        inv_std[ch] = is;
        let (g, b) = (gamma.data()[ch], beta.data()[ch]);
        for i in 0..n {
            let r = idx(i)..idx(i) + plane;
            for ((xh, yv), &v) in xhat.data_mut()[r.clone()]
                .iter_mut()
                .zip(&mut y.data_mut()[r.clone()])
                .zip(&x.data()[r])
            {
                *xh = (v - mean) * is;
                *yv = g * *xh + b;
            }
        }
    }
    Ok((y, BnCache { xhat, inv_std, mode }))
}

/// `(grad_x, grad_gamma, grad_beta)` of [`batchnorm2d`].
pub fn batchnorm2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: &BnCache<T>,
    gamma: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    grad_out.expect_shape(cache.xhat.shape(), "batchnorm2d_backward")?;
    let (n, c, plane) = channel_view(grad_out.shape());
    let mf = T::from_f64_lossy((n * plane) as f64);
    let mut gx = Tensor::zeros(grad_out.shape());
    let mut gg = vec![T::zero(); c];
    let mut gb = vec![T::zero(); c];
    for ch in 0..c {
        let ranges: Vec<_> = (0..n).map(|i| (i * c + ch) * plane..(i * c + ch + 1) * plane).collect();
        let (mut sum_g, mut sum_gx) = (T::zero(), T::zero());
        for r in &ranges {
            for (&g, &xh) in grad_out.data()[r.clone()].iter().zip(&cache.xhat.data()[r.clone()]) {
                sum_g = sum_g + g;
                sum_gx = sum_gx + g * xh;
            }
        }
        gg[ch] = sum_gx;
        gb[ch] = sum_g;
        let k = gamma.data()[ch] * cache.inv_std[ch];
        for r in &ranges {
            let dst = &mut gx.data_mut()[r.clone()];
            let src = grad_out.data()[r.clone()].iter().zip(&cache.xhat.data()[r.clone()]);
            for (d, (&g, &xh)) in dst.iter_mut().zip(src) {
                *d = match cache.mode {
                    Mode::Train => k * (g - sum_g / mf - xh * sum_gx / mf),
                    Mode::Eval => k * g,
                };
            }
        }
    }
    Ok((gx, Tensor::new(&[c], gg)?, Tensor::new(&[c], gb)?))
}
