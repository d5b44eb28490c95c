//! Stateless operators with explicit backward functions.

use super::tensor::{mat, Scalar, Tensor};
use crate::error::{Error, Result};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient passes where the forward input was strictly positive.
pub fn relu_backward<T: Scalar>(grad_out: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.zip_map(x, "relu_backward", |g, v| if v > T::zero() { g } else { T::zero() })
}

fn linear_dims<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, op: &'static str) -> Result<(usize, usize, usize)> {
    x.expect_rank(2, op)?;
    weight.expect_rank(2, op)?;
    if x.dim(1) != weight.dim(1) {
        return Err(Error::Shape {
            op,
            left: x.shape().to_vec(),
            right: weight.shape().to_vec(),
        });
    }
    Ok((x.dim(0), x.dim(1), weight.dim(0)))
}

/// `y = x W^T + b` for `x: [N, in]`, `W: [out, in]`.
pub fn linear<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let (n, fin, fout) = linear_dims(x, weight, "linear")?;
    let mut y = Tensor::zeros(&[n, fout]);
    mat::mmt(n, fin, fout, x.data(), weight.data(), y.data_mut(), false);
    if let Some(b) = bias {
        b.expect_shape(&[fout], "linear")?;
        for row in y.data_mut().chunks_exact_mut(fout) {
            for (v, &bb) in row.iter_mut().zip(b.data()) {
                *v = *v + bb;
            }
        }
    }
    Ok(y)
}

/// `(grad_x, grad_weight, grad_bias)` of [`linear`].
pub fn linear_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    x: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, fin, fout) = linear_dims(x, weight, "linear_backward")?;
    grad_out.expect_shape(&[n, fout], "linear_backward")?;
    let mut gx = Tensor::zeros(&[n, fin]);
    mat::mm(n, fout, fin, grad_out.data(), weight.data(), gx.data_mut(), false);
    let mut gw = Tensor::zeros(&[fout, fin]);
    mat::mtm(fout, n, fin, grad_out.data(), x.data(), gw.data_mut(), false);
    let mut gb = vec![T::zero(); fout];
    for row in grad_out.data().chunks_exact(fout) {
        for (g, &v) in gb.iter_mut().zip(row) {
            *g = *g + v;
        }
    }
    Ok((gx, gw, Tensor::new(&[fout], gb)?))
}

/// Row-wise softmax of `[N, K]` logits, stabilized by subtracting the row max.
pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    x.expect_rank(2, "softmax")?;
    let k = x.dim(1);
    let mut y = x.clone();
    for row in y.data_mut().chunks_exact_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total = total + *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
    Ok(y)
}

/// Backward of [`softmax`] given its output `y`.
pub fn softmax_backward<T: Scalar>(grad_out: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.expect_shape(y.shape(), "softmax_backward")?;
    let k = y.dim(1);
    let mut gx = grad_out.clone();
    for (g, s) in gx.data_mut().chunks_exact_mut(k).zip(y.data().chunks_exact(k)) {
        let inner: T = g.iter().zip(s).map(|(&a, &b)| a * b).sum();
        for (gi, &si) in g.iter_mut().zip(s) {
            *gi = si * (*gi - inner);
        }
    }
    Ok(gx)
}

/// Source taps for one output coordinate of an align-corners-false resize.
#[derive(Debug, Clone, Copy)]
struct Tap<T> {
    i0: usize,
    i1: usize,
    w1: T,
}

fn taps<T: Scalar>(input: usize, output: usize) -> Vec<Tap<T>> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            Tap {
                i0,
                i1,
                w1: T::from_f64_lossy(src - i0 as f64),
            }
        })
        .collect()
}

/// Bilinear resize of `[N, C, H, W]` to `[N, C, th, tw]` (align corners false).
pub fn bilinear_resize<T: Scalar>(x: &Tensor<T>, th: usize, tw: usize) -> Result<Tensor<T>> {
    x.expect_rank(4, "bilinear_resize")?;
    if th == 0 || tw == 0 {
        return Err(Error::domain("bilinear_resize: target dims must be >= 1"));
    }
    let (n, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    if (h, w) == (th, tw) {
        return Ok(x.clone());
    }
    let (ty, tx) = (taps::<T>(h, th), taps::<T>(w, tw));
    let mut y = Tensor::zeros(&[n, c, th, tw]);
    let one = T::one();
    for (src, dst) in x.data().chunks_exact(h * w).zip(y.data_mut().chunks_exact_mut(th * tw)) {
        for (oy, a) in ty.iter().enumerate() {
            let r0 = &src[a.i0 * w..(a.i0 + 1) * w];
            let r1 = &src[a.i1 * w..(a.i1 + 1) * w];
            for (ox, b) in tx.iter().enumerate() {
                let top = r0[b.i0] * (one - b.w1) + r0[b.i1] * b.w1;
                let bot = r1[b.i0] * (one - b.w1) + r1[b.i1] * b.w1;
                dst[oy * tw + ox] = top * (one - a.w1) + bot * a.w1;
            }
        }
    }
    Ok(y)
}

/// Adjoint of [`bilinear_resize`]: scatters output gradients onto `in_shape`.
pub fn bilinear_resize_backward<T: Scalar>(grad_out: &Tensor<T>, in_shape: &[usize]) -> Result<Tensor<T>> {
    grad_out.expect_rank(4, "bilinear_resize_backward")?;
    let (h, w) = (in_shape[2], in_shape[3]);
    let (th, tw) = (grad_out.dim(2), grad_out.dim(3));
    if grad_out.dim(0) != in_shape[0] || grad_out.dim(1) != in_shape[1] {
        return Err(Error::Shape {
            op: "bilinear_resize_backward",
            left: grad_out.shape().to_vec(),
            right: in_shape.to_vec(),
        });
    }
    if (h, w) == (th, tw) {
        return Ok(grad_out.clone());
    }
    let (ty, tx) = (taps::<T>(h, th), taps::<T>(w, tw));
    let mut gx = Tensor::zeros(in_shape);
    let one = T::one();
    for (g, dst) in grad_out.data().chunks_exact(th * tw).zip(gx.data_mut().chunks_exact_mut(h * w)) {
        for (oy, a) in ty.iter().enumerate() {
            for (ox, b) in tx.iter().enumerate() {
                let v = g[oy * tw + ox];
                let (vt, vb) = (v * (one - a.w1), v * a.w1);
                dst[a.i0 * w + b.i0] = dst[a.i0 * w + b.i0] + vt * (one - b.w1);
                dst[a.i0 * w + b.i1] = dst[a.i0 * w + b.i1] + vt * b.w1;
                dst[a.i1 * w + b.i0] = dst[a.i1 * w + b.i0] + vb * (one - b.w1);
                dst[a.i1 * w + b.i1] = dst[a.i1 * w + b.i1] + vb * b.w1;
            }
        }
    }
    Ok(gx)
}

/// `[N, C, H, W] -> [N, C]` spatial mean.
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    x.expect_rank(4, "global_avg_pool")?;
    let plane = x.dim(2) * x.dim(3);
    let inv = T::one() / T::from_f64_lossy(plane as f64);
    let data = x.data().chunks_exact(plane).map(|p| p.iter().copied().sum::<T>() * inv).collect();
    Tensor::new(&[x.dim(0), x.dim(1)], data)
}

pub fn global_avg_pool_backward<T: Scalar>(grad_out: &Tensor<T>, in_shape: &[usize]) -> Result<Tensor<T>> {
    grad_out.expect_shape(&in_shape[..2], "global_avg_pool_backward")?;
    let plane = in_shape[2] * in_shape[3];
    let inv = T::one() / T::from_f64_lossy(plane as f64);
    let data = grad_out.data().iter().flat_map(|&g| std::iter::repeat_n(g * inv, plane)).collect();
    Tensor::new(in_shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn relu_example() {
        let x = Tensor::new(&[3], vec![-1.0f32, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn softmax_uniform() {
        let x = Tensor::full(&[2, 30], 0.7f64);
        let y = softmax(&x).unwrap();
        assert!(y.data().iter().all(|&v| (v - 1.0 / 30.0).abs() < 1e-15));
    }

    #[test]
    fn softmax_large_logits_stay_finite() {
        let x = Tensor::new(&[1, 3], vec![1000.0f32, 1001.0, 999.0]).unwrap();
        let y = softmax(&x).unwrap();
        assert!(y.all_finite());
        assert!((y.sum() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn linear_identity() {
        let x = Tensor::new(&[2, 3], vec![1.0f64, -2.0, 3.0, 0.5, 0.0, 4.0]).unwrap();
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 4] = 1.0;
        }
        let b = Tensor::zeros(&[3]);
        assert_eq!(linear(&x, &w, Some(&b)).unwrap(), x);
        assert!(linear(&x, &Tensor::zeros(&[3, 4]), None).is_err());
    }

    #[test]
    fn resize_identity_and_broadcast() {
        let x = Tensor::new(&[1, 1, 2, 3], vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(bilinear_resize(&x, 2, 3).unwrap(), x);
        let seven = Tensor::full(&[1, 2, 1, 1], 7.0f32);
        let y = bilinear_resize(&seven, 224, 224).unwrap();
        assert_eq!(y.shape(), &[1, 2, 224, 224]);
        assert!(y.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn resize_two_to_four_hand_weights() {
        // Rows interpolate as [a, 0.75a + 0.25b, 0.25a + 0.75b, b].
        let x = Tensor::new(&[1, 1, 2, 2], vec![0.0f64, 4.0, 8.0, 12.0]).unwrap();
        let y = bilinear_resize(&x, 4, 4).unwrap();
        let axis = |a: f64, b: f64| [a, 0.75 * a + 0.25 * b, 0.25 * a + 0.75 * b, b];
        let top = axis(0.0, 4.0);
        let bot = axis(8.0, 12.0);
        for (r, wy) in [(0usize, 0.0), (1, 0.25), (2, 0.75), (3, 1.0)] {
            for c in 0..4 {
                let want = top[c] * (1.0 - wy) + bot[c] * wy;
                assert!((y.data()[r * 4 + c] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pool_and_backward() {
        let x = Tensor::new(&[1, 2, 1, 2], vec![1.0f64, 3.0, -2.0, 2.0]).unwrap();
        assert_eq!(global_avg_pool(&x).unwrap().data(), &[2.0, 0.0]);
        let g = Tensor::new(&[1, 2], vec![2.0, 4.0]).unwrap();
        assert_eq!(global_avg_pool_backward(&g, x.shape()).unwrap().data(), &[1.0, 1.0, 2.0, 2.0]);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_shift_invariant(
            v in proptest::collection::vec(-30.0f64..30.0, 2..40),
            c in -50.0f64..50.0,
        ) {
            let k = v.len();
            let x = Tensor::new(&[1, k], v.clone()).unwrap();
            let y = softmax(&x).unwrap();
            prop_assert!((y.sum() - 1.0).abs() < 1e-12);
            let shifted = softmax(&x.map(|a| a + c)).unwrap();
            for (a, b) in y.data().iter().zip(shifted.data()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn resize_backward_is_adjoint(
            h in 1usize..5, w in 1usize..5, th in 1usize..9, tw in 1usize..9,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = Tensor::new(&[1, 2, h, w], (0..2 * h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let r = Tensor::new(&[1, 2, th, tw], (0..2 * th * tw).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let lhs: f64 = bilinear_resize(&x, th, tw).unwrap().dot(&r).unwrap();
            let rhs = x.dot(&bilinear_resize_backward(&r, x.shape()).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
