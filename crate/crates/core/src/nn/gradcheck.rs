//! Central finite-difference gradient checking in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::batchnorm::Mode;
use super::layer::{params_mut, zero_grad, Layer, Param};
use super::tensor::Tensor;
use crate::error::Result;

pub const STEP: f64 = 1e-5;

/// Smallest denominator used in the relative error, so coordinates whose
/// true gradient is ~0 are judged on absolute error at this scale.
pub const REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose stencil straddled a kink (one-sided slopes disagree).
    pub skipped: usize,
}

impl GradReport {
    fn merge(&mut self, other: GradReport) {
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.checked += other.checked;
        self.skipped += other.skipped;
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares an analytic gradient with central differences of `f` at `x`.
pub fn check_fn(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> GradReport {
    let mut rep = GradReport::default();
    let mut probe = x.to_vec();
    let f0 = f(&probe);
    for i in 0..x.len() {
        probe[i] = x[i] + STEP;
        let fp = f(&probe);
        probe[i] = x[i] - STEP;
        let fm = f(&probe);
        probe[i] = x[i];
        let (right, left) = ((fp - f0) / STEP, (f0 - fm) / STEP);
        if (right - left).abs() > 1e-2 * right.abs().max(left.abs()).max(1.0) {
            rep.skipped += 1;
            continue;
        }
        rep.max_rel_error = rep.max_rel_error.max(rel_error(analytic[i], (fp - fm) / (2.0 * STEP)));
        rep.checked += 1;
    }
    rep
}

fn nth_param(layer: &mut dyn Layer<f64>, idx: usize) -> &mut Param<f64> {
    params_mut(layer).into_iter().nth(idx).expect("parameter index")
}

fn probe_loss(layer: &mut dyn Layer<f64>, x: &Tensor<f64>, r: &Tensor<f64>, mode: Mode) -> f64 {
    layer.forward(x, mode).and_then(|y| y.dot(r)).expect("forward during gradient check")
}

/// Checks input and parameter gradients of `layer` at `x` for the scalar
/// `L = <layer(x), r>` with a random projection `r`.
///
/// Batch-norm running statistics drift during probing but do not enter the
/// train-mode output, so the check is unaffected by them.
pub fn check_layer(layer: &mut dyn Layer<f64>, x: &Tensor<f64>, mode: Mode, seed: u64) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = layer.forward(x, mode)?;
    let r = Tensor::new(y.shape(), (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    zero_grad(layer);
    layer.forward(x, mode)?;
    let gx = layer.backward(&r)?;

    let mut report = check_fn(
        |v| {
            let xt = Tensor::new(x.shape(), v.to_vec()).expect("probe shape");
            probe_loss(layer, &xt, &r, mode)
        },
        x.data(),
        gx.data(),
    );

    let n_params = params_mut(layer).len();
    for idx in 0..n_params {
        let (values, grads) = {
            let p = nth_param(layer, idx);
            (p.value.data().to_vec(), p.grad.data().to_vec())
        };
        let rep = check_fn(
            |v| {
                nth_param(layer, idx).value.data_mut().copy_from_slice(v);
                probe_loss(layer, x, &r, mode)
            },
            &values,
            &grads,
        );
        nth_param(layer, idx).value.data_mut().copy_from_slice(&values);
        report.merge(rep);
    }
    Ok(report)
}

/// Uniform tensor whose entries avoid `(-margin, margin)`, keeping ReLU and
/// L1 kinks out of the difference stencil.
pub fn random_away_from_zero(shape: &[usize], margin: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(margin..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape, data).expect("shape")
}

use super::conv::ConvGeometry;
use super::layer::{BasicBlock, BatchNorm2d, Conv2d, ConvTranspose2d, GlobalAvgPool, Linear, Relu, Resize};
use super::loss::{cross_entropy_loss, joint_loss, l1_loss};
use super::ops::{softmax, softmax_backward};

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape")
}

fn randomize_params(layer: &mut dyn Layer<f64>, rng: &mut ChaCha8Rng) {
    for p in params_mut(layer) {
        for v in p.value.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
    }
}

fn tensor_fn_check(
    x: &Tensor<f64>,
    forward: impl Fn(&Tensor<f64>) -> Tensor<f64>,
    backward: impl Fn(&Tensor<f64>, &Tensor<f64>) -> Tensor<f64>,
    rng: &mut ChaCha8Rng,
) -> GradReport {
    let y = forward(x);
    let r = uniform(y.shape(), rng);
    let analytic = backward(&r, x);
    check_fn(
        |v| forward(&Tensor::new(x.shape(), v.to_vec()).expect("shape")).dot(&r).expect("dot"),
        x.data(),
        analytic.data(),
    )
}

/// Operators covered by [`run_suite`].
pub const SUITE_OPS: [&str; 13] = [
    "conv2d",
    "conv_transpose2d",
    "batchnorm2d_train",
    "batchnorm2d_eval",
    "linear",
    "relu",
    "softmax",
    "bilinear_resize",
    "global_avg_pool",
    "basic_block",
    "l1_loss",
    "cross_entropy_loss",
    "joint_loss",
];

/// One trial of `op` on freshly randomized small tensors and parameters.
pub fn check_op(op: &str, seed: u64) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    let report = match op {
        "conv2d" | "conv_transpose2d" => {
            let k = rng.random_range(1..=3);
            let s = rng.random_range(1..=2);
            let p = rng.random_range(0..k);
            let (cin, cout, hw) = (rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(3..=5));
            let x = uniform(&[2, cin, hw, hw], rng);
            if op == "conv2d" {
                let mut l = Conv2d::new(cin, cout, ConvGeometry::new(k, s, p), true, rng);
                randomize_params(&mut l, rng);
                check_layer(&mut l, &x, Mode::Train, rng.random())?
            } else {
                let g = ConvGeometry::new(k, s, 0).with_output_padding(rng.random_range(0..s));
                let mut l = ConvTranspose2d::new(cin, cout, g, true, rng);
                randomize_params(&mut l, rng);
                check_layer(&mut l, &x, Mode::Train, rng.random())?
            }
        }
        "batchnorm2d_train" | "batchnorm2d_eval" => {
            let c = rng.random_range(1..=3);
            let x = uniform(&[3, c, 3, 2], rng).map(|v| 2.0 * v + 0.5);
            let mut l = BatchNorm2d::new(c);
            randomize_params(&mut l, rng);
            let mode = if op.ends_with("train") { Mode::Train } else { Mode::Eval };
            if mode == Mode::Eval {
                l.running_mean = uniform(&[c], rng);
                l.running_var = uniform(&[c], rng).map(|v| v.abs() + 0.5);
            }
            check_layer(&mut l, &x, mode, rng.random())?
        }
        "linear" => {
            let (fin, fout) = (rng.random_range(1..=6), rng.random_range(1..=6));
            let x = uniform(&[3, fin], rng);
            let mut l = Linear::new(fin, fout, rng);
            randomize_params(&mut l, rng);
            check_layer(&mut l, &x, Mode::Train, rng.random())?
        }
        "relu" => {
            let x = random_away_from_zero(&[2, 3, 2, 2], 1e-3, rng);
            check_layer(&mut Relu::new(), &x, Mode::Train, rng.random())?
        }
        "softmax" => {
            let x = uniform(&[3, rng.random_range(2..=8)], rng).map(|v| 3.0 * v);
            tensor_fn_check(
                &x,
                |x| softmax(x).expect("softmax"),
                |g, x| softmax_backward(g, &softmax(x).expect("softmax")).expect("backward"),
                rng,
            )
        }
        "bilinear_resize" => {
            let (h, w) = (rng.random_range(1..=4), rng.random_range(1..=4));
            let x = uniform(&[2, 2, h, w], rng);
            let mut l = Resize::new(rng.random_range(1..=7), rng.random_range(1..=7));
            check_layer(&mut l, &x, Mode::Train, rng.random())?
        }
        "global_avg_pool" => {
            let x = uniform(&[2, 3, rng.random_range(1..=4), rng.random_range(1..=4)], rng);
            check_layer(&mut GlobalAvgPool::new(), &x, Mode::Train, rng.random())?
        }
        "basic_block" => {
            let (cin, cout, s) = (rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=2));
            let x = uniform(&[2, cin, 4, 4], rng);
            let mut l = BasicBlock::new(cin, cout, s, rng);
            check_layer(&mut l, &x, Mode::Train, rng.random())?
        }
        "l1_loss" => {
            let k = rng.random_range(1..=4);
            let t = uniform(&[3, k], rng);
            let offset = random_away_from_zero(&[3, k], 1e-3, rng);
            let p = t.add(&offset)?;
            let (_, g) = l1_loss(&p, &t)?;
            check_fn(
                |v| l1_loss(&Tensor::new(p.shape(), v.to_vec()).expect("shape"), &t).expect("l1").0,
                p.data(),
                g.data(),
            )
        }
        "cross_entropy_loss" => {
            let k = rng.random_range(2..=10);
            let x = uniform(&[4, k], rng).map(|v| 4.0 * v);
            let classes: Vec<usize> = (0..4).map(|_| rng.random_range(0..k)).collect();
            let (_, g) = cross_entropy_loss(&x, &classes)?;
            check_fn(
                |v| {
                    cross_entropy_loss(&Tensor::new(x.shape(), v.to_vec()).expect("shape"), &classes)
                        .expect("ce")
                        .0
                },
                x.data(),
                g.data(),
            )
        }
        "joint_loss" => {
            let alpha = rng.random_range(0.0..2.0);
            let at = [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)];
            let (_, (db, di)) = joint_loss(at[0], at[1], alpha)?;
            check_fn(|v| joint_loss(v[0], v[1], alpha).expect("joint").0, &at, &[db, di])
        }
        other => return Err(crate::Error::domain(format!("unknown gradient-check op {other}"))),
    };
    Ok(report)
}

/// Runs `trials` seeded checks of every op in [`SUITE_OPS`].
pub fn run_suite(trials: usize, seed: u64) -> Result<Vec<(&'static str, GradReport)>> {
    SUITE_OPS
        .iter()
        .enumerate()
        .map(|(i, &op)| {
            let mut total = GradReport::default();
            for t in 0..trials {
                total.merge(check_op(op, crate::seed::stream_seed(seed ^ i as u64, t as u64))?);
            }
            Ok((op, total))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_a_wrong_gradient() {
        let rep = check_fn(|v| v[0] * v[0], &[1.5], &[2.0]);
        assert!(rep.max_rel_error > 0.1);
        let ok = check_fn(|v| v[0] * v[0], &[1.5], &[3.0]);
        assert!(ok.max_rel_error < 1e-9);
    }

    #[test]
    fn skips_kinks() {
        let rep = check_fn(|v| v[0].abs(), &[1e-7], &[1.0]);
        assert_eq!((rep.checked, rep.skipped), (0, 1));
    }

    #[test]
    fn every_op_passes_a_few_trials() {
        for (op, rep) in run_suite(3, 11).unwrap() {
            assert!(rep.max_rel_error < 1e-5, "{op}: {rep:?}");
            assert!(rep.checked > 0, "{op}");
        }
    }
}
