//! Stateful layers: parameters, forward caches and explicit backward passes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::batchnorm::{batchnorm2d, batchnorm2d_backward, BnCache, Mode};
use super::conv::{
    conv2d_backward, conv2d_forward, conv_transpose2d_backward, conv_transpose2d_forward, ConvGeometry,
};
use super::ops;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    /// Kaiming-uniform: `U(-b, b)` with `b = sqrt(6 / fan_in)`.
    pub fn kaiming(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::from_f64_lossy(rng.random_range(-bound..bound))).collect();
        Self::new(Tensor::new(shape, data).expect("init shape"))
    }

    fn accumulate(&mut self, g: &Tensor<T>) -> Result<()> {
        self.grad.add_assign(g)
    }
}

/// What a layer exposes for optimizers and checkpoints.
pub enum Slot<'a, T> {
    Param(&'a mut Param<T>),
    /// Non-trainable state saved with the model (batch-norm running stats).
    Buffer(&'a mut Tensor<T>),
}

impl<T> Slot<'_, T> {
    pub fn tensor(&self) -> &Tensor<T> {
        match self {
            Slot::Param(p) => &p.value,
            Slot::Buffer(b) => b,
        }
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor<T> {
        match self {
            Slot::Param(p) => &mut p.value,
            Slot::Buffer(b) => b,
        }
    }
}

pub type Slots<'a, T> = Vec<(String, Slot<'a, T>)>;

pub trait Layer<T: Scalar>: Send {
    /// Runs the layer and keeps whatever [`Layer::backward`] needs.
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>>;

    /// Adds parameter gradients into each [`Param::grad`] and returns the
    /// gradient with respect to the last forward input.
    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>>;

    /// Appends parameters and buffers in a fixed order, names prefixed.
    fn visit<'a>(&'a mut self, prefix: &str, out: &mut Slots<'a, T>);
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn cached<'c, T>(cache: &'c Option<Tensor<T>>, layer: &str) -> Result<&'c Tensor<T>> {
    cache
        .as_ref()
        .ok_or_else(|| Error::domain(format!("{layer}: backward called before forward")))
}

pub fn slots<T: Scalar>(layer: &mut dyn Layer<T>) -> Slots<'_, T> {
    let mut out = Vec::new();
    layer.visit("", &mut out);
    out
}

pub fn params_mut<T: Scalar>(layer: &mut dyn Layer<T>) -> Vec<&mut Param<T>> {
    slots(layer)
        .into_iter()
        .filter_map(|(_, s)| match s {
            Slot::Param(p) => Some(p),
            Slot::Buffer(_) => None,
        })
        .collect()
}

pub fn zero_grad<T: Scalar>(layer: &mut dyn Layer<T>) {
    for p in params_mut(layer) {
        p.grad.fill(T::zero());
    }
}

/// Number of trainable scalars.
pub fn param_count<T: Scalar>(layer: &mut dyn Layer<T>) -> usize {
    params_mut(layer).iter().map(|p| p.value.len()).sum()
}

pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    pub geom: ConvGeometry,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(cin: usize, cout: usize, geom: ConvGeometry, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        let k = geom.kernel;
        Self {
            weight: Param::kaiming(&[cout, cin, k, k], cin * k * k, rng),
            bias: bias.then(|| Param::new(Tensor::zeros(&[cout]))),
            geom,
            input: None,
        }
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let y = conv2d_forward(x, &self.weight.value, self.bias.as_ref().map(|b| &b.value), &self.geom)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = cached(&self.input, "conv2d")?;
        let (gx, gw, gb) = conv2d_backward(grad_out, x, &self.weight.value, &self.geom)?;
        self.weight.accumulate(&gw)?;
        if let Some(b) = &mut self.bias {
            b.accumulate(&gb)?;
        }
        Ok(gx)
    }

    fn visit<'a>(&'a mut self, prefix: &str, out: &mut Slots<'a, T>) {
        out.push((join(prefix, "weight"), Slot::Param(&mut self.weight)));
        if let Some(b) = &mut self.bias {
            out.push((join(prefix, "bias"), Slot::Param(b)));
        }
    }
}

pub struct ConvTranspose2d<T> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    pub geom: ConvGeometry,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new(cin: usize, cout: usize, geom: ConvGeometry, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        let k = geom.kernel;
        // Each output pixel sees about ceil(k/s)^2 taps per input channel.
        let taps = k.div_ceil(geom.stride);
        Self {
            weight: Param::kaiming(&[cin, cout, k, k], cin * taps * taps, rng),
            bias: bias.then(|| Param::new(Tensor::zeros(&[cout]))),
            geom,
            input: None,
        }
    }
}

impl<T: Scalar> Layer<T> for ConvTranspose2d<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let y = conv_transpose2d_forward(x, &self.weight.value, self.bias.as_ref().map(|b| &b.value), &self.geom)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = cached(&self.input, "conv_transpose2d")?;
        let (gx, gw, gb) = conv_transpose2d_backward(grad_out, x, &self.weight.value, &self.geom)?;
        self.weight.accumulate(&gw)?;
        if let Some(b) = &mut self.bias {
            b.accumulate(&gb)?;
        }
        Ok(gx)
    }

    fn visit<'a>(&'a mut self, prefix: &str, out: &mut Slots<'a, T>) {
        out.push((join(prefix, "weight"), Slot::Param(&mut self.weight)));
        if let Some(b) = &mut self.bias {
            out.push((join(prefix, "bias"), Slot::Param(b)));
        }
    }
}

pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: T,
    pub momentum: T,
    cache: Option<BnCache<T>>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::full(&[channels], T::one())),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            eps: T::from_f64_lossy(1e-5),
            momentum: T::from_f64_lossy(0.1),
            cache: None,
        }
    }
}

impl<T: Scalar> Layer<T> for BatchNorm2d<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (y, cache) = batchnorm2d(
            x,
            &self.gamma.value,
            &self.beta.value,
            &mut self.running_mean,
            &mut self.running_var,
            self.eps,
            self.momentum,
            mode,
        )?;
        self.cache = Some(cache);
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::domain("batchnorm2d: backward called before forward"))?;
        let (gx, gg, gb) = batchnorm2d_backward(grad_out, cache, &self.gamma.value)?;
        self.gamma.accumulate(&gg)?;
        self.beta.accumulate(&gb)?;
        Ok(gx)
    }

    fn visit<'a>(&'a mut self, prefix: &str, out: &mut Slots<'a, T>) {
        out.push((join(prefix, "gamma"), Slot::Param(&mut self.gamma)));
        out.push((join(prefix, "beta"), Slot::Param(&mut self.beta)));
        out.push((join(prefix, "running_mean"), Slot::Buffer(&mut self.running_mean)));
        out.push((join(prefix, "running_var"), Slot::Buffer(&mut self.running_var)));
    }
}

/// Fully connected layer on `[N, in]` rows.
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(fin: usize, fout: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: Param::kaiming(&[fout, fin], fin, rng),
            bias: Param::new(Tensor::zeros(&[fout])),
            input: None,
        }
    }
}

impl<T: Scalar> Layer<T> for Linear<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let y = ops::linear(x, &self.weight.value, Some(&self.bias.value))?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = cached(&self.input, "linear")?;
        let (gx, gw, gb) = ops::linear_backward(grad_out, x, &self.weight.value)?;
        self.weight.accumulate(&gw)?;
        self.bias.accumulate(&gb)?;
        Ok(gx)
    }

    fn visit<'a>(&'a mut self, prefix: &str, out: &mut Slots<'a, T>) {
        out.push((join(prefix, "weight"), Slot::Param(&mut self.weight)));
        out.push((join(prefix, "bias"), Slot::Param(&mut self.bias)));
    }
}

#[derive(Default)]
pub struct Relu<T> {
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Self { input: None }
    }
}

impl<T: Scalar> Layer<T> for Relu<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        self.input = Some(x.clone());
        Ok(ops::relu(x))
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        ops::relu_backward(grad_out, cached(&self.input, "relu")?)
    }

    fn visit<'a>(&'a mut self, _prefix: &str, _out: &mut Slots<'a, T>) {}
}

/// Bilinear resize to a fixed spatial size.
pub struct Resize {
    pub target: (usize, usize),
    in_shape: Option<Vec<usize>>,
}

impl Resize {
    pub fn new(h: usize, w: usize) -> Self {
        Self {
            target: (h, w),
            in_shape: None,
        }
    }
}

impl<T: Scalar> Layer<T> for Resize {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        self.in_shape = Some(x.shape().to_vec());
        ops::bilinear_resize(x, self.target.0, self.target.1)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.in_shape.as_ref().ok_or_else(|| Error::domain("resize: backward before forward"))?;
        ops::bilinear_resize_backward(grad_out, shape)
    }

    fn visit<'a>(&'a mut self, _prefix: &str, _out: &mut Slots<'a, T>) {}
}

#[derive(Default)]
pub struct GlobalAvgPool {
    in_shape: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for GlobalAvgPool {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        self.in_shape = Some(x.shape().to_vec());
        ops::global_avg_pool(x)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.in_shape.as_ref().ok_or_else(|| Error::domain("pool: backward before forward"))?;
        ops::global_avg_pool_backward(grad_out, shape)
    }

    fn visit<'a>(&'a mut self, _prefix: &str, _out: &mut Slots<'a, T>) {}
}

/// Layers applied in order.
#[derive(Default)]
pub struct Sequential<T> {
    layers: Vec<(String, Box<dyn Layer<T>>)>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new() -> Self {
        Self { layers: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, layer: impl Layer<T> + 'static) -> &mut Self {
        self.layers.push((name.into(), Box::new(layer)));
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Forward pass that also returns every intermediate output shape.
    pub fn forward_traced(&mut self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Vec<(String, Vec<usize>)>)> {
        let mut cur = x.clone();
        let mut trace = Vec::with_capacity(self.layers.len());
        for (name, layer) in &mut self.layers {
            cur = layer.forward(&cur, mode)?;
            trace.push((name.clone(), cur.shape().to_vec()));
        }
        Ok((cur, trace))
    }
}

impl<T: Scalar> Layer<T> for Sequential<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut layers = self.layers.iter_mut();
        let Some((_, first)) = layers.next() else {
            return Ok(x.clone());
        };
        let mut cur = first.forward(x, mode)?;
        for (_, layer) in layers {
            cur = layer.forward(&cur, mode)?;
        }
        Ok(cur)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad_out.clone();
        for (_, layer) in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    fn visit<'a>(&'a mut self, prefix: &str, out: &mut Slots<'a, T>) {
        for (name, layer) in &mut self.layers {
            layer.visit(&join(prefix, name), out);
        }
    }
}

/// Two 3x3 conv/BN pairs with an identity or 1x1 projection shortcut.
pub struct BasicBlock<T> {
    main: Sequential<T>,
    shortcut: Option<Sequential<T>>,
    out_relu: Relu<T>,
}

impl<T: Scalar> BasicBlock<T> {
    pub fn new(cin: usize, cout: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut main = Sequential::new();
        main.push("conv1", Conv2d::new(cin, cout, ConvGeometry::new(3, stride, 1), false, rng))
            .push("bn1", BatchNorm2d::new(cout))
            .push("relu", Relu::new())
            .push("conv2", Conv2d::new(cout, cout, ConvGeometry::new(3, 1, 1), false, rng))
            .push("bn2", BatchNorm2d::new(cout));
        let shortcut = (stride != 1 || cin != cout).then(|| {
            let mut s = Sequential::new();
            s.push("conv", Conv2d::new(cin, cout, ConvGeometry::new(1, stride, 0), false, rng))
                .push("bn", BatchNorm2d::new(cout));
            s
        });
        Self {
            main,
            shortcut,
            out_relu: Relu::new(),
        }
    }
}

impl<T: Scalar> Layer<T> for BasicBlock<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut y = self.main.forward(x, mode)?;
        match &mut self.shortcut {
            Some(s) => y.add_assign(&s.forward(x, mode)?)?,
            None => y.add_assign(x)?,
        }
        self.out_relu.forward(&y, mode)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.out_relu.backward(grad_out)?;
        let mut gx = self.main.backward(&g)?;
        match &mut self.shortcut {
            Some(s) => gx.add_assign(&s.backward(&g)?)?,
            None => gx.add_assign(&g)?,
        }
        Ok(gx)
    }

    fn visit<'a>(&'a mut self, prefix: &str, out: &mut Slots<'a, T>) {
        self.main.visit(prefix, out);
        if let Some(s) = &mut self.shortcut {
            s.visit(&join(prefix, "shortcut"), out);
        }
    }
}

/// `[N, C, H, W] <-> [N, C*H*W]` view change.
#[derive(Default)]
pub struct Flatten {
    in_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for Flatten {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        self.in_shape = Some(x.shape().to_vec());
        let n = x.dim(0);
        x.clone().reshape(&[n, x.len() / n.max(1)])
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.in_shape.as_ref().ok_or_else(|| Error::domain("flatten: backward before forward"))?;
        grad_out.clone().reshape(shape)
    }

    fn visit<'a>(&'a mut self, _prefix: &str, _out: &mut Slots<'a, T>) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn visitor_names_and_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut block = BasicBlock::<f32>::new(4, 8, 2, &mut rng);
        let names: Vec<String> = slots(&mut block).into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[0], "conv1.weight");
        assert!(names.contains(&"shortcut.bn.running_var".to_string()));
        // 8*4*9 + 2*8 + 8*8*9 + 2*8 + 8*4 + 2*8
        assert_eq!(param_count(&mut block), 288 + 16 + 576 + 16 + 32 + 16);
    }

    #[test]
    fn same_seed_same_init() {
        let a = Conv2d::<f32>::new(3, 5, ConvGeometry::new(3, 1, 1), true, &mut ChaCha8Rng::seed_from_u64(7));
        let b = Conv2d::<f32>::new(3, 5, ConvGeometry::new(3, 1, 1), true, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a.weight, b.weight);
        let bound = (6.0f32 / 27.0).sqrt();
        assert!(a.weight.value.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn backward_before_forward_errors() {
        let mut l = Linear::<f32>::new(2, 2, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(l.backward(&Tensor::zeros(&[1, 2])).is_err());
    }

    #[test]
    fn sequential_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = Sequential::<f32>::new();
        s.push("up", ConvTranspose2d::new(3, 2, ConvGeometry::new(4, 2, 1), true, &mut rng))
            .push("pool", GlobalAvgPool::new());
        let (y, trace) = s.forward_traced(&Tensor::zeros(&[2, 3, 3, 3]), Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[2, 2]);
        assert_eq!(trace[0].1, vec![2, 2, 6, 6]);
    }
}
