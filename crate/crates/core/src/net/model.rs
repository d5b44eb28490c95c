use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{GenStage, NetConfig, Task};
use crate::error::{Error, Result};
use crate::nn::{
    params_mut, BasicBlock, BatchNorm2d, Checkpoint, Conv2d, ConvGeometry, ConvTranspose2d, GlobalAvgPool, Layer,
    Linear, Mode, Param, Relu, Resize, Sequential, Slot, Slots, Tensor,
};
use crate::pipeline::Instance;
use crate::seed::derive_seed;

/// Length of one network input (subcarrier amplitudes).
pub const INPUT_LEN: usize = 30;

/// Per-feature input standardization and per-biometric min/max bounds,
/// fitted on the training split and saved with the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_mean: Vec<f32>,
    pub input_std: Vec<f32>,
    pub bio_min: Vec<f32>,
    pub bio_max: Vec<f32>,
}

impl Normalization {
    fn identity(n_bio: usize) -> Self {
        Self {
            input_mean: vec![0.0; INPUT_LEN],
            input_std: vec![1.0; INPUT_LEN],
            bio_min: vec![0.0; n_bio],
            bio_max: vec![1.0; n_bio],
        }
    }

    /// Maps biometrics into `[0, 1]` over the fitted range.
    pub fn normalize_bio(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.bio_min.iter().zip(&self.bio_max))
            .map(|(&x, (&lo, &hi))| (x - lo as f64) / span(lo, hi))
            .collect()
    }

    pub fn denormalize_bio(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.bio_min.iter().zip(&self.bio_max))
            .map(|(&x, (&lo, &hi))| x * span(lo, hi) + lo as f64)
            .collect()
    }
}

fn span(lo: f32, hi: f32) -> f64 {
    let s = hi as f64 - lo as f64;
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Generation stage, feature-learning backbone and one head per task.
pub struct CsiNet {
    config: NetConfig,
    generation: Sequential<f32>,
    backbone: Sequential<f32>,
    heads: Vec<Sequential<f32>>,
    norm: Normalization,
    norm_tensors: [Tensor<f32>; 4],
}

fn generation_layers(config: &NetConfig, rng: &mut ChaCha8Rng) -> Result<Sequential<f32>> {
    let trace = config.generation.trace()?;
    let mut seq = Sequential::new();
    let mut ch = config.generation.in_channels;
    for (i, (stage, &(out_ch, size))) in config.generation.stages.iter().zip(&trace).enumerate() {
        let mut s = Sequential::new();
        match stage {
            GenStage::Transposed { .. } => {
                let g = stage.geometry().expect("transposed stage");
                s.push("tconv", ConvTranspose2d::new(ch, out_ch, g, false, rng))
                    .push("bn", BatchNorm2d::new(out_ch))
                    .push("relu", Relu::new());
            }
            GenStage::Resize { .. } => {
                s.push("resize", Resize::new(size, size));
            }
        }
        seq.push(format!("stage{}", i + 1), s);
        ch = out_ch;
    }
    Ok(seq)
}

fn backbone_layers(config: &NetConfig, in_ch: usize, rng: &mut ChaCha8Rng) -> Result<Sequential<f32>> {
    let b = &config.backbone;
    b.validate()?;
    let mut seq = Sequential::new();
    let mut stem = Sequential::new();
    stem.push("conv", Conv2d::new(in_ch, b.stem_channels, ConvGeometry::new(3, b.stem_stride, 1), false, rng))
        .push("bn", BatchNorm2d::new(b.stem_channels))
        .push("relu", Relu::new());
    seq.push("stem", stem);
    let mut ch = b.stem_channels;
    for (i, &(blocks, out_ch)) in b.stages.iter().enumerate() {
        let mut stage = Sequential::new();
        for j in 0..blocks {
            let stride = if j == 0 { 2 } else { 1 };
            stage.push(format!("block{}", j + 1), BasicBlock::new(ch, out_ch, stride, rng));
            ch = out_ch;
        }
        seq.push(format!("stage{}", i + 1), stage);
    }
    seq.push("pool", GlobalAvgPool::new());
    if b.projection {
        let mut proj = Sequential::new();
        proj.push("fc", Linear::new(ch, b.feature_dim, rng)).push("relu", Relu::new());
        seq.push("proj", proj);
    }
    Ok(seq)
}

/// Builds a model with parameters drawn deterministically from `seed`.
pub fn build_model(config: &NetConfig, seed: u64) -> Result<CsiNet> {
    if config.tasks.is_empty() {
        return Err(Error::Build {
            stage: "task".into(),
            reason: "no task heads configured".into(),
        });
    }
    for t in &config.tasks {
        if t.output_dim != t.task.output_dim() || !(t.alpha >= 0.0) {
            return Err(Error::Build {
                stage: format!("task.{}", t.task.name()),
                reason: format!("output_dim {} / alpha {} invalid", t.output_dim, t.alpha),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "init"));
    let generation = generation_layers(config, &mut rng)?;
    let backbone = backbone_layers(config, config.generation.out_channels()?, &mut rng)?;
    let heads = config
        .tasks
        .iter()
        .map(|t| {
            let mut h = Sequential::new();
            let mut fc = Linear::new(config.backbone.feature_dim, t.output_dim, &mut rng);
            if t.task.is_regression() {
                // Start mid-range with small weights so no output begins
                // (and stays) below the ReLU.
                fc.weight.value = fc.weight.value.scale(0.1);
                fc.bias.value.fill(0.5);
                h.push("fc", fc);
                h.push("relu", Relu::new());
            } else {
                h.push("fc", fc);
            }
            h
        })
        .collect();
    let n_bio = if config.tasks.iter().any(|t| t.task.is_regression()) { 4 } else { 0 };
    let mut net = CsiNet {
        config: config.clone(),
        generation,
        backbone,
        heads,
        norm: Normalization::identity(n_bio),
        norm_tensors: [Tensor::zeros(&[0]), Tensor::zeros(&[0]), Tensor::zeros(&[0]), Tensor::zeros(&[0])],
    };
    net.set_normalization(net.norm.clone())?;
    Ok(net)
}

impl CsiNet {
    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn tasks(&self) -> Vec<Task> {
        self.config.tasks.iter().map(|t| t.task).collect()
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn set_normalization(&mut self, norm: Normalization) -> Result<()> {
        let n_bio = self.norm.bio_min.len();
        if norm.input_mean.len() != INPUT_LEN
            || norm.input_std.len() != INPUT_LEN
            || norm.bio_min.len() != n_bio
            || norm.bio_max.len() != n_bio
        {
            return Err(Error::domain("normalization vectors have the wrong length"));
        }
        let t = |v: &[f32]| Tensor::new(&[v.len()], v.to_vec()).expect("1-d");
        self.norm_tensors = [
            t(&norm.input_mean),
            t(&norm.input_std),
            t(&norm.bio_min),
            t(&norm.bio_max),
        ];
        self.norm = norm;
        Ok(())
    }

    /// Fits input standardization and biometric bounds on `data`.
    pub fn fit_normalization(&mut self, data: &[Instance]) -> Result<()> {
        if data.is_empty() {
            return Err(Error::domain("cannot fit normalization on an empty set"));
        }
        let n = data.len() as f64;
        let mut norm = Normalization::identity(self.norm.bio_min.len());
        for j in 0..INPUT_LEN {
            let col = || data.iter().map(|i| i.amplitude.get(j).copied().unwrap_or(0.0) as f64);
            let mean = col().sum::<f64>() / n;
            let var = col().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            norm.input_mean[j] = mean as f32;
            norm.input_std[j] = var.sqrt().max(1e-6) as f32;
        }
        if !norm.bio_min.is_empty() {
            let mut lo = [f64::INFINITY; 4];
            let mut hi = [f64::NEG_INFINITY; 4];
            for inst in data {
                let b = inst
                    .label
                    .biometrics()
                    .filter(|b| b.len() == 4)
                    .ok_or_else(|| Error::domain("biometrics head needs 4 biometric values in every label"))?;
                for k in 0..4 {
                    lo[k] = lo[k].min(b[k]);
                    hi[k] = hi[k].max(b[k]);
                }
            }
            norm.bio_min = lo.iter().map(|&v| v as f32).collect();
            norm.bio_max = hi.iter().map(|&v| v as f32).collect();
        }
        self.set_normalization(norm)
    }

    /// Standardized `[N, 30, 1, 1]` batch.
    pub fn input_tensor<'a>(&self, rows: impl IntoIterator<Item = &'a [f32]>) -> Result<Tensor<f32>> {
        let mut data = Vec::new();
        let mut n = 0;
        for row in rows {
            if row.len() != INPUT_LEN {
                return Err(Error::Shape {
                    op: "csi_net input",
                    left: vec![row.len()],
                    right: vec![INPUT_LEN],
                });
            }
            data.extend(
                row.iter()
                    .zip(self.norm.input_mean.iter().zip(&self.norm.input_std))
                    .map(|(&v, (&m, &s))| (v - m) / s),
            );
            n += 1;
        }
        Tensor::new(&[n, INPUT_LEN, 1, 1], data)
    }

    /// One output tensor per head: logits, or non-negative normalized
    /// biometrics.
    pub fn forward(&mut self, x: &Tensor<f32>, mode: Mode) -> Result<Vec<Tensor<f32>>> {
        let g = self.generation.forward(x, mode)?;
        let f = self.backbone.forward(&g, mode)?;
        self.heads.iter_mut().map(|h| h.forward(&f, mode)).collect()
    }

    /// Backpropagates per-head output gradients; the shared trunk receives
    /// their sum.
    pub fn backward(&mut self, grads: &[Tensor<f32>]) -> Result<()> {
        if grads.len() != self.heads.len() {
            return Err(Error::domain(format!("{} head gradients for {} heads", grads.len(), self.heads.len())));
        }
        let mut gf: Option<Tensor<f32>> = None;
        for (h, g) in self.heads.iter_mut().zip(grads) {
            let gi = h.backward(g)?;
            match &mut gf {
                Some(acc) => acc.add_assign(&gi)?,
                None => gf = Some(gi),
            }
        }
        let gg = self.backbone.backward(&gf.expect("at least one head"))?;
        self.generation.backward(&gg)?;
        Ok(())
    }

    /// Parameters then buffers, with dotted names.
    pub fn slots(&mut self) -> Slots<'_, f32> {
        let mut out = Vec::new();
        self.generation.visit("generation", &mut out);
        self.backbone.visit("backbone", &mut out);
        for (h, t) in self.heads.iter_mut().zip(&self.config.tasks) {
            h.visit(&format!("head.{}", t.task.name()), &mut out);
        }
        let [a, b, c, d] = &mut self.norm_tensors;
        for (name, t) in [("input_mean", a), ("input_std", b), ("bio_min", c), ("bio_max", d)] {
            out.push((format!("norm.{name}"), Slot::Buffer(t)));
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<f32>> {
        let mut out = params_mut(&mut self.generation);
        out.extend(params_mut(&mut self.backbone));
        for h in &mut self.heads {
            out.extend(params_mut(h));
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(0.0);
        }
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.value.len()).sum()
    }

    pub fn checkpoint(&mut self, optimizer: Option<&crate::nn::AdamState<f32>>) -> Checkpoint {
        Checkpoint::capture(self.slots(), optimizer)
    }

    /// Loads parameters, buffers and normalization from a checkpoint of a
    /// model with the same configuration.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        ck.restore(self.slots())?;
        let [a, b, c, d] = &self.norm_tensors;
        self.norm = Normalization {
            input_mean: a.data().to_vec(),
            input_std: b.data().to_vec(),
            bio_min: c.data().to_vec(),
            bio_max: d.data().to_vec(),
        };
        Ok(())
    }

    /// Output shapes (batch dimension dropped) of the input, every
    /// generation stage, every backbone stage, the features and each head,
    /// from one eval-mode forward pass.
    pub fn shape_trace(&mut self) -> Result<Vec<(String, Vec<usize>)>> {
        let strip = |s: &[usize]| s[1..].to_vec();
        let x = Tensor::zeros(&[1, INPUT_LEN, 1, 1]);
        let mut out = vec![("input".to_string(), strip(x.shape()))];
        let (g, trace) = self.generation.forward_traced(&x, Mode::Eval)?;
        out.extend(trace.into_iter().map(|(n, s)| (format!("generation.{n}"), strip(&s))));
        out.push(("generation".into(), strip(g.shape())));
        let (f, trace) = self.backbone.forward_traced(&g, Mode::Eval)?;
        out.extend(trace.into_iter().map(|(n, s)| (format!("backbone.{n}"), strip(&s))));
        out.push(("features".into(), strip(f.shape())));
        for (h, t) in self.heads.iter_mut().zip(&self.config.tasks) {
            let y = h.forward(&f, Mode::Eval)?;
            out.push((format!("head.{}", t.task.name()), strip(y.shape())));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::config::{Scale, TaskSelection, Variant};

    fn desk(sel: TaskSelection, v: Variant) -> NetConfig {
        NetConfig::new(sel, v, Scale::Desk)
    }

    fn lookup<'a>(trace: &'a [(String, Vec<usize>)], name: &str) -> &'a [usize] {
        &trace.iter().find(|(n, _)| n == name).unwrap().1
    }

    #[test]
    fn desk_shapes() {
        let mut m = build_model(&desk(TaskSelection::Joint, Variant::Tc), 1).unwrap();
        let t = m.shape_trace().unwrap();
        assert_eq!(lookup(&t, "input"), &[30, 1, 1]);
        assert_eq!(lookup(&t, "generation"), &[6, 28, 28]);
        assert_eq!(lookup(&t, "features"), &[256]);
        assert_eq!(lookup(&t, "head.biometrics"), &[4]);
        assert_eq!(lookup(&t, "head.person"), &[30]);
    }

    #[test]
    fn same_seed_same_params() {
        let c = desk(TaskSelection::Person, Variant::Hybrid);
        let mut a = build_model(&c, 7).unwrap();
        let mut b = build_model(&c, 7).unwrap();
        assert_eq!(a.checkpoint(None), b.checkpoint(None));
        let mut d = build_model(&c, 8).unwrap();
        assert_ne!(a.checkpoint(None), d.checkpoint(None));
    }

    #[test]
    fn hybrid_is_smaller() {
        let mut tc = build_model(&desk(TaskSelection::Person, Variant::Tc), 0).unwrap();
        let mut hy = build_model(&desk(TaskSelection::Person, Variant::Hybrid), 0).unwrap();
        assert!(hy.param_count() < tc.param_count());
    }

    #[test]
    fn zeroed_heads_give_zero_outputs() {
        let mut m = build_model(&desk(TaskSelection::Joint, Variant::Tc), 2).unwrap();
        for (name, mut s) in m.slots() {
            if name.starts_with("head.") {
                s.tensor_mut().fill(0.0);
            }
        }
        let x = m.input_tensor([[0.7f32; 30].as_slice(), [1.3f32; 30].as_slice()]).unwrap();
        for y in m.forward(&x, Mode::Eval).unwrap() {
            assert!(y.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn batch_matches_single_in_eval() {
        let mut m = build_model(&desk(TaskSelection::Person, Variant::Tc), 3).unwrap();
        let rows: Vec<Vec<f32>> = (0..4).map(|i| (0..30).map(|j| ((i * 30 + j) as f32 * 0.37).sin()).collect()).collect();
        let batch = m.input_tensor(rows.iter().map(|r| r.as_slice())).unwrap();
        let all = m.forward(&batch, Mode::Eval).unwrap().remove(0);
        for (i, r) in rows.iter().enumerate() {
            let one = m.input_tensor([r.as_slice()]).unwrap();
            let y = m.forward(&one, Mode::Eval).unwrap().remove(0);
            for (a, b) in y.data().iter().zip(all.item(i)) {
                assert!((a - b).abs() < 1e-5);
            }
        }
        assert_eq!(all.item(0), m.forward(&m.input_tensor([rows[0].as_slice(), rows[0].as_slice()]).unwrap(), Mode::Eval).unwrap()[0].item(1));
    }

    #[test]
    fn wrong_input_length() {
        let m = build_model(&desk(TaskSelection::Sign, Variant::Interp), 0).unwrap();
        assert!(m.input_tensor([[0.0f32; 29].as_slice()]).is_err());
    }

    #[test]
    fn normalization_round_trip() {
        let mut m = build_model(&desk(TaskSelection::Biometrics, Variant::Tc), 0).unwrap();
        let data: Vec<Instance> = [[5.0, 89.7, 65.1, 13.0], [30.2, 60.1, 50.0, 9.5], [12.0, 70.0, 55.5, 11.0]]
            .iter()
            .map(|b| Instance::new(vec![1.0; 30], crate::pipeline::Label::Biometrics(b.to_vec())).unwrap())
            .collect();
        m.fit_normalization(&data).unwrap();
        let n = m.normalization().clone();
        for inst in &data {
            let b = inst.label.biometrics().unwrap();
            let z = n.normalize_bio(b);
            assert!(z.iter().all(|&v| (-1e-6..=1.0 + 1e-6).contains(&v)));
            for (a, e) in n.denormalize_bio(&z).iter().zip(b) {
                assert!((a - e).abs() < 1e-6 * e.abs().max(1.0));
            }
        }
    }

    #[test]
    fn checkpoint_restores_normalization() {
        let c = desk(TaskSelection::Biometrics, Variant::Hybrid);
        let mut a = build_model(&c, 0).unwrap();
        let data = vec![
            Instance::new(vec![2.0; 30], crate::pipeline::Label::Biometrics(vec![1.0, 2.0, 3.0, 4.0])).unwrap(),
            Instance::new(vec![4.0; 30], crate::pipeline::Label::Biometrics(vec![2.0, 3.0, 4.0, 5.0])).unwrap(),
        ];
        a.fit_normalization(&data).unwrap();
        let ck = a.checkpoint(None);
        let mut b = build_model(&c, 1).unwrap();
        b.load_checkpoint(&ck).unwrap();
        assert_eq!(b.normalization(), a.normalization());
        assert_eq!(b.checkpoint(None), ck);
    }
}
