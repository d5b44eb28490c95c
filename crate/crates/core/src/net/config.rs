use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ConvGeometry;

/// How the generation stage upsamples the 30x1x1 input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Eight transposed-convolution stages.
    Tc,
    /// One bilinear resize of the raw 30-channel input.
    Interp,
    /// Transposed convolutions with stages 2, 4, 6 and 8 swapped for resizes.
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// 224x224 generation output and a ResNet-style backbone.
    Paper,
    /// 28x28 output and a small backbone that trains in minutes on a CPU.
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Biometrics,
    Person,
    Sign,
    Falling,
}

impl Task {
    pub fn output_dim(self) -> usize {
        match self {
            Task::Biometrics => 4,
            Task::Person => 30,
            Task::Sign => 10,
            Task::Falling => 2,
        }
    }

    pub fn feature_dim(self) -> usize {
        match self {
            Task::Biometrics | Task::Person => 256,
            Task::Sign | Task::Falling => 128,
        }
    }

    pub fn is_regression(self) -> bool {
        self == Task::Biometrics
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Biometrics => "biometrics",
            Task::Person => "person",
            Task::Sign => "sign",
            Task::Falling => "falling",
        }
    }
}

/// Task selection on the command line; `Joint` trains biometrics and person
/// heads on one shared trunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TaskSelection {
    Biometrics,
    Person,
    Sign,
    Falling,
    Joint,
}

impl TaskSelection {
    pub fn tasks(self, alpha: f64) -> Vec<TaskConfig> {
        let one = |task| vec![TaskConfig::new(task)];
        match self {
            TaskSelection::Biometrics => one(Task::Biometrics),
            TaskSelection::Person => one(Task::Person),
            TaskSelection::Sign => one(Task::Sign),
            TaskSelection::Falling => one(Task::Falling),
            TaskSelection::Joint => vec![
                TaskConfig::new(Task::Biometrics),
                TaskConfig {
                    alpha,
                    ..TaskConfig::new(Task::Person)
                },
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub task: Task,
    pub output_dim: usize,
    /// Weight of this head's loss in the summed objective.
    pub alpha: f64,
}

impl TaskConfig {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            output_dim: task.output_dim(),
            alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GenStage {
    /// Transposed convolution followed by batch norm and ReLU.
    Transposed {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
        /// Declared output side length, checked against the size formula.
        size: usize,
    },
    /// Bilinear resize to `size x size`, channels unchanged.
    Resize { size: usize },
}

impl GenStage {
    pub fn size(&self) -> usize {
        match *self {
            GenStage::Transposed { size, .. } | GenStage::Resize { size } => size,
        }
    }

    pub fn geometry(&self) -> Option<ConvGeometry> {
        match *self {
            GenStage::Transposed {
                kernel,
                stride,
                padding,
                output_padding,
                ..
            } => Some(ConvGeometry::new(kernel, stride, padding).with_output_padding(output_padding)),
            GenStage::Resize { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub mode: Variant,
    pub in_channels: usize,
    pub target: usize,
    pub stages: Vec<GenStage>,
}

/// `(out_channels, kernel, stride, padding, output_padding, size)` per stage.
type Plan = [(usize, usize, usize, usize, usize, usize); 8];

const PAPER_PLAN: Plan = [
    (256, 4, 1, 0, 0, 4),
    (192, 3, 2, 1, 0, 7),
    (128, 4, 2, 1, 0, 14),
    (96, 4, 2, 1, 0, 28),
    (64, 4, 2, 1, 0, 56),
    (32, 4, 2, 1, 0, 112),
    (16, 4, 2, 29, 0, 168),
    (6, 4, 2, 57, 0, 224),
];

const DESK_PLAN: Plan = [
    (32, 2, 1, 0, 0, 2),
    (24, 4, 2, 1, 0, 4),
    (16, 3, 2, 1, 0, 7),
    (12, 4, 2, 1, 0, 14),
    (8, 4, 2, 1, 0, 28),
    (8, 1, 1, 0, 0, 28),
    (6, 1, 1, 0, 0, 28),
    (6, 1, 1, 0, 0, 28),
];

/// Channels produced by the generation stage in TC and hybrid modes.
pub const GENERATION_CHANNELS: usize = 6;

impl GenerationConfig {
    pub fn new(mode: Variant, scale: Scale) -> Self {
        let plan = match scale {
            Scale::Paper => &PAPER_PLAN,
            Scale::Desk => &DESK_PLAN,
        };
        let target = plan[7].5;
        let tc = |&(out_channels, kernel, stride, padding, output_padding, size): &(_, _, _, _, _, _)| {
            GenStage::Transposed {
                out_channels,
                kernel,
                stride,
                padding,
                output_padding,
                size,
            }
        };
        let stages = match mode {
            Variant::Tc => plan.iter().map(tc).collect(),
            Variant::Interp => vec![GenStage::Resize { size: target }],
            Variant::Hybrid => plan
                .iter()
                .enumerate()
                .map(|(i, p)| match i {
                    1 | 3 | 5 | 7 => GenStage::Resize { size: p.5 },
                    6 => tc(&(GENERATION_CHANNELS, p.1, p.2, p.3, p.4, p.5)),
                    _ => tc(p),
                })
                .collect(),
        };
        Self {
            mode,
            in_channels: 30,
            target,
            stages,
        }
    }

    /// Walks the stages from a 1x1 input and returns `(channels, size)`
    /// after each, checking declared sizes against the size formulas.
    pub fn trace(&self) -> Result<Vec<(usize, usize)>> {
        let build = |i: usize, reason: String| Error::Build {
            stage: format!("generation.{}", i + 1),
            reason,
        };
        if self.stages.is_empty() {
            return Err(build(0, "no stages".into()));
        }
        let (mut ch, mut size) = (self.in_channels, 1usize);
        let mut out = Vec::with_capacity(self.stages.len());
        for (i, stage) in self.stages.iter().enumerate() {
            match stage {
                GenStage::Transposed { out_channels, size: declared, .. } => {
                    let g = stage.geometry().expect("transposed stage");
                    if *out_channels == 0 {
                        return Err(build(i, "zero output channels".into()));
                    }
                    let got = g.transposed_out(size).map_err(|e| build(i, e.to_string()))?;
                    if got != *declared {
                        return Err(build(i, format!("size formula gives {got}, stage declares {declared}")));
                    }
                    ch = *out_channels;
                }
                GenStage::Resize { size: s } if *s == 0 => return Err(build(i, "resize to 0".into())),
                GenStage::Resize { .. } => {}
            }
            size = stage.size();
            out.push((ch, size));
        }
        if size != self.target {
            return Err(build(self.stages.len() - 1, format!("ends at {size}, target is {}", self.target)));
        }
        if self.mode != Variant::Interp && ch != GENERATION_CHANNELS {
            return Err(build(
                self.stages.len() - 1,
                format!("ends with {ch} channels, expected {GENERATION_CHANNELS}"),
            ));
        }
        if self.mode != Variant::Interp && self.stages.len() != 8 {
            return Err(build(self.stages.len() - 1, format!("{} stages, expected 8", self.stages.len())));
        }
        Ok(out)
    }

    pub fn out_channels(&self) -> Result<usize> {
        Ok(self.trace()?.last().expect("non-empty").0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub stem_channels: usize,
    pub stem_stride: usize,
    /// `(blocks, channels)`; the first block of every stage halves the size.
    pub stages: Vec<(usize, usize)>,
    pub feature_dim: usize,
    /// Linear + ReLU from the pooled channels to `feature_dim`. Required
    /// when the last stage is narrower than `feature_dim`.
    pub projection: bool,
}

impl BackboneConfig {
    pub fn new(scale: Scale, feature_dim: usize) -> Self {
        match scale {
            Scale::Paper => Self {
                stem_channels: 64,
                stem_stride: 2,
                stages: vec![(2, 64), (2, 128), (2, feature_dim)],
                feature_dim,
                projection: false,
            },
            Scale::Desk => Self {
                stem_channels: 16,
                stem_stride: 2,
                stages: vec![(1, 16), (1, 32), (1, 64)],
                feature_dim,
                projection: true,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let build = |stage: &str, reason: String| Error::Build {
            stage: format!("backbone.{stage}"),
            reason,
        };
        if self.stem_channels == 0 || self.stem_stride == 0 {
            return Err(build("stem", "channels and stride must be >= 1".into()));
        }
        for (i, &(blocks, ch)) in self.stages.iter().enumerate() {
            if blocks == 0 || ch == 0 {
                return Err(build(&format!("stage{}", i + 1), "blocks and channels must be >= 1".into()));
            }
        }
        let last = self.stages.last().map_or(self.stem_channels, |s| s.1);
        if !self.projection && last != self.feature_dim {
            return Err(build(
                "pool",
                format!("pooled width {last} differs from feature_dim {} and no projection", self.feature_dim),
            ));
        }
        Ok(())
    }
}

/// Everything needed to rebuild a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub generation: GenerationConfig,
    pub backbone: BackboneConfig,
    pub tasks: Vec<TaskConfig>,
}

impl NetConfig {
    pub fn new(selection: TaskSelection, variant: Variant, scale: Scale) -> Self {
        let tasks = selection.tasks(1.0);
        let feature_dim = tasks.iter().map(|t| t.task.feature_dim()).max().unwrap_or(256);
        Self {
            generation: GenerationConfig::new(variant, scale),
            backbone: BackboneConfig::new(scale, feature_dim),
            tasks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: u32,
    pub minibatch: usize,
    pub initial_lr: f64,
    pub milestones: Vec<u32>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            minibatch: 20,
            initial_lr: 1e-3,
            milestones: crate::nn::LR_MILESTONES.to_vec(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.minibatch < 2 || !(self.initial_lr >= 0.0) {
            return Err(Error::Config(format!(
                "train: need epochs >= 1, minibatch >= 2, lr >= 0 (got {}, {}, {})",
                self.epochs, self.minibatch, self.initial_lr
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plans_trace() {
        let paper = GenerationConfig::new(Variant::Tc, Scale::Paper).trace().unwrap();
        let sizes: Vec<usize> = paper.iter().map(|s| s.1).collect();
        assert_eq!(sizes, vec![4, 7, 14, 28, 56, 112, 168, 224]);
        let chans: Vec<usize> = paper.iter().map(|s| s.0).collect();
        assert_eq!(chans, vec![256, 192, 128, 96, 64, 32, 16, 6]);
        let desk = GenerationConfig::new(Variant::Tc, Scale::Desk).trace().unwrap();
        assert_eq!(desk.last(), Some(&(6, 28)));
        let hybrid = GenerationConfig::new(Variant::Hybrid, Scale::Paper);
        assert!(matches!(hybrid.stages[1], GenStage::Resize { size: 7 }));
        assert_eq!(hybrid.trace().unwrap().last(), Some(&(6, 224)));
        let interp = GenerationConfig::new(Variant::Interp, Scale::Desk).trace().unwrap();
        assert_eq!(interp, vec![(30, 28)]);
    }

    #[test]
    fn bad_stage_is_named() {
        let mut g = GenerationConfig::new(Variant::Tc, Scale::Desk);
        if let GenStage::Transposed { size, .. } = &mut g.stages[2] {
            *size = 8;
        }
        let err = g.trace().unwrap_err().to_string();
        assert!(err.contains("generation.3"), "{err}");
    }

    #[test]
    fn backbone_needs_projection_or_matching_width() {
        let mut b = BackboneConfig::new(Scale::Desk, 128);
        b.validate().unwrap();
        b.projection = false;
        assert!(b.validate().is_err());
        BackboneConfig::new(Scale::Paper, 128).validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let c = NetConfig::new(TaskSelection::Joint, Variant::Hybrid, Scale::Desk);
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<NetConfig>(&text).unwrap(), c);
    }
}
