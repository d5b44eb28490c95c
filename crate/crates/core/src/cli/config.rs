//! Run configuration, loadable from TOML. Every field has a default so a
//! config file only needs the values it changes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Scale, TaskSelection, TrainConfig, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub task: TaskSelection,
    pub variant: Variant,
    pub scale: Scale,
    /// Root of every stage directory.
    pub out: PathBuf,
    pub threads: Option<usize>,
    /// Weight of the identification loss in the joint task.
    pub alpha: f64,
    pub synth: SynthConfig,
    pub filter: FilterConfig,
    pub augment: AugmentConfig,
    pub train: TrainSection,
    pub thresholds: Thresholds,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            task: TaskSelection::Person,
            variant: Variant::Tc,
            scale: Scale::Desk,
            out: PathBuf::from("run"),
            threads: None,
            alpha: 1.0,
            synth: SynthConfig::default(),
            filter: FilterConfig::default(),
            augment: AugmentConfig::default(),
            train: TrainSection::default(),
            thresholds: Thresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Bundled subject ids for the biometrics, person and joint tasks.
    pub subjects: Vec<u32>,
    /// Frames per subject or class.
    pub samples: usize,
    /// Against the body-path component of the channel.
    pub snr_db: f64,
    pub center_hz: f64,
    pub spacing_hz: f64,
    pub subcarriers: usize,
    pub tx_rx_distance: f64,
    pub body_path_extra: Vec<f64>,
    /// Body used for the sign and falling classes.
    pub reference_subject: u32,
    /// Per-class increment of each body path's extra distance, metres.
    pub class_path_shift: Vec<f64>,
    /// Number of sign/falling classes; the head size when absent.
    pub classes: Option<u32>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subjects: vec![1, 3, 6, 16, 22],
            samples: 2000,
            snr_db: 20.0,
            center_hz: 5.32e9,
            spacing_hz: 625_000.0,
            subcarriers: 30,
            tx_rx_distance: 3.0,
            body_path_extra: vec![0.2, 0.5],
            reference_subject: 1,
            class_path_shift: vec![0.011, 0.017],
            classes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub enabled: bool,
    pub median_window: usize,
    pub mean_window: usize,
    pub butterworth_order: usize,
    pub cutoff_hz: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        use crate::pipeline::filter::*;
        Self {
            enabled: true,
            median_window: DEFAULT_MEDIAN_WINDOW,
            mean_window: DEFAULT_MEAN_WINDOW,
            butterworth_order: DEFAULT_BUTTERWORTH_ORDER,
            cutoff_hz: DEFAULT_BUTTERWORTH_CUTOFF_HZ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub enabled: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { enabled: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: u32,
    pub minibatch: usize,
    pub initial_lr: f64,
    pub milestones: Vec<u32>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            minibatch: t.minibatch,
            initial_lr: t.initial_lr,
            milestones: t.milestones,
        }
    }
}

/// Pass conditions checked by `e2e`. Unset thresholds are not checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub min_accuracy: Option<f64>,
    /// Classification accuracy must be at least the naive Bayes baseline.
    pub beat_baseline: bool,
    pub max_mae: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            min_accuracy: Some(0.95),
            beat_baseline: true,
            max_mae: Some(2.0),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_toml(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            minibatch: self.train.minibatch,
            initial_lr: self.train.initial_lr,
            milestones: self.train.milestones.clone(),
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.synth;
        if s.samples < 10 {
            return Err(Error::Config(format!("synth.samples must be at least 10, got {}", s.samples)));
        }
        if s.subcarriers != crate::net::INPUT_LEN {
            return Err(Error::Config(format!(
                "synth.subcarriers must be {} to match the network input",
                crate::net::INPUT_LEN
            )));
        }
        if s.class_path_shift.len() != s.body_path_extra.len() {
            return Err(Error::Config("synth.class_path_shift needs one entry per body path".into()));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.train_config().validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_toml("seed = 9\ntask = \"falling\"\n[synth]\nsamples = 100\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.task, TaskSelection::Falling);
        assert_eq!(c.synth.samples, 100);
        assert_eq!(c.synth.snr_db, 20.0);
        assert_eq!(c.train.epochs, 20);
    }

    #[test]
    fn round_trip_and_rejects_unknown() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        assert!(RunConfig::from_toml("sede = 1").is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        c.validate().unwrap();
        c.synth.subcarriers = 56;
        assert!(c.validate().is_err());
    }
}
