use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sampling rate of a capture, Hz.
pub const DEFAULT_SAMPLE_RATE: f64 = 100.0;
/// Subcarriers reported per frame.
pub const DEFAULT_SUBCARRIERS: usize = 30;

/// `N_sc x N_tx x N_rx` extent of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CsiShape {
    pub n_sc: usize,
    pub n_tx: usize,
    pub n_rx: usize,
}

impl CsiShape {
    pub const DEFAULT: CsiShape = CsiShape {
        n_sc: DEFAULT_SUBCARRIERS,
        n_tx: 1,
        n_rx: 1,
    };

    pub fn siso(n_sc: usize) -> Self {
        CsiShape {
            n_sc,
            n_tx: 1,
            n_rx: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.n_sc * self.n_tx * self.n_rx
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Label attached to a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum Label {
    #[default]
    None,
    /// Class index (subject, sign or fall class).
    Class(u32),
    /// Biometric vector `[fat, muscle, water, bone]`.
    Biometrics(Vec<f64>),
    /// Subject class together with its biometrics.
    Subject { class: u32, biometrics: Vec<f64> },
}

impl Label {
    pub fn class(&self) -> Option<u32> {
        match self {
            Label::Class(c) | Label::Subject { class: c, .. } => Some(*c),
            _ => None,
        }
    }

    pub fn biometrics(&self) -> Option<&[f64]> {
        match self {
            Label::Biometrics(b) | Label::Subject { biometrics: b, .. } => Some(b),
            _ => None,
        }
    }
}

/// One sampled channel snapshot, subcarrier-major then tx then rx.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiFrame {
    pub values: Vec<Complex32>,
    pub timestamp_index: u64,
}

impl CsiFrame {
    pub fn new(values: Vec<Complex32>, timestamp_index: u64) -> Self {
        CsiFrame {
            values,
            timestamp_index,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsiSequence {
    shape: CsiShape,
    frames: Vec<CsiFrame>,
    sample_rate: f64,
    pub label: Label,
}

impl CsiSequence {
    pub fn new(shape: CsiShape, frames: Vec<CsiFrame>, sample_rate: f64, label: Label) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::domain(format!("sample rate must be positive, got {sample_rate}")));
        }
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.values.len() != shape.len()) {
            return Err(Error::Shape {
                op: "CsiSequence::new",
                left: vec![shape.n_sc, shape.n_tx, shape.n_rx],
                right: vec![i, f.values.len()],
            });
        }
        if frames.iter().any(|f| !f.is_finite()) {
            return Err(Error::domain("CSI frames must be finite"));
        }
        Ok(Self {
            shape,
            frames,
            sample_rate,
            label,
        })
    }

    pub fn empty(shape: CsiShape, sample_rate: f64, label: Label) -> Result<Self> {
        Self::new(shape, Vec::new(), sample_rate, label)
    }

    pub fn shape(&self) -> CsiShape {
        self.shape
    }

    pub fn frames(&self) -> &[CsiFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }

    pub fn with_sample_rate(mut self, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(Error::domain(format!("sample rate must be positive, got {sample_rate}")));
        }
        self.sample_rate = sample_rate;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_frames() {
        let f = CsiFrame::new(vec![Complex32::new(1.0, 0.0); 29], 0);
        assert!(CsiSequence::new(CsiShape::DEFAULT, vec![f], 100.0, Label::None).is_err());
    }

    #[test]
    fn rejects_bad_rate_and_nan() {
        assert!(CsiSequence::empty(CsiShape::DEFAULT, 0.0, Label::None).is_err());
        let f = CsiFrame::new(vec![Complex32::new(f32::NAN, 0.0); 30], 0);
        assert!(CsiSequence::new(CsiShape::DEFAULT, vec![f], 100.0, Label::None).is_err());
    }

    #[test]
    fn label_accessors() {
        let l = Label::Subject {
            class: 3,
            biometrics: vec![1.0, 2.0, 3.0, 4.0],
        };
        assert_eq!(l.class(), Some(3));
        assert_eq!(l.biometrics().unwrap().len(), 4);
        assert_eq!(Label::None.class(), None);
    }
}
