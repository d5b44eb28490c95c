use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CsiFrame, CsiSequence, Label};
use crate::error::{Error, Result};

/// One network input: the amplitude vector of a frame and its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub amplitude: Vec<f32>,
    pub label: Label,
}

impl Instance {
    pub fn new(amplitude: Vec<f32>, label: Label) -> Result<Self> {
        if amplitude.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::domain("instance amplitudes must be finite and non-negative"));
        }
        Ok(Self { amplitude, label })
    }
}

/// Element-wise modulus of a frame, flattened subcarrier-major.
pub fn amplitude(frame: &CsiFrame) -> Instance {
    Instance {
        amplitude: frame
            .values
            .iter()
            .map(|v| (v.re as f64).hypot(v.im as f64) as f32)
            .collect(),
        label: Label::None,
    }
}

/// Real-valued amplitude series: `len` rows of `channels` values each.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSeries {
    channels: usize,
    data: Vec<f64>,
    sample_rate: f64,
    pub label: Label,
}

impl AmplitudeSeries {
    pub fn new(channels: usize, data: Vec<f64>, sample_rate: f64, label: Label) -> Result<Self> {
        if channels == 0 || !data.len().is_multiple_of(channels) {
            return Err(Error::Shape {
                op: "AmplitudeSeries::new",
                left: vec![channels],
                right: vec![data.len()],
            });
        }
        if !(sample_rate > 0.0) {
            return Err(Error::domain(format!("sample rate must be positive, got {sample_rate}")));
        }
        Ok(Self {
            channels,
            data,
            sample_rate,
            label,
        })
    }

    pub fn from_sequence(seq: &CsiSequence) -> Self {
        let channels = seq.shape().len().max(1);
        let data = seq
            .frames()
            .iter()
            .flat_map(|f| amplitude(f).amplitude.into_iter().map(f64::from))
            .collect();
        Self {
            channels,
            data,
            sample_rate: seq.sample_rate(),
            label: seq.label.clone(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    pub fn column(&self, ch: usize) -> Vec<f64> {
        self.data.iter().skip(ch).step_by(self.channels).copied().collect()
    }

    /// Apply `f` to every channel's time series independently.
    pub fn map_columns(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Self {
        let mut out = self.clone();
        for ch in 0..self.channels {
            let filtered = f(&self.column(ch));
            debug_assert_eq!(filtered.len(), self.len());
            for (t, v) in filtered.into_iter().enumerate() {
                out.data[t * self.channels + ch] = v;
            }
        }
        out
    }

    /// One instance per row, carrying the series label. Negative values left
    /// by filter ringing are clamped to zero.
    pub fn instances(&self) -> Vec<Instance> {
        (0..self.len())
            .map(|t| Instance {
                amplitude: self.row(t).iter().map(|&v| v.max(0.0) as f32).collect(),
                label: self.label.clone(),
            })
            .collect()
    }
}

fn label_field(label: &Label) -> String {
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
    match label {
        Label::None => "none".into(),
        Label::Class(c) => format!("class:{c}"),
        Label::Biometrics(b) => format!("bio:{}", join(b)),
        Label::Subject { class, biometrics } => format!("subject:{class}:{}", join(biometrics)),
    }
}

/// Comma-separated dump with header `label, a_1, ..., a_n`.
pub fn write_instances_csv<W: Write>(instances: &[Instance], writer: W) -> Result<()> {
    let width = instances.first().map_or(30, |i| i.amplitude.len());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["label".to_string()];
    header.extend((1..=width).map(|i| format!("a_{i}")));
    w.write_record(&header)?;
    for inst in instances {
        let mut rec = vec![label_field(&inst.label)];
        rec.extend(inst.amplitude.iter().map(|a| a.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn export_instances_csv(instances: &[Instance], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_instances_csv(instances, std::io::BufWriter::new(f))
}

fn parse_label(field: &str) -> Option<Label> {
    let floats = |s: &str| -> Option<Vec<f64>> {
        if s.is_empty() {
            return Some(Vec::new());
        }
        s.split(';').map(|v| v.parse().ok()).collect()
    };
    if field == "none" {
        return Some(Label::None);
    }
    if let Some(c) = field.strip_prefix("class:") {
        return c.parse().ok().map(Label::Class);
    }
    if let Some(b) = field.strip_prefix("bio:") {
        return floats(b).map(Label::Biometrics);
    }
    let rest = field.strip_prefix("subject:")?;
    let (class, bio) = rest.split_once(':')?;
    Some(Label::Subject {
        class: class.parse().ok()?,
        biometrics: floats(bio)?,
    })
}

/// Inverse of [`write_instances_csv`].
pub fn read_instances_csv<R: std::io::Read>(reader: R) -> Result<Vec<Instance>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::domain(format!("instance csv row {}: bad {what}", row + 1));
        let label = parse_label(rec.get(0).ok_or_else(|| bad("label"))?).ok_or_else(|| bad("label"))?;
        let amplitude = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f32>().map_err(|_| bad("amplitude")))
            .collect::<Result<Vec<_>>>()?;
        out.push(Instance::new(amplitude, label)?);
    }
    Ok(out)
}

pub fn import_instances_csv(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_instances_csv(std::io::BufReader::new(f))
}
