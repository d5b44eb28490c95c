//! Metrics file (TOML) plus CSV tables for radar charts and confusion
//! matrices.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ConfusionMatrix, RegressionReport};
use crate::error::{Error, Result};
use crate::tissue::BIOMETRIC_NAMES;

pub const METRICS_SCHEMA: u32 = 1;
pub const METRICS_FILE: &str = "metrics.toml";

/// Everything measured for one task head.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: String,
    pub variant: String,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    /// Gaussian naive Bayes on the same split.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_rates: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub schema_version: u32,
    #[serde(default)]
    pub tasks: Vec<TaskReport>,
}

impl MetricsFile {
    pub fn new(tasks: Vec<TaskReport>) -> Self {
        Self {
            schema_version: METRICS_SCHEMA,
            tasks,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("metrics: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| Error::Config(format!("metrics: {e}")))?;
        if m.schema_version != METRICS_SCHEMA {
            return Err(Error::Config(format!("unsupported metrics schema {}", m.schema_version)));
        }
        Ok(m)
    }
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<MetricsFile> {
    let path = path.as_ref();
    MetricsFile::from_toml(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// One radar-chart polygon: a subject's mean estimate or truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarRow {
    pub subject: u32,
    pub kind: String,
    pub fat_rate: f64,
    pub muscle_rate: f64,
    pub water_rate: f64,
    pub bone_rate: f64,
}

impl RadarRow {
    pub fn values(&self) -> [f64; 4] {
        [self.fat_rate, self.muscle_rate, self.water_rate, self.bone_rate]
    }
}

/// Estimated then truth row for each subject.
pub fn radar_rows(report: &RegressionReport) -> Result<Vec<RadarRow>> {
    let mut rows = Vec::with_capacity(2 * report.subjects.len());
    for s in &report.subjects {
        for (kind, v) in [("estimated", &s.mean_estimate), ("truth", &s.mean_truth)] {
            let &[fat_rate, muscle_rate, water_rate, bone_rate] = v.as_slice() else {
                return Err(Error::domain(format!(
                    "radar export needs {} biometrics, subject {} has {}",
                    BIOMETRIC_NAMES.len(),
                    s.subject,
                    v.len()
                )));
            };
            rows.push(RadarRow {
                subject: s.subject,
                kind: kind.into(),
                fat_rate,
                muscle_rate,
                water_rate,
                bone_rate,
            });
        }
    }
    Ok(rows)
}

pub fn write_radar_csv<W: Write>(report: &RegressionReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in radar_rows(report)? {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_radar_csv<R: std::io::Read>(reader: R) -> Result<Vec<RadarRow>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Header `predicted\true` followed by the class labels; one row per
/// predicted class.
pub fn write_confusion_csv<W: Write>(cm: &ConfusionMatrix, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["predicted\\true".to_string()];
    header.extend(cm.labels.iter().cloned());
    w.write_record(&header)?;
    for (label, row) in cm.labels.iter().zip(&cm.counts) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportedFiles {
    pub metrics: PathBuf,
    pub radar: Vec<PathBuf>,
    pub confusion: Vec<PathBuf>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `metrics.toml`, `radar_<task>.csv` for each regression report and
/// `confusion_<task>.csv` for each classification report into `dir`.
pub fn export_report(reports: &[TaskReport], dir: impl AsRef<Path>) -> Result<ExportedFiles> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let metrics = dir.join(METRICS_FILE);
    write_file(&metrics, MetricsFile::new(reports.to_vec()).to_toml()?.as_bytes())?;
    let mut out = ExportedFiles {
        metrics,
        radar: Vec::new(),
        confusion: Vec::new(),
    };
    for r in reports {
        if let Some(reg) = &r.regression {
            let mut buf = Vec::new();
            write_radar_csv(reg, &mut buf)?;
            let path = dir.join(format!("radar_{}.csv", r.task));
            write_file(&path, &buf)?;
            out.radar.push(path);
        }
        if let Some(cm) = &r.confusion {
            let mut buf = Vec::new();
            write_confusion_csv(cm, &mut buf)?;
            let path = dir.join(format!("confusion_{}.csv", r.task));
            write_file(&path, &buf)?;
            out.confusion.push(path);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{confusion, mean_average_error};
    use crate::tissue::subject;

    fn sample_reports() -> Vec<TaskReport> {
        let truth: Vec<Vec<f64>> = [1, 1, 2].iter().map(|&id| subject(id).unwrap().biometrics().to_vec()).collect();
        let pred: Vec<Vec<f64>> = truth.iter().map(|t| t.iter().map(|v| v * 1.1 + 0.123456789).collect()).collect();
        let cm = confusion(&[0, 1, 1], &[0, 1, 0], 2).unwrap();
        vec![
            TaskReport {
                task: "biometrics".into(),
                variant: "tc".into(),
                n_train: 10,
                n_test: 3,
                regression: Some(mean_average_error(&truth, &pred, &[1, 1, 2]).unwrap()),
                ..Default::default()
            },
            TaskReport {
                task: "falling".into(),
                variant: "hybrid".into(),
                n_train: 10,
                n_test: 3,
                accuracy: Some(2.0 / 3.0),
                baseline_accuracy: Some(0.1 + 0.2),
                class_rates: Some(cm.class_rates()),
                confusion: Some(cm),
                ..Default::default()
            },
        ]
    }

    #[test]
    fn empty_task_list_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let files = export_report(&[], dir.path()).unwrap();
        let back = read_metrics(&files.metrics).unwrap();
        assert_eq!(back, MetricsFile::new(vec![]));
        assert!(files.radar.is_empty() && files.confusion.is_empty());
    }

    #[test]
    fn numbers_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let reports = sample_reports();
        let files = export_report(&reports, dir.path()).unwrap();
        assert_eq!(read_metrics(&files.metrics).unwrap().tasks, reports);

        let radar = read_radar_csv(std::fs::File::open(&files.radar[0]).unwrap()).unwrap();
        assert_eq!(radar, radar_rows(reports[0].regression.as_ref().unwrap()).unwrap());
        let truth1 = radar.iter().find(|r| r.subject == 1 && r.kind == "truth").unwrap();
        assert_eq!(truth1.values(), [5.0, 89.7, 65.1, 13.0]);

        let text = std::fs::read_to_string(&files.confusion[0]).unwrap();
        assert_eq!(text, "predicted\\true,0,1\n0,1,1\n1,0,1\n");
    }

    #[test]
    fn unwritable_destination_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        let err = export_report(&[], blocker.join("sub")).unwrap_err();
        assert!(err.to_string().contains("file"));
    }
}
