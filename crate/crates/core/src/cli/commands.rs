//! One function per subcommand. Each stage reads the previous stage's
//! directory under the run root and writes only its own.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex32;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{FilterConfig, RunConfig, SynthConfig, Thresholds};
use crate::error::{Error, Result};
use crate::eval::{
    accuracy, confusion, export_report, gaussian_nb_fit, gaussian_nb_predict, mean_average_error, read_metrics,
    TaskReport,
};
use crate::net::{build_model, predict, train_with_optimizer, Manifest, NetConfig, Predictions, Task, TaskSelection};
use crate::nn::Checkpoint;
use crate::pipeline::filter::{butterworth_lowpass, mean_filter, median_filter};
use crate::pipeline::format::encode;
use crate::pipeline::{
    amplitude, augment, export_instances_csv, import_instances_csv, read_dataset, split_train_test, AmplitudeSeries,
    CsiFrame, CsiSequence, Instance, Label,
};
use crate::seed::{derive_seed, stream_seed};
use crate::tissue::{
    body_component_rms, noise_sigma_for_snr, subcarrier_grid, subject, subject_to_body, synth_csi, Band, BodyModel,
    Geometry,
};

pub const MANIFEST: &str = "manifest.toml";
const SCHEMA: u32 = 1;

/// Stage directories under the run root.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }
    pub fn filtered(&self) -> PathBuf {
        self.root.join("filtered")
    }
    pub fn split(&self) -> PathBuf {
        self.root.join("split")
    }
    pub fn model(&self) -> PathBuf {
        self.root.join("model")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.model().join("model.csnw")
    }
    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

/// One CSI1 file of a synthesized or filtered dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataFile {
    pub file: String,
    pub label: Label,
    /// Hex string in TOML, which has no unsigned 64-bit integers.
    #[serde(with = "hex_u64")]
    pub seed: u64,
    pub noise_sigma: f64,
    pub sha256: String,
}

mod hex_u64 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:#018x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let text = String::deserialize(d)?;
        let digits = text.strip_prefix("0x").ok_or_else(|| D::Error::custom("seed must start with 0x"))?;
        u64::from_str_radix(digits, 16).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub task: TaskSelection,
    pub synth: SynthConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterConfig>,
    pub files: Vec<DataFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub schema_version: u32,
    pub n_train: usize,
    pub n_test: usize,
    pub augmented: bool,
    /// File the train command reads.
    pub train_file: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    write(path, text)
}

fn band_for(center_hz: f64) -> Band {
    if center_hz < 3.5e9 {
        Band::Ghz2_4
    } else {
        Band::Ghz5
    }
}

fn body_of(id: u32, band: Band) -> Result<BodyModel> {
    let profile = subject(id).ok_or_else(|| Error::Config(format!("unknown subject id {id}")))?;
    subject_to_body(&profile, band)
}

/// Number of synthetic classes for a sign or falling run.
fn class_count(cfg: &RunConfig, task: Task) -> Result<u32> {
    let n = cfg.synth.classes.unwrap_or(task.output_dim() as u32);
    if n < 2 || n as usize > task.output_dim() {
        return Err(Error::Config(format!(
            "synth.classes must lie in 2..={} for {}, got {n}",
            task.output_dim(),
            task.name()
        )));
    }
    Ok(n)
}

/// File name, label, body and geometry of every sequence to synthesize.
///
/// Subject tasks use one file per bundled subject. Sign and falling use the
/// reference subject and move each body path by `c * class_path_shift` for
/// class `c`.
fn synth_plan(cfg: &RunConfig) -> Result<Vec<(String, Label, BodyModel, Geometry)>> {
    let s = &cfg.synth;
    let band = band_for(s.center_hz);
    let base = Geometry::with_extras(s.tx_rx_distance, s.body_path_extra.clone())?;
    let class_task = match cfg.task {
        TaskSelection::Sign => Some(Task::Sign),
        TaskSelection::Falling => Some(Task::Falling),
        _ => None,
    };
    match class_task {
        None => {
            if s.subjects.is_empty() {
                return Err(Error::Config("synth.subjects is empty".into()));
            }
            s.subjects
                .iter()
                .map(|&id| {
                    let profile = subject(id).ok_or_else(|| Error::Config(format!("unknown subject id {id}")))?;
                    let label = Label::Subject {
                        class: id - 1,
                        biometrics: profile.biometrics().to_vec(),
                    };
                    Ok((format!("subject_{id:02}.csi"), label, subject_to_body(&profile, band)?, base.clone()))
                })
                .collect()
        }
        Some(task) => {
            let body = body_of(s.reference_subject, band)?;
            (0..class_count(cfg, task)?)
                .map(|c| {
                    let extras = base
                        .body_path_extra
                        .iter()
                        .zip(&s.class_path_shift)
                        .map(|(e, d)| e + c as f64 * d)
                        .collect();
                    let geo = Geometry::with_extras(s.tx_rx_distance, extras)?;
                    Ok((format!("class_{c:02}.csi"), Label::Class(c), body.clone(), geo))
                })
                .collect()
        }
    }
}

/// Synthesizes one CSI1 file per subject or class plus `manifest.toml`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<DataManifest> {
    cfg.validate()?;
    let dir = Layout::new(&cfg.out).data();
    create_dir(&dir)?;
    let s = &cfg.synth;
    let grid = subcarrier_grid(s.center_hz, s.spacing_hz, s.subcarriers);
    let stage_seed = derive_seed(cfg.seed, "synth");
    let mut files = Vec::new();
    for (i, (name, label, body, geo)) in synth_plan(cfg)?.into_iter().enumerate() {
        let seed = stream_seed(stage_seed, i as u64);
        let sigma = noise_sigma_for_snr(body_component_rms(&body, &geo, &grid)?, s.snr_db);
        let seq = synth_csi(&body, &geo, &grid, s.samples, sigma, seed)?.with_label(label.clone());
        let bytes = encode(&seq)?;
        write(&dir.join(&name), &bytes)?;
        files.push(DataFile {
            file: name,
            label,
            seed,
            noise_sigma: sigma,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = DataManifest {
        schema_version: SCHEMA,
        seed: cfg.seed,
        task: cfg.task,
        synth: s.clone(),
        filter: None,
        files,
    };
    write_toml(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

fn load_data_manifest(dir: &Path) -> Result<DataManifest> {
    let m: DataManifest = read_toml(&dir.join(MANIFEST))?;
    if m.schema_version != SCHEMA {
        return Err(Error::Config(format!("unsupported data manifest schema {}", m.schema_version)));
    }
    Ok(m)
}

fn apply_filters(series: &AmplitudeSeries, f: &FilterConfig) -> Result<AmplitudeSeries> {
    if !f.enabled {
        return Ok(series.clone());
    }
    let mut out = series.clone();
    if f.median_window > 1 && series.len() >= f.median_window {
        out = median_filter(&out, f.median_window)?;
    }
    if f.mean_window > 1 && series.len() >= f.mean_window {
        out = mean_filter(&out, f.mean_window)?;
    }
    if f.butterworth_order > 0 && f.cutoff_hz < series.sample_rate() / 2.0 {
        out = butterworth_lowpass(&out, f.butterworth_order, f.cutoff_hz)?;
    }
    Ok(out)
}

/// Amplitudes stored back as CSI1 with zero imaginary part, so the modulus
/// of a filtered frame is its filtered amplitude. Negative ringing is
/// clamped to zero.
fn series_to_sequence(series: &AmplitudeSeries, template: &CsiSequence) -> Result<CsiSequence> {
    let frames = (0..series.len())
        .map(|t| {
            let values = series.row(t).iter().map(|&v| Complex32::new(v.max(0.0) as f32, 0.0)).collect();
            CsiFrame::new(values, template.frames()[t].timestamp_index)
        })
        .collect();
    CsiSequence::new(template.shape(), frames, template.sample_rate(), template.label.clone())
}

/// Denoises every file of `data/` into `filtered/`.
pub fn cmd_filter(cfg: &RunConfig) -> Result<DataManifest> {
    let layout = Layout::new(&cfg.out);
    let src = layout.data();
    let mut manifest = load_data_manifest(&src)?;
    let dst = layout.filtered();
    create_dir(&dst)?;
    for f in &mut manifest.files {
        let seq = read_dataset(src.join(&f.file))?;
        let filtered = apply_filters(&AmplitudeSeries::from_sequence(&seq), &cfg.filter)?;
        let bytes = encode(&series_to_sequence(&filtered, &seq)?)?;
        write(&dst.join(&f.file), &bytes)?;
        f.sha256 = sha256_hex(&bytes);
    }
    manifest.filter = Some(cfg.filter.clone());
    write_toml(&dst.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

fn sequence_instances(seq: &CsiSequence) -> Vec<Instance> {
    seq.frames()
        .iter()
        .map(|f| Instance {
            label: seq.label.clone(),
            ..amplitude(f)
        })
        .collect()
}

/// Chronological 80/20 split of every file, then per-file (so per-class)
/// augmentation of the training part.
pub fn cmd_augment(cfg: &RunConfig) -> Result<SplitManifest> {
    let layout = Layout::new(&cfg.out);
    let src = layout.filtered();
    let manifest = load_data_manifest(&src)?;
    let stage_seed = derive_seed(cfg.seed, "augment");
    let (mut train, mut test, mut augmented) = (Vec::new(), Vec::new(), Vec::new());
    for (i, f) in manifest.files.iter().enumerate() {
        let inst = sequence_instances(&read_dataset(src.join(&f.file))?);
        let (tr, te) = split_train_test(&inst)?;
        if cfg.augment.enabled {
            augmented.extend(augment(&tr, stream_seed(stage_seed, i as u64))?);
        }
        train.extend(tr);
        test.extend(te);
    }
    let dst = layout.split();
    create_dir(&dst)?;
    export_instances_csv(&train, dst.join("train.csv"))?;
    export_instances_csv(&test, dst.join("test.csv"))?;
    let train_file = if cfg.augment.enabled {
        export_instances_csv(&augmented, dst.join("train_augmented.csv"))?;
        "train_augmented.csv"
    } else {
        "train.csv"
    };
    let split = SplitManifest {
        schema_version: SCHEMA,
        n_train: if cfg.augment.enabled { augmented.len() } else { train.len() },
        n_test: test.len(),
        augmented: cfg.augment.enabled,
        train_file: train_file.into(),
    };
    write_toml(&dst.join(MANIFEST), &split)?;
    Ok(split)
}

fn load_split(layout: &Layout) -> Result<SplitManifest> {
    read_toml(&layout.split().join(MANIFEST))
}

pub fn net_config(cfg: &RunConfig) -> NetConfig {
    let mut net = NetConfig::new(cfg.task, cfg.variant, cfg.scale);
    net.tasks = cfg.task.tasks(cfg.alpha);
    net
}

/// Trains on the split's training file; writes the checkpoint, its TOML
/// manifest and a per-epoch loss log.
pub fn cmd_train(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.out);
    let split = load_split(&layout)?;
    let data = import_instances_csv(layout.split().join(&split.train_file))?;
    let net = net_config(cfg);
    let tc = cfg.train_config();
    let mut model = build_model(&net, cfg.seed)?;
    let (log, adam) = train_with_optimizer(&mut model, &data, &tc)?;

    let dir = layout.model();
    create_dir(&dir)?;
    model.checkpoint(Some(&adam)).save(layout.checkpoint())?;
    let manifest = Manifest::new(&net, &tc, model.normalization(), &data);
    manifest.save(dir.join("model.toml"))?;
    let mut csv = String::from("epoch,lr,loss\n");
    for (e, (lr, loss)) in log.epoch_lr.iter().zip(&log.epoch_loss).enumerate() {
        writeln!(csv, "{},{lr},{loss}", e + 1).expect("string write");
    }
    write(&dir.join("loss.csv"), csv)?;
    Ok(manifest)
}

fn variant_name(v: crate::net::Variant) -> String {
    format!("{v:?}").to_lowercase()
}

/// Evaluates the checkpoint on the test split, with the naive Bayes
/// baseline fitted on the un-augmented training split, and exports the
/// metrics under `eval/`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<Vec<TaskReport>> {
    let layout = Layout::new(&cfg.out);
    let manifest = Manifest::load(layout.model().join("model.toml"))?;
    let mut model = build_model(&manifest.net, manifest.seed)?;
    model.load_checkpoint(&Checkpoint::load(layout.checkpoint())?)?;
    let test = import_instances_csv(layout.split().join("test.csv"))?;
    let train_raw = import_instances_csv(layout.split().join("train.csv"))?;

    let mut reports = Vec::new();
    let preds = predict(&mut model, &test)?;
    for (tc, pred) in manifest.net.tasks.iter().zip(preds) {
        let mut r = TaskReport {
            task: tc.task.name().into(),
            variant: variant_name(variant_of(&manifest.net)),
            n_train: manifest.n_train,
            n_test: test.len(),
            ..Default::default()
        };
        match pred {
            Predictions::Classes(p) => {
                let truth = labels_of(&test, |l| l.class())?;
                let cm = confusion(&truth, &p, tc.output_dim)?;
                let nb = gaussian_nb_fit(&train_raw)?;
                let nb_pred: Vec<u32> = test.iter().map(|i| gaussian_nb_predict(&nb, i)).collect();
                let nb_hits = nb_pred.iter().zip(&truth).filter(|(a, b)| a == b).count();
                r.accuracy = Some(accuracy(&cm));
                r.baseline_accuracy = Some(nb_hits as f64 / truth.len().max(1) as f64);
                r.class_rates = Some(cm.class_rates());
                r.confusion = Some(cm);
            }
            Predictions::Biometrics(p) => {
                let truth = labels_of(&test, |l| l.biometrics().map(<[f64]>::to_vec))?;
                let ids: Vec<u32> = test.iter().map(|i| i.label.class().map_or(0, |c| c + 1)).collect();
                r.regression = Some(mean_average_error(&truth, &p, &ids)?);
            }
        }
        reports.push(r);
    }
    export_report(&reports, layout.eval())?;
    Ok(reports)
}

fn variant_of(net: &NetConfig) -> crate::net::Variant {
    net.generation.mode
}

fn labels_of<T>(data: &[Instance], f: impl Fn(&Label) -> Option<T>) -> Result<Vec<T>> {
    data.iter()
        .map(|i| f(&i.label).ok_or_else(|| Error::domain(format!("test instance has unusable label {:?}", i.label))))
        .collect()
}

/// Pass/fail of one task against the thresholds, with the reasons it failed.
pub fn check_thresholds(r: &TaskReport, t: &Thresholds) -> Vec<String> {
    let mut failures = Vec::new();
    if let Some(acc) = r.accuracy {
        if let Some(min) = t.min_accuracy {
            if acc < min {
                failures.push(format!("{}: accuracy {:.4} < {min}", r.task, acc));
            }
        }
        if t.beat_baseline {
            if let Some(b) = r.baseline_accuracy {
                if acc < b {
                    failures.push(format!("{}: accuracy {:.4} below naive Bayes {:.4}", r.task, acc, b));
                }
            }
        }
    }
    if let (Some(reg), Some(max)) = (&r.regression, t.max_mae) {
        if reg.mae > max {
            failures.push(format!("{}: mAE {:.4} > {max}", r.task, reg.mae));
        }
    }
    failures
}

/// Fixed-width table, one row per task.
pub fn summary_table(reports: &[TaskReport], t: &Thresholds) -> String {
    let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.2}%", 100.0 * v));
    let num = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
    let mut s = format!(
        "{:<11} {:<7} {:>7} {:>9} {:>11} {:>8} {:>8}  {}\n",
        "task", "variant", "n_test", "CSI-Net", "naive Bayes", "mAE", "mSD", "status"
    );
    for r in reports {
        let status = if check_thresholds(r, t).is_empty() { "PASS" } else { "FAIL" };
        writeln!(
            s,
            "{:<11} {:<7} {:>7} {:>9} {:>11} {:>8} {:>8}  {status}",
            r.task,
            r.variant,
            r.n_test,
            pct(r.accuracy),
            pct(r.baseline_accuracy),
            num(r.regression.as_ref().map(|g| g.mae)),
            num(r.regression.as_ref().map(|g| g.msd)),
        )
        .expect("string write");
    }
    s
}

/// Renders `eval/metrics.toml` as a table into `report/summary.txt`.
pub fn cmd_report(cfg: &RunConfig) -> Result<String> {
    let layout = Layout::new(&cfg.out);
    let metrics = read_metrics(layout.eval().join(crate::eval::report::METRICS_FILE))?;
    let table = summary_table(&metrics.tasks, &cfg.thresholds);
    let dir = layout.report();
    create_dir(&dir)?;
    write(&dir.join("summary.txt"), &table)?;
    Ok(table)
}
