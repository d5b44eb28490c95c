//! Regresses fat, muscle, water and bone rates from CSI, reports mAE and
//! mSD per subject, and writes the radar CSV next to the metrics file.

use csi_sense::eval::{export_report, mean_average_error, TaskReport};
use csi_sense::net::{build_model, predict, train, NetConfig, Predictions, Scale, TaskSelection, TrainConfig, Variant};
use csi_sense::pipeline::{denoise, split_train_test, AmplitudeSeries, Label};
use csi_sense::seed::stream_seed;
use csi_sense::tissue::{
    body_component_rms, noise_sigma_for_snr, subcarrier_grid, subject, subject_to_body, synth_csi, Band, Geometry,
    BIOMETRIC_NAMES,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = subcarrier_grid(5.32e9, 625e3, 30);
    let geometry = Geometry::with_extras(3.0, vec![0.2, 0.5])?;
    let (mut train_set, mut test_set) = (Vec::new(), Vec::new());
    for (i, id) in [1u32, 3, 6, 16, 22].into_iter().enumerate() {
        let profile = subject(id).unwrap();
        let body = subject_to_body(&profile, Band::Ghz5)?;
        let sigma = noise_sigma_for_snr(body_component_rms(&body, &geometry, &grid)?, 20.0);
        let seq = synth_csi(&body, &geometry, &grid, 300, sigma, stream_seed(11, i as u64))?
            .with_label(Label::Subject { class: id - 1, biometrics: profile.biometrics().to_vec() });
        let (tr, te) = split_train_test(&denoise(&AmplitudeSeries::from_sequence(&seq))?.instances())?;
        train_set.extend(tr);
        test_set.extend(te);
    }

    let mut model = build_model(&NetConfig::new(TaskSelection::Biometrics, Variant::Tc, Scale::Desk), 11)?;
    let cfg = TrainConfig { epochs: 6, seed: 11, ..TrainConfig::default() };
    let log = train(&mut model, &train_set, &cfg)?;
    println!("final L1 loss {:.4}", log.epoch_loss.last().unwrap());

    let Predictions::Biometrics(est) = predict(&mut model, &test_set)?.remove(0) else {
        unreachable!()
    };
    let truth: Vec<Vec<f64>> = test_set.iter().map(|i| i.label.biometrics().unwrap().to_vec()).collect();
    let ids: Vec<u32> = test_set.iter().map(|i| i.label.class().unwrap() + 1).collect();
    let report = mean_average_error(&truth, &est, &ids)?;

    println!("mAE {:.3}  mSD {:.3}", report.mae, report.msd);
    for (name, e) in BIOMETRIC_NAMES.iter().zip(&report.per_biometric_mae) {
        println!("  {name:<8} {e:.3}");
    }
    for s in &report.subjects {
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:5.1}")).collect::<Vec<_>>().join(" ");
        println!("subject {:2}: truth [{}] estimate [{}] e = {:.3}", s.subject, fmt(&s.mean_truth), fmt(&s.mean_estimate), s.mean_abs_error);
    }

    let dir = std::env::temp_dir().join("csi_sense_biometrics_example");
    let files = export_report(
        &[TaskReport {
            task: "biometrics".into(),
            variant: "tc".into(),
            n_train: train_set.len(),
            n_test: test_set.len(),
            regression: Some(report),
            ..TaskReport::default()
        }],
        &dir,
    )?;
    println!("{}", files.metrics.display());
    for p in &files.radar {
        println!("{}", std::fs::read_to_string(p)?);
    }
    Ok(())
}
