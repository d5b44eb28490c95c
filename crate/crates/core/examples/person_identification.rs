//! Trains the desk-scale network to tell five subjects apart from filtered
//! CSI amplitudes and compares it with a Gaussian naive Bayes baseline.
//!
//! `cargo run --release --example person_identification -- [epochs] [variant]`

use csi_sense::eval::{accuracy, confusion, gaussian_nb_fit, gaussian_nb_predict};
use csi_sense::net::{build_model, predict, train, NetConfig, Predictions, Scale, Task, TaskSelection, TrainConfig, Variant};
use csi_sense::pipeline::{denoise, split_train_test, AmplitudeSeries, Instance, Label};
use csi_sense::seed::stream_seed;
use csi_sense::tissue::{
    body_component_rms, noise_sigma_for_snr, subcarrier_grid, subject, subject_to_body, synth_csi, Band, Geometry,
};

const SUBJECTS: [u32; 5] = [1, 3, 6, 16, 22];

fn dataset(frames: usize) -> csi_sense::Result<(Vec<Instance>, Vec<Instance>)> {
    let grid = subcarrier_grid(5.32e9, 625e3, 30);
    let geometry = Geometry::with_extras(3.0, vec![0.2, 0.5])?;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, &id) in SUBJECTS.iter().enumerate() {
        let profile = subject(id).unwrap();
        let body = subject_to_body(&profile, Band::Ghz5)?;
        let sigma = noise_sigma_for_snr(body_component_rms(&body, &geometry, &grid)?, 20.0);
        let seq = synth_csi(&body, &geometry, &grid, frames, sigma, stream_seed(7, i as u64))?;
        let seq = seq.with_label(Label::Subject {
            class: id - 1,
            biometrics: profile.biometrics().to_vec(),
        });
        let filtered = denoise(&AmplitudeSeries::from_sequence(&seq))?;
        let (tr, te) = split_train_test(&filtered.instances())?;
        train.extend(tr);
        test.extend(te);
    }
    Ok((train, test))
}

fn main() -> csi_sense::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(5);
    let variant = match args.next().as_deref() {
        Some("interp") => Variant::Interp,
        Some("hybrid") => Variant::Hybrid,
        _ => Variant::Tc,
    };

    let (train_set, test_set) = dataset(400)?;
    println!("{} train, {} test instances", train_set.len(), test_set.len());

    let mut model = build_model(&NetConfig::new(TaskSelection::Person, variant, Scale::Desk), 7)?;
    let cfg = TrainConfig {
        epochs,
        seed: 7,
        ..TrainConfig::default()
    };
    let start = std::time::Instant::now();
    let log = train(&mut model, &train_set, &cfg)?;
    for (e, (loss, lr)) in log.epoch_loss.iter().zip(&log.epoch_lr).enumerate() {
        println!("epoch {:2}  loss {loss:.4}  lr {lr:.2e}", e + 1);
    }
    println!("trained in {:.1?}", start.elapsed());

    let truth: Vec<u32> = test_set.iter().map(|i| i.label.class().unwrap()).collect();
    let Predictions::Classes(pred) = &predict(&mut model, &test_set)?[0] else {
        unreachable!("person head is a classifier")
    };
    let n = Task::Person.output_dim();
    let cm = confusion(&truth, pred, n)?;

    let nb = gaussian_nb_fit(&train_set)?;
    let nb_pred: Vec<u32> = test_set.iter().map(|i| gaussian_nb_predict(&nb, i)).collect();
    let nb_cm = confusion(&truth, &nb_pred, n)?;

    println!("network accuracy     {:.2}%", 100.0 * accuracy(&cm));
    println!("naive Bayes accuracy {:.2}%", 100.0 * accuracy(&nb_cm));
    let rates = cm.class_rates();
    for id in SUBJECTS {
        println!("  subject {id:2}: {:.1}%", 100.0 * rates[id as usize - 1]);
    }
    Ok(())
}
