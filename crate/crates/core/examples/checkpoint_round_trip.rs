//! Saves a trained model and its Adam state as a CSNW checkpoint, restores
//! it into a freshly built model, and checks the outputs agree bit for bit.

use csi_sense::net::{build_model, predict, train_with_optimizer, Manifest, NetConfig, Scale, TaskSelection, TrainConfig, Variant};
use csi_sense::nn::Checkpoint;
use csi_sense::pipeline::{Instance, Label};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Two linearly separable classes of 30-dim amplitude vectors.
    let data: Vec<Instance> = (0..60)
        .map(|i| {
            let c = (i % 2) as u32;
            let amp = (0..30).map(|j| 1.0 + c as f32 * 0.2 * (j as f32 / 30.0) + 0.01 * (i as f32).sin()).collect();
            Instance::new(amp, Label::Class(c))
        })
        .collect::<Result<_, _>>()?;

    let net = NetConfig::new(TaskSelection::Falling, Variant::Hybrid, Scale::Desk);
    let train_cfg = TrainConfig { epochs: 2, seed: 3, ..TrainConfig::default() };
    let mut model = build_model(&net, 3)?;
    let (_, adam) = train_with_optimizer(&mut model, &data, &train_cfg)?;

    let dir = std::env::temp_dir().join("csi_sense_checkpoint_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.csnw");
    model.checkpoint(Some(&adam)).save(&path)?;
    let manifest = Manifest::new(&net, &train_cfg, model.normalization(), &data);
    manifest.save(dir.join("model.toml"))?;

    let ck = Checkpoint::load(&path)?;
    println!("{}: {} tensors, {} bytes, optimizer step {}", path.display(), ck.tensors.len(), std::fs::metadata(&path)?.len(), ck.optimizer.as_ref().map_or(0, |o| o.t));
    for (name, t) in ck.tensors.iter().take(5) {
        println!("  {name:<40} {:?}", t.shape());
    }

    let manifest = Manifest::load(dir.join("model.toml"))?;
    let mut restored = build_model(&manifest.net, 99)?;
    restored.set_normalization(manifest.normalization.clone())?;
    restored.load_checkpoint(&ck)?;
    assert_eq!(predict(&mut model, &data)?, predict(&mut restored, &data)?);
    println!("restored model reproduces every prediction; data hash {}", &manifest.data_hash[..16]);
    Ok(())
}
