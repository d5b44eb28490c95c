//! Chronological 80/20 split followed by mean-of-k augmentation of the
//! training part, class by class.

use csi_sense::pipeline::{augment, augment_plan, augmented_len, split_train_test, Instance, Label, AUGMENT_KS};

fn main() -> csi_sense::Result<()> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..3u32 {
        let instances: Vec<Instance> = (0..50)
            .map(|t| Instance::new(vec![class as f32 + t as f32 * 0.01; 30], Label::Class(class)))
            .collect::<csi_sense::Result<_>>()?;
        let (tr, te) = split_train_test(&instances)?;
        println!("class {class}: {} train, {} test, last train t = {:.2}", tr.len(), te.len(), tr.last().unwrap().amplitude[0] - class as f32);
        let aug = augment(&tr, 7 + class as u64)?;
        assert_eq!(aug.len(), augmented_len(tr.len()));
        train.extend(aug);
        test.extend(te);
    }
    println!("augmented train {} (k = {AUGMENT_KS:?}), test {}", train.len(), test.len());

    for (k, groups) in augment_plan(10, 7) {
        println!("k = {k}: {groups:?}");
    }
    Ok(())
}
