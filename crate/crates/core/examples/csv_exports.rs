//! Instance CSV round trip and the confusion-matrix CSV for a hand-made
//! set of predictions.

use csi_sense::eval::report::write_confusion_csv;
use csi_sense::eval::{accuracy, confusion};
use csi_sense::pipeline::{read_instances_csv, write_instances_csv, Instance, Label};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let instances = vec![
        Instance::new(vec![0.5, 1.25, 2.0], Label::Class(3))?,
        Instance::new(vec![0.75, 1.0, 1.5], Label::Subject { class: 5, biometrics: vec![20.1, 38.2, 55.0, 4.1] })?,
        Instance::new(vec![0.0, 0.0, 0.0], Label::None)?,
    ];
    let mut buf = Vec::new();
    write_instances_csv(&instances, &mut buf)?;
    print!("{}", String::from_utf8(buf.clone())?);
    assert_eq!(read_instances_csv(buf.as_slice())?, instances);

    let truth = [0, 0, 0, 1, 1, 1, 1, 2, 2, 2];
    let pred = [0, 0, 1, 1, 1, 1, 2, 2, 2, 0];
    let cm = confusion(&truth, &pred, 3)?;
    println!("accuracy {:.1}%, per-class {:?}", 100.0 * accuracy(&cm), cm.class_rates());
    let mut out = Vec::new();
    write_confusion_csv(&cm, &mut out)?;
    print!("{}", String::from_utf8(out)?);
    Ok(())
}
