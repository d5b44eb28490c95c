//! Prints the tensor shape after every generation and backbone stage for
//! each variant, at the scale given on the command line (desk or paper).

use csi_sense::net::{build_model, NetConfig, Scale, TaskSelection, Variant};

fn main() -> csi_sense::Result<()> {
    let scale = match std::env::args().nth(1).as_deref() {
        Some("paper") => Scale::Paper,
        _ => Scale::Desk,
    };
    for variant in [Variant::Tc, Variant::Interp, Variant::Hybrid] {
        let mut model = build_model(&NetConfig::new(TaskSelection::Joint, variant, scale), 0)?;
        println!("== {variant:?} {scale:?}: {} parameters", model.param_count());
        for (name, shape) in model.shape_trace()? {
            println!("  {name:<24} {shape:?}");
        }
    }
    Ok(())
}
