//! Runs every CLI stage in-process on a small sign-recognition setup and
//! prints the summary table. The same run from a shell:
//!
//! `csi-sense e2e --task sign --config small.toml --out <dir>`

use csi_sense::cli::{cmd_e2e, Layout, RunConfig};
use csi_sense::net::TaskSelection;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = RunConfig::from_toml(
        r#"
        seed = 5
        [synth]
        samples = 200
        [train]
        epochs = 4
        [augment]
        enabled = false
        "#,
    )?;
    cfg.task = TaskSelection::Sign;
    cfg.out = std::env::temp_dir().join("csi_sense_e2e_example");

    let outcome = cmd_e2e(&cfg)?;
    print!("{}", outcome.table);
    for f in &outcome.failures {
        println!("threshold not met: {f}");
    }

    let layout = Layout::new(&cfg.out);
    for dir in [layout.data(), layout.filtered(), layout.split(), layout.model(), layout.eval(), layout.report()] {
        let mut names: Vec<String> = std::fs::read_dir(&dir)?
            .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
            .collect::<Result<_, _>>()?;
        names.sort();
        println!("{}: {}", dir.display(), names.join(" "));
    }
    println!("config used:\n{}", cfg.to_toml()?);
    Ok(())
}
