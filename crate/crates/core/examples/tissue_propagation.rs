//! Walks a 5 GHz ray through one subject's body: per-layer speed and decay,
//! then the received signal for a few path lengths.

use csi_sense::tissue::{
    attenuation_coefficient, doppler_shift, phase_variation, power_decay, received_signal, subject,
    subject_to_body, time_delay, wave_speed, Band, PropagationPath, C0,
};
use num_complex::Complex64;

fn main() -> csi_sense::Result<()> {
    let profile = subject(1).expect("subject 1 is bundled");
    let body = subject_to_body(&profile, Band::Ghz5)?;
    println!("subject {} ({}), body {:.1} mm", profile.id, profile.sex, body.total_thickness() * 1e3);
    println!("{:<28} {:>9} {:>14} {:>10}", "layer", "mm", "speed (m/s)", "decay");
    for layer in body.layers() {
        println!(
            "{:<28} {:>9.2} {:>14.4e} {:>10.4}",
            layer.name(),
            layer.thickness * 1e3,
            wave_speed(layer),
            attenuation_coefficient(layer)
        );
    }

    let f = Band::Ghz5.center_hz();
    let x = Complex64::new(1.0, 0.0);
    for d0 in [1.0, 3.0, 5.0] {
        let air = PropagationPath::air_only(d0)?;
        let through = PropagationPath::through_body(&body, d0)?;
        let y = received_signal(&through, x, f)?;
        println!(
            "d0 = {d0} m: air |y| {:.3e}, body |y| {:.3e} (arg {:+.3}), extra delay {:.3} ns",
            power_decay(&air, 1.0, f),
            y.norm(),
            y.arg(),
            (time_delay(&through) - time_delay(&air)) * 1e9
        );
    }

    // Walking towards the receiver at 1 m/s.
    println!("doppler at 1 m/s: {:+.2} Hz", doppler_shift(f, 1.0, C0, true)?);
    println!("phase after 1 cm: {:.4} rad", phase_variation(0.01, C0 / f)?);
    Ok(())
}
