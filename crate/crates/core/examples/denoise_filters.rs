//! Injects impulse spikes and high-frequency ripple into a smooth amplitude
//! trace, then shows what each filter stage removes.

use csi_sense::pipeline::filter::{butterworth_sections, filtfilt};
use csi_sense::pipeline::{butterworth_lowpass, denoise, mean_filter, median_filter, AmplitudeSeries, Label};

fn rms_error(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

fn main() -> csi_sense::Result<()> {
    let fs = 100.0;
    let n = 400;
    let clean: Vec<f64> = (0..n).map(|t| 1.0 + 0.3 * (t as f64 / fs * std::f64::consts::TAU * 0.5).sin()).collect();
    let noisy: Vec<f64> = clean
        .iter()
        .enumerate()
        .map(|(t, c)| {
            let ripple = 0.05 * (t as f64 / fs * std::f64::consts::TAU * 35.0).sin();
            let spike = if t % 37 == 11 { 2.0 } else { 0.0 };
            c + ripple + spike
        })
        .collect();

    // Two identical channels; the filters work column by column.
    let data: Vec<f64> = noisy.iter().flat_map(|&v| [v, v]).collect();
    let seq = AmplitudeSeries::new(2, data, fs, Label::None)?;

    let stages = [
        ("raw", seq.clone()),
        ("median 5", median_filter(&seq, 5)?),
        ("mean 5", mean_filter(&seq, 5)?),
        ("butterworth 4 @ 10 Hz", butterworth_lowpass(&seq, 4, 10.0)?),
        ("median, mean, butterworth", denoise(&seq)?),
    ];
    for (name, out) in &stages {
        let col = out.column(0);
        let peak = col.iter().cloned().fold(f64::MIN, f64::max);
        println!("{name:<26} rms error {:.4}  peak {:.3}", rms_error(&col, &clean), peak);
    }

    let sections = butterworth_sections(4, 10.0, fs)?;
    println!("{} biquad sections", sections.len());
    for f_hz in [1.0, 10.0, 20.0, 35.0] {
        let w = std::f64::consts::TAU * f_hz / fs;
        let gain: f64 = sections.iter().map(|s| s.response(w).norm()).product();
        println!("  |H({f_hz:>4} Hz)| = {gain:.4} (forward-backward {:.4})", gain * gain);
    }
    let step: Vec<f64> = (0..200).map(|t| if t < 100 { 0.0 } else { 1.0 }).collect();
    let y = filtfilt(&sections, &step);
    println!("zero-phase step: y[99] = {:.3}, y[100] = {:.3}", y[99], y[100]);
    Ok(())
}
