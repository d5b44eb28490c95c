//! CSI synthesis from a body model.
//!
//! The channel at each subcarrier is the sum of one direct air path and a set
//! of body paths. A body path crosses the body's layers once and then an air
//! leg of `tx_rx_distance + extra`. The sum is divided by the direct path's
//! free-space factor, which models receiver gain control holding the
//! line-of-sight component at unit magnitude.

use num_complex::{Complex32, Complex64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{free_space_factor, received_signal, BodyModel, PropagationPath};
use crate::error::{Error, Result};
use crate::pipeline::{CsiFrame, CsiSequence, CsiShape, Label, DEFAULT_SAMPLE_RATE};
use crate::seed::stream_seed;

/// Transmitter/receiver layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Direct path length, metres.
    pub tx_rx_distance: f64,
    /// Extra air distance of each body path relative to the direct path.
    pub body_path_extra: Vec<f64>,
}

impl Geometry {
    /// `n_paths` total paths: one direct plus `n_paths - 1` body paths with
    /// extra air distances 0.2 m, 0.5 m, 0.8 m, ...
    pub fn new(tx_rx_distance: f64, n_paths: usize) -> Result<Self> {
        if n_paths == 0 {
            return Err(Error::domain("need at least the direct path"));
        }
        let extra = (0..n_paths - 1).map(|i| 0.2 + 0.3 * i as f64).collect();
        Self::with_extras(tx_rx_distance, extra)
    }

    pub fn with_extras(tx_rx_distance: f64, body_path_extra: Vec<f64>) -> Result<Self> {
        if !(tx_rx_distance > 0.0) {
            return Err(Error::domain(format!(
                "tx-rx distance must be positive, got {tx_rx_distance}"
            )));
        }
        if body_path_extra.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::domain("body path extra distances must be non-negative"));
        }
        Ok(Self {
            tx_rx_distance,
            body_path_extra,
        })
    }

    pub fn n_paths(&self) -> usize {
        1 + self.body_path_extra.len()
    }
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            tx_rx_distance: 3.0,
            body_path_extra: vec![0.2, 0.5],
        }
    }
}

/// `n` subcarrier frequencies centred on `center_hz`.
pub fn subcarrier_grid(center_hz: f64, spacing_hz: f64, n: usize) -> Vec<f64> {
    let mid = (n as f64 - 1.0) / 2.0;
    (0..n)
        .map(|i| center_hz + (i as f64 - mid) * spacing_hz)
        .collect()
}

fn body_paths(body: &BodyModel, geometry: &Geometry) -> Result<Vec<PropagationPath>> {
    geometry
        .body_path_extra
        .iter()
        .map(|extra| PropagationPath::through_body(body, geometry.tx_rx_distance + extra))
        .collect()
}

fn channel_parts(
    body: &BodyModel,
    geometry: &Geometry,
    subcarriers: &[f64],
) -> Result<Vec<(Complex64, Complex64)>> {
    if subcarriers.is_empty() {
        return Err(Error::domain("subcarrier list is empty"));
    }
    let direct = PropagationPath::air_only(geometry.tx_rx_distance)?;
    let paths = body_paths(body, geometry)?;
    let one = Complex64::new(1.0, 0.0);
    subcarriers
        .iter()
        .map(|&f| {
            let gain = free_space_factor(geometry.tx_rx_distance, f);
            let los = received_signal(&direct, one, f)? / gain;
            let mut via_body = Complex64::new(0.0, 0.0);
            for p in &paths {
                via_body += received_signal(p, one, f)?;
            }
            Ok((los, via_body / gain))
        })
        .collect()
}

/// Noise-free normalized channel per subcarrier.
pub fn synth_channel(body: &BodyModel, geometry: &Geometry, subcarriers: &[f64]) -> Result<Vec<Complex64>> {
    Ok(channel_parts(body, geometry, subcarriers)?
        .into_iter()
        .map(|(los, b)| los + b)
        .collect())
}

/// RMS magnitude of the body-path contribution over the subcarriers.
///
/// This is the subject-dependent part of the channel and the reference for
/// [`noise_sigma_for_snr`].
pub fn body_component_rms(body: &BodyModel, geometry: &Geometry, subcarriers: &[f64]) -> Result<f64> {
    let parts = channel_parts(body, geometry, subcarriers)?;
    let power: f64 = parts.iter().map(|(_, b)| b.norm_sqr()).sum::<f64>() / parts.len() as f64;
    Ok(power.sqrt())
}

/// Noise level giving `snr_db` against a signal of RMS magnitude `signal_rms`.
pub fn noise_sigma_for_snr(signal_rms: f64, snr_db: f64) -> f64 {
    signal_rms / 10f64.powf(snr_db / 20.0)
}

/// Synthesize `n_samples` frames at 100 Hz.
///
/// Noise is circular complex Gaussian with total variance `noise_sigma^2`.
/// Each sample draws from its own stream derived from `(seed, index)`.
pub fn synth_csi(
    body: &BodyModel,
    geometry: &Geometry,
    subcarriers: &[f64],
    n_samples: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<CsiSequence> {
    if n_samples == 0 {
        return Err(Error::domain("n_samples must be at least 1"));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::domain(format!("noise sigma must be non-negative, got {noise_sigma}")));
    }
    let channel = synth_channel(body, geometry, subcarriers)?;
    let component_sigma = noise_sigma / std::f64::consts::SQRT_2;
    let frames: Vec<CsiFrame> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, i as u64));
            let values = channel
                .iter()
                .map(|h| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    let v = h + Complex64::new(re, im) * component_sigma;
                    Complex32::new(v.re as f32, v.im as f32)
                })
                .collect();
            CsiFrame::new(values, i as u64)
        })
        .collect();
    CsiSequence::new(
        CsiShape::siso(subcarriers.len()),
        frames,
        DEFAULT_SAMPLE_RATE,
        Label::None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tissue::{subject, subject_to_body, Band};

    fn grid() -> Vec<f64> {
        subcarrier_grid(5.32e9, 312_500.0 * 2.0, 30)
    }

    fn body(id: u32) -> BodyModel {
        subject_to_body(&subject(id).unwrap(), Band::Ghz5).unwrap()
    }

    #[test]
    fn grid_is_centred() {
        let g = subcarrier_grid(100.0, 2.0, 3);
        assert_eq!(g, vec![98.0, 100.0, 102.0]);
        assert_eq!(subcarrier_grid(0.0, 1.0, 30).len(), 30);
    }

    #[test]
    fn noiseless_samples_identical() {
        let s = synth_csi(&body(1), &Geometry::default(), &grid(), 20, 0.0, 3).unwrap();
        let first = &s.frames()[0].values;
        assert!(s.frames().iter().all(|f| &f.values == first));
        assert_eq!(s.sample_rate(), 100.0);
        assert_eq!(s.shape(), CsiShape::DEFAULT);
    }

    #[test]
    fn reproducible_per_seed() {
        let a = synth_csi(&body(3), &Geometry::default(), &grid(), 50, 0.01, 11).unwrap();
        let b = synth_csi(&body(3), &Geometry::default(), &grid(), 50, 0.01, 11).unwrap();
        let c = synth_csi(&body(3), &Geometry::default(), &grid(), 50, 0.01, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn subjects_distinguishable_above_noise_floor() {
        let sigma = 1e-4;
        let mean_amp = |id| {
            let s = synth_csi(&body(id), &Geometry::default(), &grid(), 200, sigma, 5).unwrap();
            let mut acc = vec![0.0f64; 30];
            for f in s.frames() {
                for (a, v) in acc.iter_mut().zip(&f.values) {
                    *a += v.norm() as f64;
                }
            }
            acc.into_iter().map(|a| a / 200.0).collect::<Vec<_>>()
        };
        let a = mean_amp(1);
        let b = mean_amp(22);
        let max_diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(max_diff > 10.0 * sigma, "max diff {max_diff}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let b = body(1);
        assert!(synth_csi(&b, &Geometry::default(), &[], 10, 0.0, 0).is_err());
        assert!(synth_csi(&b, &Geometry::default(), &grid(), 0, 0.0, 0).is_err());
        assert!(synth_csi(&b, &Geometry::default(), &grid(), 1, -1.0, 0).is_err());
        assert!(Geometry::new(3.0, 0).is_err());
    }

    #[test]
    fn default_geometry_has_three_paths() {
        assert_eq!(Geometry::default(), Geometry::new(3.0, 3).unwrap());
        assert_eq!(Geometry::default().n_paths(), 3);
    }

    #[test]
    fn los_has_unit_magnitude() {
        let g = Geometry::with_extras(3.0, vec![]).unwrap();
        for h in synth_channel(&body(1), &g, &grid()).unwrap() {
            assert!((h.norm() - 1.0).abs() < 1e-12);
        }
    }
}
