//! Denoising filters applied per channel along time.
//!
//! Windowed filters use shrunken windows at the boundaries: the window is
//! clipped to the available samples, no padding is invented.

use num_complex::Complex64;

use super::AmplitudeSeries;
use crate::error::{Error, Result};

pub const DEFAULT_MEDIAN_WINDOW: usize = 5;
pub const DEFAULT_MEAN_WINDOW: usize = 5;
pub const DEFAULT_BUTTERWORTH_ORDER: usize = 4;
pub const DEFAULT_BUTTERWORTH_CUTOFF_HZ: f64 = 10.0;

fn check_window(window: usize, len: usize) -> Result<()> {
    if window == 0 {
        return Err(Error::domain("window must be at least 1"));
    }
    if window > len.max(1) {
        return Err(Error::domain(format!(
            "window {window} longer than series of {len} samples"
        )));
    }
    Ok(())
}

/// Half-open range `[lo, hi)` of the window centred on `t`.
///
/// For even windows the extra sample sits after `t`.
fn window_bounds(t: usize, window: usize, len: usize) -> (usize, usize) {
    let before = (window - 1) / 2;
    let after = window - 1 - before;
    (t.saturating_sub(before), (t + after + 1).min(len))
}

fn median_of(buf: &mut [f64]) -> f64 {
    buf.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = buf.len();
    if n % 2 == 1 {
        buf[n / 2]
    } else {
        0.5 * (buf[n / 2 - 1] + buf[n / 2])
    }
}

pub fn median_1d(x: &[f64], window: usize) -> Vec<f64> {
    let mut buf = Vec::with_capacity(window);
    (0..x.len())
        .map(|t| {
            let (lo, hi) = window_bounds(t, window, x.len());
            buf.clear();
            buf.extend_from_slice(&x[lo..hi]);
            median_of(&mut buf)
        })
        .collect()
}

pub fn mean_1d(x: &[f64], window: usize) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..x.len())
        .map(|t| {
            let (lo, hi) = window_bounds(t, window, x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Sliding median; `window` must be odd.
pub fn median_filter(seq: &AmplitudeSeries, window: usize) -> Result<AmplitudeSeries> {
    if window.is_multiple_of(2) {
        return Err(Error::domain(format!("median window must be odd, got {window}")));
    }
    check_window(window, seq.len())?;
    Ok(seq.map_columns(|c| median_1d(c, window)))
}

/// Sliding arithmetic mean.
pub fn mean_filter(seq: &AmplitudeSeries, window: usize) -> Result<AmplitudeSeries> {
    check_window(window, seq.len())?;
    Ok(seq.map_columns(|c| mean_1d(c, window)))
}

/// Second-order section in direct form II transposed, `a0 == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    /// State that makes a constant input `x0` produce a constant output.
    fn steady_state(&self, x0: f64) -> [f64; 2] {
        let y0 = self.dc_gain() * x0;
        let s2 = self.b[2] * x0 - self.a[2] * y0;
        let s1 = self.b[1] * x0 - self.a[1] * y0 + s2;
        [s1, s2]
    }

    fn run(&self, x: &mut [f64]) {
        let Some(&first) = x.first() else { return };
        let [mut s1, mut s2] = self.steady_state(first);
        for v in x.iter_mut() {
            let xi = *v;
            let y = self.b[0] * xi + s1;
            s1 = self.b[1] * xi - self.a[1] * y + s2;
            s2 = self.b[2] * xi - self.a[2] * y;
            *v = y;
        }
    }

    /// Complex frequency response at normalized angular frequency `w`.
    pub fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        (self.b[0] + self.b[1] * z1 + self.b[2] * z2) / (self.a[0] + self.a[1] * z1 + self.a[2] * z2)
    }
}

/// Digital Butterworth low-pass as cascaded sections.
///
/// Analog prototype poles are pre-warped and mapped with the bilinear
/// transform; all zeros sit at `z = -1`. Each section is scaled to unit DC
/// gain. Odd orders end with a first-order section stored as a biquad.
pub fn butterworth_sections(order: usize, cutoff_hz: f64, sample_rate: f64) -> Result<Vec<Biquad>> {
    if order == 0 {
        return Err(Error::domain("filter order must be at least 1"));
    }
    let nyquist = sample_rate / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
        return Err(Error::domain(format!(
            "cutoff {cutoff_hz} Hz outside (0, {nyquist}) Hz"
        )));
    }
    let fs2 = 2.0 * sample_rate;
    let warped = fs2 * (std::f64::consts::PI * cutoff_hz / sample_rate).tan();
    let n = order as f64;
    let mut sections = Vec::with_capacity(order.div_ceil(2));
    for k in 0..order / 2 {
        let theta = std::f64::consts::PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
        let pole = Complex64::from_polar(warped, theta);
        let zpole = (fs2 + pole) / (fs2 - pole);
        let a1 = -2.0 * zpole.re;
        let a2 = zpole.norm_sqr();
        let gain = (1.0 + a1 + a2) / 4.0;
        sections.push(Biquad {
            b: [gain, 2.0 * gain, gain],
            a: [1.0, a1, a2],
        });
    }
    if order % 2 == 1 {
        let zpole = (fs2 - warped) / (fs2 + warped);
        let gain = (1.0 - zpole) / 2.0;
        sections.push(Biquad {
            b: [gain, gain, 0.0],
            a: [1.0, -zpole, 0.0],
        });
    }
    Ok(sections)
}

fn run_sections(sections: &[Biquad], x: &mut [f64]) {
    for s in sections {
        s.run(x);
    }
}

/// Zero-phase forward-backward filtering of one series.
///
/// The series is extended at both ends by odd reflection and every pass
/// starts from the steady state of its first sample.
pub fn filtfilt(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return x.to_vec();
    }
    let pad = (3 * (2 * sections.len() + 1)).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    run_sections(sections, &mut ext);
    ext.reverse();
    run_sections(sections, &mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

pub fn butterworth_lowpass(seq: &AmplitudeSeries, order: usize, cutoff_hz: f64) -> Result<AmplitudeSeries> {
    let sections = butterworth_sections(order, cutoff_hz, seq.sample_rate())?;
    Ok(seq.map_columns(|c| filtfilt(&sections, c)))
}

/// Median, then mean, then Butterworth, each with its default parameters.
pub fn denoise(seq: &AmplitudeSeries) -> Result<AmplitudeSeries> {
    let len = seq.len();
    let mut out = seq.clone();
    if len >= DEFAULT_MEDIAN_WINDOW {
        out = median_filter(&out, DEFAULT_MEDIAN_WINDOW)?;
        out = mean_filter(&out, DEFAULT_MEAN_WINDOW)?;
    }
    if DEFAULT_BUTTERWORTH_CUTOFF_HZ < seq.sample_rate() / 2.0 {
        out = butterworth_lowpass(&out, DEFAULT_BUTTERWORTH_ORDER, DEFAULT_BUTTERWORTH_CUTOFF_HZ)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Label;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(cols: &[Vec<f64>], rate: f64) -> AmplitudeSeries {
        let len = cols[0].len();
        let mut data = Vec::with_capacity(len * cols.len());
        for t in 0..len {
            for c in cols {
                data.push(c[t]);
            }
        }
        AmplitudeSeries::new(cols.len(), data, rate, Label::None).unwrap()
    }

    fn naive_median(x: &[f64], w: usize) -> Vec<f64> {
        let r = (w / 2) as isize;
        (0..x.len() as isize)
            .map(|t| {
                let mut v: Vec<f64> = (t - r..=t + r)
                    .filter(|&i| i >= 0 && (i as usize) < x.len())
                    .map(|i| x[i as usize])
                    .collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let m = v.len();
                if m % 2 == 1 {
                    v[m / 2]
                } else {
                    (v[m / 2 - 1] + v[m / 2]) / 2.0
                }
            })
            .collect()
    }

    #[test]
    fn constant_series_unchanged() {
        let s = series(&[vec![2.5; 40], vec![1.0; 40]], 100.0);
        assert_eq!(median_filter(&s, 5).unwrap(), s);
        assert_eq!(mean_filter(&s, 5).unwrap(), s);
        let b = butterworth_lowpass(&s, 4, 10.0).unwrap();
        for t in 0..40 {
            assert!((b.row(t)[0] - 2.5).abs() < 1e-6);
        }
    }

    #[test]
    fn median_removes_spike() {
        let mut x = vec![1.0; 21];
        x[10] = 50.0;
        let out = median_filter(&series(&[x], 100.0), 3).unwrap();
        assert!(out.column(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn median_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..57).map(|_| rng.random_range(-3.0..3.0)).collect();
        assert_eq!(median_1d(&x, 5), naive_median(&x, 5));
        assert_eq!(median_1d(&x, 1), x);
    }

    #[test]
    fn mean_alternating_even_window() {
        let x: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let out = mean_1d(&x, 2);
        for v in &out[..19] {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn mean_matches_sliding_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..10.0)).collect();
        let got = mean_1d(&x, 7);
        for t in 0..x.len() {
            let lo = t.saturating_sub(3);
            let hi = (t + 4).min(x.len());
            let want: f64 = x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
            assert!((got[t] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn window_errors() {
        let s = series(&[vec![1.0; 10]], 100.0);
        assert!(median_filter(&s, 4).is_err());
        assert!(median_filter(&s, 0).is_err());
        assert!(mean_filter(&s, 0).is_err());
        assert!(median_filter(&s, 11).is_err());
    }

    #[test]
    fn cutoff_errors() {
        let s = series(&[vec![1.0; 10]], 100.0);
        assert!(butterworth_lowpass(&s, 4, 0.0).is_err());
        assert!(butterworth_lowpass(&s, 4, 50.0).is_err());
        assert!(butterworth_lowpass(&s, 0, 10.0).is_err());
    }

    #[test]
    fn butterworth_magnitude_follows_prototype() {
        // Bilinear mapping: digital f maps to analog tan(pi f / fs).
        for order in 1..=6 {
            let secs = butterworth_sections(order, 10.0, 100.0).unwrap();
            for f in [0.0, 2.0, 10.0, 25.0, 40.0] {
                let w = 2.0 * std::f64::consts::PI * f / 100.0;
                let h: f64 = secs.iter().map(|s| s.response(w).norm()).product();
                let ratio = (std::f64::consts::PI * f / 100.0).tan()
                    / (std::f64::consts::PI * 10.0 / 100.0).tan();
                let want = 1.0 / (1.0 + ratio.powi(2 * order as i32)).sqrt();
                assert!((h - want).abs() < 1e-9, "order {order} f {f}: {h} vs {want}");
            }
        }
    }

    #[test]
    fn filters_are_channel_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..80).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..80).map(|_| rng.random_range(0.0..1.0)).collect();
        let c: Vec<f64> = (0..80).map(|_| rng.random_range(5.0..9.0)).collect();
        let ab = series(&[a.clone(), b], 100.0);
        let ac = series(&[a, c], 100.0);
        for f in [
            |s: &AmplitudeSeries| median_filter(s, 5).unwrap(),
            |s: &AmplitudeSeries| mean_filter(s, 5).unwrap(),
            |s: &AmplitudeSeries| butterworth_lowpass(s, 4, 10.0).unwrap(),
        ] {
            assert_eq!(f(&ab).column(0), f(&ac).column(0));
            assert_eq!(f(&ab).len(), 80);
        }
    }
}
