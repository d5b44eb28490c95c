//! Layered-tissue propagation model.
//!
//! A body is a stack of dielectric layers (skin, fat, muscle). A propagation
//! path crosses some of those layers plus a free-space leg of length `d_0`.
//! Each medium delays the wave by `d * sqrt(mu * eps)` and scales its
//! amplitude by a decay coefficient; the received signal is the product of
//! all of them applied to the transmitted complex amplitude.

mod dielectric;
mod subjects;
mod synth;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dielectric::{Band, Dielectric, DielectricTable, TissueKind};
pub use subjects::{bundled_subjects, subject, subjects_from_csv, SubjectProfile, BIOMETRIC_NAMES};
pub use synth::{
    body_component_rms, noise_sigma_for_snr, subcarrier_grid, synth_csi, synth_channel, Geometry,
};

/// Speed of light in vacuum, m/s.
pub const C0: f64 = 299_792_458.0;
/// Vacuum permeability, H/m.
pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;
/// Vacuum permittivity, F/m.
pub const EPS0: f64 = 1.0 / (MU0 * C0 * C0);

const TAU: f64 = std::f64::consts::TAU;

/// A homogeneous medium characterised by relative constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Medium {
    pub name: String,
    pub rel_permittivity: f64,
    /// S/m.
    pub conductivity: f64,
    pub rel_permeability: f64,
}

impl Medium {
    pub fn air() -> Self {
        Medium {
            name: "air".into(),
            rel_permittivity: 1.0,
            conductivity: 0.0,
            rel_permeability: 1.0,
        }
    }

    pub fn new(name: impl Into<String>, rel_permittivity: f64, conductivity: f64) -> Result<Self> {
        Self::with_permeability(name, rel_permittivity, conductivity, 1.0)
    }

    pub fn with_permeability(
        name: impl Into<String>,
        rel_permittivity: f64,
        conductivity: f64,
        rel_permeability: f64,
    ) -> Result<Self> {
        let name = name.into();
        if !(rel_permittivity >= 1.0) {
            return Err(Error::domain(format!(
                "{name}: relative permittivity {rel_permittivity} < 1"
            )));
        }
        if !(conductivity >= 0.0) {
            return Err(Error::domain(format!("{name}: negative conductivity {conductivity}")));
        }
        if !(rel_permeability > 0.0) {
            return Err(Error::domain(format!(
                "{name}: relative permeability must be positive"
            )));
        }
        Ok(Medium {
            name,
            rel_permittivity,
            conductivity,
            rel_permeability,
        })
    }

    pub fn from_table(table: &DielectricTable, kind: TissueKind, band: Band) -> Self {
        let d = table.lookup(kind, band);
        Medium {
            name: kind.label().into(),
            rel_permittivity: d.rel_permittivity,
            conductivity: d.conductivity,
            rel_permeability: 1.0,
        }
    }

    /// `sqrt(mu * eps)` with absolute constants, i.e. the inverse wave speed.
    pub fn slowness(&self) -> f64 {
        (self.rel_permeability * self.rel_permittivity).sqrt() / C0
    }

    /// Low-loss attenuation constant `alpha = (sigma / 2) * sqrt(mu / eps)`, Np/m.
    pub fn attenuation_constant(&self) -> f64 {
        let mu = MU0 * self.rel_permeability;
        let eps = EPS0 * self.rel_permittivity;
        0.5 * self.conductivity * (mu / eps).sqrt()
    }
}

/// One tissue layer of finite thickness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TissueLayer {
    pub medium: Medium,
    /// Metres.
    pub thickness: f64,
}

impl TissueLayer {
    pub fn new(medium: Medium, thickness: f64) -> Result<Self> {
        if !(thickness > 0.0) || !thickness.is_finite() {
            return Err(Error::domain(format!(
                "{}: thickness must be positive, got {thickness}",
                medium.name
            )));
        }
        Ok(TissueLayer { medium, thickness })
    }

    pub fn name(&self) -> &str {
        &self.medium.name
    }
}

/// Wave speed in the layer's medium.
pub fn wave_speed(layer: &TissueLayer) -> f64 {
    medium_speed(&layer.medium)
}

pub fn medium_speed(medium: &Medium) -> f64 {
    C0 / (medium.rel_permeability * medium.rel_permittivity).sqrt()
}

/// Amplitude decay `exp(-alpha * d)` across the layer's thickness.
pub fn attenuation_coefficient(layer: &TissueLayer) -> f64 {
    segment_decay(&layer.medium, layer.thickness)
}

fn segment_decay(medium: &Medium, distance: f64) -> f64 {
    (-medium.attenuation_constant() * distance).exp()
}

/// Free-space amplitude factor `lambda / (4 pi d)`, clamped to 1 in the near field.
pub fn free_space_factor(distance: f64, freq: f64) -> f64 {
    let lambda = C0 / freq;
    (lambda / (2.0 * TAU * distance)).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub medium: Medium,
    pub distance: f64,
}

/// Ordered media crossed by one ray, plus the free-space leg `d_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationPath {
    segments: Vec<Segment>,
    air_distance: f64,
}

impl PropagationPath {
    pub fn new(segments: Vec<Segment>, air_distance: f64) -> Result<Self> {
        if !(air_distance > 0.0) || !air_distance.is_finite() {
            return Err(Error::domain(format!(
                "air distance must be positive, got {air_distance}"
            )));
        }
        if let Some(bad) = segments.iter().find(|s| !(s.distance > 0.0) || !s.distance.is_finite()) {
            return Err(Error::domain(format!(
                "segment `{}` has non-positive distance {}",
                bad.medium.name, bad.distance
            )));
        }
        Ok(Self {
            segments,
            air_distance,
        })
    }

    pub fn air_only(air_distance: f64) -> Result<Self> {
        Self::new(Vec::new(), air_distance)
    }

    /// Path crossing every layer of `body` once.
    pub fn through_body(body: &BodyModel, air_distance: f64) -> Result<Self> {
        let segments = body
            .layers()
            .iter()
            .map(|l| Segment {
                medium: l.medium.clone(),
                distance: l.thickness,
            })
            .collect();
        Self::new(segments, air_distance)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn air_distance(&self) -> f64 {
        self.air_distance
    }

    /// Concatenation: segments appended, free-space legs summed.
    pub fn concat(&self, other: &PropagationPath) -> PropagationPath {
        let mut segments = self.segments.clone();
        segments.extend(other.segments.iter().cloned());
        PropagationPath {
            segments,
            air_distance: self.air_distance + other.air_distance,
        }
    }

    fn medium_delay(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.distance * s.medium.slowness())
            .sum()
    }

    fn medium_decay(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| segment_decay(&s.medium, s.distance))
            .product()
    }
}

/// Total propagation delay in seconds, air leg included.
pub fn time_delay(path: &PropagationPath) -> f64 {
    path.medium_delay() + path.air_distance / C0
}

/// Received amplitude `A * c_0 * prod(c_i)` at carrier `freq`.
pub fn power_decay(path: &PropagationPath, amplitude: f64, freq: f64) -> f64 {
    amplitude * free_space_factor(path.air_distance, freq) * path.medium_decay()
}

/// Frequency shift seen by a receiver when the reflector moves at `v_o`.
///
/// `approaching` selects the sign of the shift.
pub fn doppler_shift(carrier_freq: f64, v_o: f64, v: f64, approaching: bool) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::domain(format!("wave speed must be positive, got {v}")));
    }
    let shift = v_o / v * carrier_freq;
    Ok(if approaching { shift } else { -shift })
}

/// Phase accumulated over `d` metres, wrapped to `[0, 2 pi)`.
pub fn phase_variation(d: f64, wavelength: f64) -> Result<f64> {
    if !(wavelength > 0.0) {
        return Err(Error::domain(format!(
            "wavelength must be positive, got {wavelength}"
        )));
    }
    let wrapped = (TAU * d / wavelength).rem_euclid(TAU);
    Ok(if wrapped >= TAU { 0.0 } else { wrapped })
}

/// Complex baseband output of `path` for input `x` at carrier `freq`.
pub fn received_signal(path: &PropagationPath, x: Complex64, freq: f64) -> Result<Complex64> {
    if !(freq > 0.0) {
        return Err(Error::domain(format!("frequency must be positive, got {freq}")));
    }
    let body = Complex64::from_polar(path.medium_decay(), -TAU * freq * path.medium_delay());
    let air = Complex64::from_polar(
        free_space_factor(path.air_distance, freq),
        -TAU * freq * path.air_distance / C0,
    );
    Ok(body * air * x)
}

/// Concentric layers of a body, outermost first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyModel {
    layers: Vec<TissueLayer>,
}

impl BodyModel {
    pub fn new(layers: Vec<TissueLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::domain("body model needs at least one layer"));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[TissueLayer] {
        &self.layers
    }

    pub fn total_thickness(&self) -> f64 {
        self.layers.iter().map(|l| l.thickness).sum()
    }
}

pub const SKIN_THICKNESS_M: f64 = 0.002;
pub const FAT_BASE_M: f64 = 0.005;
pub const FAT_BASE_RATE: f64 = 20.0;
pub const MUSCLE_BASE_M: f64 = 0.030;
pub const MUSCLE_BASE_RATE: f64 = 78.0;

/// Three-layer cylinder for a subject.
///
/// Skin is fixed at 2 mm, fat scales as `5 mm * fat / 20` and muscle as
/// `30 mm * muscle / 78`. Skin is dry skin, fat is the non-infiltrated row.
pub fn subject_to_body(profile: &SubjectProfile, band: Band) -> Result<BodyModel> {
    subject_to_body_with(profile, band, &DielectricTable::bundled())
}

pub fn subject_to_body_with(
    profile: &SubjectProfile,
    band: Band,
    table: &DielectricTable,
) -> Result<BodyModel> {
    let skin = TissueLayer::new(
        Medium::from_table(table, TissueKind::SkinDry, band),
        SKIN_THICKNESS_M,
    )?;
    let fat = TissueLayer::new(
        Medium::from_table(table, TissueKind::FatNotInfiltrated, band),
        FAT_BASE_M * profile.fat_rate / FAT_BASE_RATE,
    )?;
    let muscle = TissueLayer::new(
        Medium::from_table(table, TissueKind::Muscle, band),
        MUSCLE_BASE_M * profile.muscle_rate / MUSCLE_BASE_RATE,
    )?;
    BodyModel::new(vec![skin, fat, muscle])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn table_layer(kind: TissueKind, band: Band, thickness: f64) -> TissueLayer {
        TissueLayer::new(
            Medium::from_table(&DielectricTable::bundled(), kind, band),
            thickness,
        )
        .unwrap()
    }

    fn seg(kind: TissueKind, band: Band, d: f64) -> Segment {
        Segment {
            medium: Medium::from_table(&DielectricTable::bundled(), kind, band),
            distance: d,
        }
    }

    #[test]
    fn wave_speed_examples() {
        let air = TissueLayer::new(Medium::air(), 1.0).unwrap();
        assert_eq!(wave_speed(&air), C0);
        let skin = table_layer(TissueKind::SkinDry, Band::Ghz5, 0.002);
        // 299792458 / sqrt(33.11)
        assert_relative_eq!(wave_speed(&skin), 5.210_040_7e7, max_relative = 1e-6);
        let muscle = table_layer(TissueKind::Muscle, Band::Ghz2_4, 0.01);
        assert_relative_eq!(wave_speed(&muscle), 4.234_627_1e7, max_relative = 1e-6);
        // sqrt(mu0 eps0) is 1/c0
        assert_relative_eq!(1.0 / (MU0 * EPS0).sqrt(), C0, max_relative = 1e-12);
    }

    #[test]
    fn time_delay_examples() {
        let p = PropagationPath::air_only(3.0).unwrap();
        assert_relative_eq!(time_delay(&p), 1.000_692_286e-8, max_relative = 1e-9);

        let s = seg(TissueKind::Muscle, Band::Ghz5, 0.01);
        let one = PropagationPath::new(vec![s.clone()], 1.0).unwrap();
        let two = PropagationPath::new(vec![s.clone(), s], 1.0).unwrap();
        let body_one = time_delay(&one) - 1.0 / C0;
        let body_two = time_delay(&two) - 1.0 / C0;
        assert_relative_eq!(body_two, 2.0 * body_one, max_relative = 1e-12);

        // 2 mm dry skin @5GHz + 10 mm non-infiltrated fat @5GHz + 1 m air
        let p = PropagationPath::new(
            vec![
                seg(TissueKind::SkinDry, Band::Ghz5, 0.002),
                seg(TissueKind::FatNotInfiltrated, Band::Ghz5, 0.010),
            ],
            1.0,
        )
        .unwrap();
        let expected = 0.002 * 33.11f64.sqrt() / C0 + 0.010 * 5.59f64.sqrt() / C0 + 1.0 / C0;
        assert_relative_eq!(time_delay(&p), expected, max_relative = 1e-12);
        assert_relative_eq!(time_delay(&p), 3.452_893_5e-9, max_relative = 1e-6);
    }

    #[test]
    fn attenuation_examples() {
        let lossless = TissueLayer::new(Medium::new("lossless", 4.0, 0.0).unwrap(), 5.0).unwrap();
        assert_eq!(attenuation_coefficient(&lossless), 1.0);
        let thin = table_layer(TissueKind::Muscle, Band::Ghz5, 1e-12);
        assert_relative_eq!(attenuation_coefficient(&thin), 1.0, epsilon = 1e-9);
        let m = table_layer(TissueKind::Muscle, Band::Ghz5, 0.01);
        // alpha = 5.62/2 * sqrt(mu0 / (44.67 eps0)) = 158.42 Np/m
        let alpha = 5.62 / 2.0 * (MU0 / (44.67 * EPS0)).sqrt();
        assert_relative_eq!(alpha, 158.390_42, max_relative = 1e-6);
        assert_relative_eq!(attenuation_coefficient(&m), (-alpha * 0.01).exp(), max_relative = 1e-12);
        assert_relative_eq!(attenuation_coefficient(&m), 0.205_172_5, max_relative = 1e-6);
    }

    #[test]
    fn power_decay_examples() {
        let f = 5e9;
        let lambda = C0 / f;
        // near field clamp: c_0 == 1
        let p = PropagationPath::air_only(lambda / (4.0 * PI) * 0.5).unwrap();
        assert_eq!(power_decay(&p, 2.5, f), 2.5);
        assert_eq!(power_decay(&p, 0.0, f), 0.0);
        let base = PropagationPath::air_only(2.0).unwrap();
        let lossy = PropagationPath::new(vec![seg(TissueKind::FatNotInfiltrated, Band::Ghz5, 0.003)], 2.0).unwrap();
        assert!(power_decay(&lossy, 1.0, f) < power_decay(&base, 1.0, f));
    }

    #[test]
    fn doppler_examples() {
        let d = doppler_shift(5e9, 1.0, C0, true).unwrap();
        assert_relative_eq!(d, 16.678_2, max_relative = 1e-5);
        assert!((16.5..=17.1).contains(&d));
        assert_eq!(doppler_shift(5e9, 0.0, C0, true).unwrap(), 0.0);
        assert_relative_eq!(doppler_shift(2.4e9, 1.0, C0, true).unwrap(), 8.005_5, max_relative = 1e-4);
        assert_relative_eq!(doppler_shift(2.4e9, 1.0, C0, false).unwrap(), -8.005_5, max_relative = 1e-4);
        assert!(doppler_shift(5e9, 1.0, 0.0, true).is_err());
        assert!(doppler_shift(5e9, 1.0, -1.0, true).is_err());
    }

    #[test]
    fn phase_variation_examples() {
        let lambda = 0.06;
        assert!(phase_variation(lambda, lambda).unwrap().abs() < 1e-12);
        assert_relative_eq!(phase_variation(lambda / 2.0, lambda).unwrap(), PI, max_relative = 1e-12);
        assert_relative_eq!(phase_variation(2.75 * lambda, lambda).unwrap(), 1.5 * PI, max_relative = 1e-12);
        assert!(phase_variation(1.0, 0.0).is_err());
        assert!(phase_variation(1.0, -1.0).is_err());
    }

    #[test]
    fn received_signal_lossless_integer_wavelengths() {
        let f = 2.4e9;
        let lambda = C0 / f;
        let p = PropagationPath::air_only(40.0 * lambda).unwrap();
        let x = Complex64::new(0.3, -0.7);
        let y = received_signal(&p, x, f).unwrap();
        let c0 = free_space_factor(40.0 * lambda, f);
        assert_relative_eq!(y.re, (x * c0).re, epsilon = 1e-12);
        assert_relative_eq!(y.im, (x * c0).im, epsilon = 1e-12);
        assert!(received_signal(&p, x, 0.0).is_err());
    }

    #[test]
    fn subject_mapping() {
        let s1 = subject(1).unwrap();
        let body = subject_to_body(&s1, Band::Ghz5).unwrap();
        let l = body.layers();
        assert_eq!(l.len(), 3);
        assert_relative_eq!(l[0].thickness, 0.002);
        assert_relative_eq!(l[1].thickness, 0.00125, max_relative = 1e-12);
        assert_relative_eq!(l[2].thickness, 0.0345, max_relative = 1e-12);
        assert_eq!(l[2].medium.rel_permittivity, 44.67);

        let mut twin = s1.clone();
        twin.id = 99;
        assert_eq!(subject_to_body(&twin, Band::Ghz5).unwrap(), body);

        let mut fatter = s1.clone();
        fatter.fat_rate += 1.0;
        let b2 = subject_to_body(&fatter, Band::Ghz5).unwrap();
        assert!(b2.layers()[1].thickness > l[1].thickness);
    }

    #[test]
    fn invalid_layers_rejected() {
        assert!(Medium::new("x", 0.5, 0.0).is_err());
        assert!(Medium::new("x", 2.0, -0.1).is_err());
        assert!(TissueLayer::new(Medium::air(), 0.0).is_err());
        assert!(BodyModel::new(vec![]).is_err());
        assert!(PropagationPath::air_only(0.0).is_err());
    }

    fn arb_segment() -> impl Strategy<Value = Segment> {
        (0usize..7, any::<bool>(), 1e-4f64..0.05).prop_map(|(k, hi, d)| {
            let band = if hi { Band::Ghz5 } else { Band::Ghz2_4 };
            seg(TissueKind::ALL[k], band, d)
        })
    }

    fn arb_path() -> impl Strategy<Value = PropagationPath> {
        (prop::collection::vec(arb_segment(), 0..5), 0.1f64..10.0)
            .prop_map(|(s, d0)| PropagationPath::new(s, d0).unwrap())
    }

    proptest! {
        #[test]
        fn delay_additive_over_concat(a in arb_path(), b in arb_path()) {
            let joined = a.concat(&b);
            let lhs = time_delay(&joined);
            let rhs = time_delay(&a) + time_delay(&b);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        }

        #[test]
        fn medium_decay_multiplicative(a in arb_path(), b in arb_path()) {
            let joined = a.concat(&b);
            let lhs = joined.medium_decay();
            let rhs = a.medium_decay() * b.medium_decay();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
        }

        #[test]
        fn decay_bounded(p in arb_path(), amp in 0.0f64..10.0, f in 1e9f64..6e9) {
            let out = power_decay(&p, amp, f);
            prop_assert!(out >= 0.0 && out <= amp);
        }

        #[test]
        fn delay_increases_with_thickness(p in arb_path(), extra in 1e-4f64..0.01) {
            prop_assume!(!p.segments().is_empty());
            let mut segs = p.segments().to_vec();
            segs[0].distance += extra;
            let longer = PropagationPath::new(segs, p.air_distance()).unwrap();
            prop_assert!(time_delay(&longer) > time_delay(&p));
        }

        #[test]
        fn phase_in_range(d in -100.0f64..100.0, lambda in 1e-3f64..1.0) {
            let ph = phase_variation(d, lambda).unwrap();
            prop_assert!((0.0..TAU).contains(&ph));
        }
    }
}
