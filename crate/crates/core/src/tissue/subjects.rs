//! Ground-truth biometrics of the 30 reference subjects.
//!
//! Column order of `data/subjects_v1.csv`:
//! `id, sex, fat_rate, muscle_rate, water_rate, bone_rate, height_in, weight_lb`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) const SUBJECTS_CSV: &str = include_str!("../../data/subjects_v1.csv");

/// Names of the four regressed biometrics, in head output order.
pub const BIOMETRIC_NAMES: [&str; 4] = ["fat_rate", "muscle_rate", "water_rate", "bone_rate"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub id: u32,
    pub sex: String,
    pub fat_rate: f64,
    pub muscle_rate: f64,
    pub water_rate: f64,
    pub bone_rate: f64,
    #[serde(rename = "height_in")]
    pub height: f64,
    #[serde(rename = "weight_lb")]
    pub weight: f64,
}

impl SubjectProfile {
    /// `[fat, muscle, water, bone]` rates in percent.
    pub fn biometrics(&self) -> [f64; 4] {
        [self.fat_rate, self.muscle_rate, self.water_rate, self.bone_rate]
    }

    fn validate(&self) -> Result<()> {
        let in_range = |v: f64| v > 0.0 && v < 100.0;
        if !in_range(self.fat_rate) || !in_range(self.muscle_rate) {
            return Err(Error::Config(format!(
                "subject {}: fat/muscle rates must lie in (0, 100)",
                self.id
            )));
        }
        Ok(())
    }
}

pub fn subjects_from_csv<R: std::io::Read>(reader: R) -> Result<Vec<SubjectProfile>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let p: SubjectProfile = row?;
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

/// The bundled 30-subject table.
pub fn bundled_subjects() -> Vec<SubjectProfile> {
    subjects_from_csv(SUBJECTS_CSV.as_bytes()).expect("bundled subject table is well formed")
}

/// Look up a bundled subject by its 1-based id.
pub fn subject(id: u32) -> Option<SubjectProfile> {
    bundled_subjects().into_iter().find(|s| s.id == id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirty_rows() {
        let s = bundled_subjects();
        assert_eq!(s.len(), 30);
        for (i, p) in s.iter().enumerate() {
            assert_eq!(p.id as usize, i + 1);
        }
    }

    #[test]
    fn spot_check_rows() {
        let s1 = subject(1).unwrap();
        assert_eq!(s1.biometrics(), [5.0, 89.7, 65.1, 13.0]);
        assert_eq!((s1.height, s1.weight), (70.5, 113.8));
        assert_eq!(s1.sex, "male");
        let s22 = subject(22).unwrap();
        assert_eq!(s22.biometrics(), [30.9, 65.2, 49.2, 1.6]);
        assert_eq!(s22.sex, "female");
        let s30 = subject(30).unwrap();
        assert_eq!(s30.biometrics(), [22.3, 73.6, 53.2, 2.4]);
    }
}
