//! Dielectric constants of human tissue at the two WiFi bands.
//!
//! The bundled table lives in `data/dielectric_v1.csv` with the column order
//! `tissue, band_ghz, rel_permittivity, conductivity_s_per_m`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) const DIELECTRIC_CSV: &str = include_str!("../../data/dielectric_v1.csv");

/// WiFi frequency band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Band {
    #[serde(rename = "2.4GHz")]
    Ghz2_4,
    #[serde(rename = "5GHz")]
    Ghz5,
}

impl Band {
    /// Nominal centre frequency used when a caller needs a single carrier.
    pub fn center_hz(self) -> f64 {
        match self {
            Band::Ghz2_4 => 2.437e9,
            Band::Ghz5 => 5.32e9,
        }
    }

    fn from_ghz_label(s: &str) -> Option<Band> {
        match s.trim() {
            "2.4" => Some(Band::Ghz2_4),
            "5" | "5.0" => Some(Band::Ghz5),
            _ => None,
        }
    }
}

impl FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "2.4" | "2.4ghz" => Ok(Band::Ghz2_4),
            "5" | "5ghz" => Ok(Band::Ghz5),
            other => Err(Error::Config(format!("unknown band `{other}`"))),
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Band::Ghz2_4 => f.write_str("2.4GHz"),
            Band::Ghz5 => f.write_str("5GHz"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TissueKind {
    SkinDry,
    SkinWet,
    FatAverageInfiltrated,
    FatNotInfiltrated,
    Muscle,
    BoneCortical,
    BoneCancellous,
}

impl TissueKind {
    pub const ALL: [TissueKind; 7] = [
        TissueKind::SkinDry,
        TissueKind::SkinWet,
        TissueKind::FatAverageInfiltrated,
        TissueKind::FatNotInfiltrated,
        TissueKind::Muscle,
        TissueKind::BoneCortical,
        TissueKind::BoneCancellous,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TissueKind::SkinDry => "skin_dry",
            TissueKind::SkinWet => "skin_wet",
            TissueKind::FatAverageInfiltrated => "fat_average_infiltrated",
            TissueKind::FatNotInfiltrated => "fat_not_infiltrated",
            TissueKind::Muscle => "muscle",
            TissueKind::BoneCortical => "bone_cortical",
            TissueKind::BoneCancellous => "bone_cancellous",
        }
    }
}

impl FromStr for TissueKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TissueKind::ALL
            .into_iter()
            .find(|k| k.label() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown tissue `{s}`")))
    }
}

/// Relative permittivity and conductivity (S/m) of one tissue at one band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dielectric {
    pub rel_permittivity: f64,
    pub conductivity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DielectricTable {
    entries: BTreeMap<(TissueKind, Band), Dielectric>,
}

#[derive(Deserialize)]
struct Row {
    tissue: String,
    band_ghz: String,
    rel_permittivity: f64,
    conductivity_s_per_m: f64,
}

impl DielectricTable {
    /// The 14-row table shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_csv(DIELECTRIC_CSV.as_bytes()).expect("bundled dielectric table is well formed")
    }

    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut entries = BTreeMap::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            let kind: TissueKind = row.tissue.parse()?;
            let band = Band::from_ghz_label(&row.band_ghz)
                .ok_or_else(|| Error::Config(format!("unknown band `{}`", row.band_ghz)))?;
            if row.rel_permittivity < 1.0 || row.conductivity_s_per_m < 0.0 {
                return Err(Error::Config(format!(
                    "non-physical dielectric row for {}@{band}",
                    kind.label()
                )));
            }
            entries.insert(
                (kind, band),
                Dielectric {
                    rel_permittivity: row.rel_permittivity,
                    conductivity: row.conductivity_s_per_m,
                },
            );
        }
        Ok(Self { entries })
    }

    pub fn get(&self, kind: TissueKind, band: Band) -> Option<Dielectric> {
        self.entries.get(&(kind, band)).copied()
    }

    /// Lookup for pairs the bundled table always carries.
    pub fn lookup(&self, kind: TissueKind, band: Band) -> Dielectric {
        self.get(kind, band)
            .unwrap_or_else(|| panic!("no dielectric entry for {}@{band}", kind.label()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TissueKind, Band, Dielectric)> + '_ {
        self.entries.iter().map(|(&(k, b), &d)| (k, b, d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table_has_every_row() {
        let table = DielectricTable::bundled();
        assert_eq!(table.len(), 14);
        for kind in TissueKind::ALL {
            for band in [Band::Ghz2_4, Band::Ghz5] {
                assert!(table.get(kind, band).is_some(), "{kind:?}@{band}");
            }
        }
    }

    #[test]
    fn bundled_values() {
        let t = DielectricTable::bundled();
        let expect = [
            (TissueKind::SkinDry, Band::Ghz2_4, 39.81, 1.78),
            (TissueKind::SkinDry, Band::Ghz5, 33.11, 3.98),
            (TissueKind::SkinWet, Band::Ghz2_4, 39.81, 2.24),
            (TissueKind::SkinWet, Band::Ghz5, 35.48, 5.62),
            (TissueKind::FatAverageInfiltrated, Band::Ghz2_4, 10.23, 0.32),
            (TissueKind::FatAverageInfiltrated, Band::Ghz5, 8.91, 0.71),
            (TissueKind::FatNotInfiltrated, Band::Ghz2_4, 5.62, 0.1),
            (TissueKind::FatNotInfiltrated, Band::Ghz5, 5.59, 0.32),
            (TissueKind::Muscle, Band::Ghz2_4, 50.12, 2.51),
            (TissueKind::Muscle, Band::Ghz5, 44.67, 5.62),
            (TissueKind::BoneCortical, Band::Ghz2_4, 11.22, 0.56),
            (TissueKind::BoneCortical, Band::Ghz5, 8.91, 1.12),
            (TissueKind::BoneCancellous, Band::Ghz2_4, 15.85, 0.71),
            (TissueKind::BoneCancellous, Band::Ghz5, 14.13, 1.41),
        ];
        for (k, b, eps, sigma) in expect {
            let d = t.lookup(k, b);
            assert_eq!(d.rel_permittivity, eps);
            assert_eq!(d.conductivity, sigma);
        }
    }

    #[test]
    fn rejects_unknown_tissue() {
        let csv = "tissue,band_ghz,rel_permittivity,conductivity_s_per_m\nliver,5,1,1\n";
        assert!(DielectricTable::from_csv(csv.as_bytes()).is_err());
    }
}
