//! TOML sidecar written next to a checkpoint.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{NetConfig, TrainConfig};
use super::model::Normalization;
use crate::error::{Error, Result};
use crate::pipeline::{Instance, Label};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    /// SHA-256 of the training instances, see [`hash_instances`].
    pub data_hash: String,
    pub n_train: usize,
    pub normalization: Normalization,
    pub net: NetConfig,
    pub train: TrainConfig,
}

impl Manifest {
    pub fn new(net: &NetConfig, train: &TrainConfig, normalization: &Normalization, data: &[Instance]) -> Self {
        Self {
            schema_version: MANIFEST_VERSION,
            seed: train.seed,
            data_hash: hash_instances(data),
            n_train: data.len(),
            normalization: normalization.clone(),
            net: net.clone(),
            train: train.clone(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("manifest: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        if m.schema_version != MANIFEST_VERSION {
            return Err(Error::Config(format!("unsupported manifest schema {}", m.schema_version)));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_toml(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Hex SHA-256 over every instance's amplitudes (f32 little-endian) and
/// label, in order.
pub fn hash_instances(data: &[Instance]) -> String {
    let mut h = Sha256::new();
    for inst in data {
        for a in &inst.amplitude {
            h.update(a.to_le_bytes());
        }
        match &inst.label {
            Label::None => h.update([0u8]),
            Label::Class(c) => {
                h.update([1u8]);
                h.update(c.to_le_bytes());
            }
            Label::Biometrics(b) => {
                h.update([2u8]);
                b.iter().for_each(|v| h.update(v.to_le_bytes()));
            }
            Label::Subject { class, biometrics } => {
                h.update([3u8]);
                h.update(class.to_le_bytes());
                biometrics.iter().for_each(|v| h.update(v.to_le_bytes()));
            }
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_model, Scale, TaskSelection, Variant};

    #[test]
    fn round_trip_and_hash() {
        let net = NetConfig::new(TaskSelection::Joint, Variant::Tc, Scale::Desk);
        let m = build_model(&net, 0).unwrap();
        let data = vec![Instance::new(vec![1.0; 30], Label::Class(3)).unwrap()];
        let man = Manifest::new(&net, &TrainConfig::default(), m.normalization(), &data);
        let back = Manifest::from_toml(&man.to_toml().unwrap()).unwrap();
        assert_eq!(back, man);
        assert_eq!(man.data_hash.len(), 64);
        let other = vec![Instance::new(vec![1.0; 30], Label::Class(4)).unwrap()];
        assert_ne!(hash_instances(&other), man.data_hash);
    }
}
