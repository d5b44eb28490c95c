//! `CSNW` model checkpoints.
//!
//! Little-endian throughout.
//!
//! ```text
//! magic      4 bytes  "CSNW"
//! version    u32      1
//! count      u32      number of named tensors
//! count x    u32 name length, name bytes (UTF-8),
//!            u32 rank, rank x u32 dims, product(dims) x f32
//! optimizer  u8       0 none | 1 adam
//! adam       u64 t, f64 lr, f64 beta1, f64 beta2, f64 eps,
//!            u32 n, n x (m tensor, v tensor) as rank/dims/data
//! ```
//!
//! Tensors are written in visitor order: parameters and batch-norm buffers
//! of the model, each with its dotted path as the name.

use std::path::Path;

use super::layer::Slots;
use super::optim::AdamState;
use super::tensor::Tensor;
use crate::binio::Reader;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CSNW";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor<f32>)>,
    pub optimizer: Option<AdamState<f32>>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::domain(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor<f32>) -> Result<()> {
    put_u32(out, t.shape().len())?;
    for &d in t.shape() {
        put_u32(out, d)?;
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

fn get_tensor(r: &mut Reader) -> Result<Tensor<f32>> {
    let rank = r.u32("rank")? as usize;
    let at = r.pos();
    let shape = (0..rank).map(|_| r.u32("dim").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|n| n.checked_mul(4).is_some_and(|b| b <= r.remaining()))
        .ok_or_else(|| r.err(at, format!("tensor of shape {shape:?} exceeds the remaining bytes")))?;
    let data = (0..n).map(|_| r.f32("tensor data")).collect::<Result<Vec<_>>>()?;
    Tensor::new(&shape, data)
}

impl Checkpoint {
    /// Snapshot of a model's parameters and buffers.
    pub fn capture(model: Slots<'_, f32>, optimizer: Option<&AdamState<f32>>) -> Self {
        let tensors = model.into_iter().map(|(name, s)| (name, s.tensor().clone())).collect();
        Self {
            tensors,
            optimizer: optimizer.cloned(),
        }
    }

    /// Copies tensors into `model`, which must have the same names and
    /// shapes in the same order.
    pub fn restore(&self, model: Slots<'_, f32>) -> Result<()> {
        let mut targets = model;
        if targets.len() != self.tensors.len() {
            return Err(Error::domain(format!(
                "checkpoint has {} tensors, model has {}",
                self.tensors.len(),
                targets.len()
            )));
        }
        for ((name, slot), (saved_name, saved)) in targets.iter_mut().zip(&self.tensors) {
            if name != saved_name {
                return Err(Error::domain(format!("checkpoint tensor {saved_name} where model has {name}")));
            }
            let t = slot.tensor_mut();
            if t.shape() != saved.shape() {
                return Err(Error::Shape {
                    op: "checkpoint restore",
                    left: t.shape().to_vec(),
                    right: saved.shape().to_vec(),
                });
            }
            t.data_mut().copy_from_slice(saved.data());
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_u32(&mut out, self.tensors.len())?;
        for (name, t) in &self.tensors {
            put_u32(&mut out, name.len())?;
            out.extend_from_slice(name.as_bytes());
            put_tensor(&mut out, t)?;
        }
        match &self.optimizer {
            None => out.push(0),
            Some(s) => {
                out.push(1);
                out.extend_from_slice(&s.t.to_le_bytes());
                for v in [s.lr, s.beta1, s.beta2, s.eps] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                put_u32(&mut out, s.m.len())?;
                for (m, v) in s.m.iter().zip(&s.v) {
                    put_tensor(&mut out, m)?;
                    put_tensor(&mut out, v)?;
                }
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4, "magic")? != MAGIC {
            return Err(r.err(0, "bad magic, expected \"CSNW\""));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(r.err(4, format!("unsupported checkpoint version {version}")));
        }
        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let len = r.u32("name length")? as usize;
            let at = r.pos();
            let name = std::str::from_utf8(r.take(len, "name")?)
                .map_err(|_| r.err(at, "tensor name is not UTF-8"))?
                .to_string();
            tensors.push((name, get_tensor(&mut r)?));
        }
        let kind_at = r.pos();
        let optimizer = match r.u8("optimizer kind")? {
            0 => None,
            1 => {
                let t = r.u64("adam step")?;
                let mut s = AdamState::new(r.f64("lr")?);
                s.t = t;
                s.beta1 = r.f64("beta1")?;
                s.beta2 = r.f64("beta2")?;
                s.eps = r.f64("eps")?;
                let n = r.u32("moment count")? as usize;
                for _ in 0..n {
                    s.m.push(get_tensor(&mut r)?);
                    s.v.push(get_tensor(&mut r)?);
                }
                Some(s)
            }
            k => return Err(r.err(kind_at, format!("unknown optimizer kind {k}"))),
        };
        if r.remaining() != 0 {
            return Err(r.err(r.pos(), "trailing bytes after checkpoint"));
        }
        Ok(Self { tensors, optimizer })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{slots, BasicBlock, Layer, Mode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut block = BasicBlock::<f32>::new(2, 4, 2, &mut rng);
        block.forward(&Tensor::full(&[2, 2, 5, 5], 0.3), Mode::Train).unwrap();
        let mut opt = AdamState::new(1e-3);
        opt.step(&mut crate::nn::params_mut(&mut block)).unwrap();
        let ck = Checkpoint::capture(slots(&mut block), Some(&opt));
        let bytes = ck.encode().unwrap();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.encode().unwrap(), bytes);

        let mut fresh = BasicBlock::<f32>::new(2, 4, 2, &mut ChaCha8Rng::seed_from_u64(99));
        back.restore(slots(&mut fresh)).unwrap();
        assert_eq!(Checkpoint::capture(slots(&mut fresh), Some(&opt)), ck);
    }

    #[test]
    fn rejects_corruption() {
        let ck = Checkpoint {
            tensors: vec![("w".into(), Tensor::full(&[2, 3], 1.5))],
            optimizer: None,
        };
        let bytes = ck.encode().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bad), Err(Error::Parse { offset: 0, .. })));
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::decode(&extra).is_err());
    }

    #[test]
    fn restore_checks_names_and_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = BasicBlock::<f32>::new(2, 4, 1, &mut rng);
        let mut b = BasicBlock::<f32>::new(2, 8, 1, &mut rng);
        let ck = Checkpoint::capture(slots(&mut a), None);
        assert!(ck.restore(slots(&mut b)).is_err());
    }
}
