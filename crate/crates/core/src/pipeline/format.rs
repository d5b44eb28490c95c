//! `CSI1` binary dataset format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes  "CSI1"
//! n_sa         u32      number of frames
//! n_sc         u32
//! n_tx         u32
//! n_rx         u32
//! sample_rate  f64      Hz
//! label_kind   u8       0 none | 1 class | 2 biometrics | 3 subject
//! label        payload  1: u32 class
//!                       2: u32 count, count x f64
//!                       3: u32 class, u32 count, count x f64
//! values       n_sa * n_sc * n_tx * n_rx pairs of f32 (re, im),
//!              frame-major, then subcarrier, tx, rx
//! ```
//!
//! Frame timestamps are positional: frame `i` is read back with
//! `timestamp_index == i`.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex32;

use super::{CsiFrame, CsiSequence, CsiShape, Label};
use crate::binio::Reader;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CSI1";

const LABEL_NONE: u8 = 0;
const LABEL_CLASS: u8 = 1;
const LABEL_BIO: u8 = 2;
const LABEL_SUBJECT: u8 = 3;

fn u32_of(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::domain(format!("{what} = {n} does not fit in u32")))
}

/// Serialize a sequence to bytes.
pub fn encode(seq: &CsiSequence) -> Result<Vec<u8>> {
    let shape = seq.shape();
    let mut out = Vec::with_capacity(64 + seq.len() * shape.len() * 8);
    out.extend_from_slice(MAGIC);
    for (n, what) in [
        (seq.len(), "n_sa"),
        (shape.n_sc, "n_sc"),
        (shape.n_tx, "n_tx"),
        (shape.n_rx, "n_rx"),
    ] {
        out.extend_from_slice(&u32_of(n, what)?.to_le_bytes());
    }
    out.extend_from_slice(&seq.sample_rate().to_le_bytes());
    let put_vec = |out: &mut Vec<u8>, v: &[f64]| -> Result<()> {
        out.extend_from_slice(&u32_of(v.len(), "label length")?.to_le_bytes());
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(())
    };
    match &seq.label {
        Label::None => out.push(LABEL_NONE),
        Label::Class(c) => {
            out.push(LABEL_CLASS);
            out.extend_from_slice(&c.to_le_bytes());
        }
        Label::Biometrics(b) => {
            out.push(LABEL_BIO);
            put_vec(&mut out, b)?;
        }
        Label::Subject { class, biometrics } => {
            out.push(LABEL_SUBJECT);
            out.extend_from_slice(&class.to_le_bytes());
            put_vec(&mut out, biometrics)?;
        }
    }
    for frame in seq.frames() {
        for v in &frame.values {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parse a sequence from bytes. Nothing is returned unless the whole buffer
/// parses.
pub fn decode(bytes: &[u8]) -> Result<CsiSequence> {
    let mut r = Reader::new(bytes);
    if r.take(4, "magic")? != MAGIC {
        return Err(r.err(0, "bad magic, expected \"CSI1\""));
    }
    let n_sa = r.u32("n_sa")? as usize;
    let shape = CsiShape {
        n_sc: r.u32("n_sc")? as usize,
        n_tx: r.u32("n_tx")? as usize,
        n_rx: r.u32("n_rx")? as usize,
    };
    let rate_at = r.pos();
    let sample_rate = r.f64("sample_rate")?;
    if !(sample_rate > 0.0) || !sample_rate.is_finite() {
        return Err(r.err(rate_at, format!("invalid sample rate {sample_rate}")));
    }
    let kind_at = r.pos();
    let label = match r.u8("label kind")? {
        LABEL_NONE => Label::None,
        LABEL_CLASS => Label::Class(r.u32("class")?),
        LABEL_BIO => Label::Biometrics(r.f64_vec()?),
        LABEL_SUBJECT => {
            let class = r.u32("class")?;
            Label::Subject {
                class,
                biometrics: r.f64_vec()?,
            }
        }
        k => return Err(r.err(kind_at, format!("unknown label kind {k}"))),
    };
    let per_frame = shape.len();
    let needed = n_sa
        .checked_mul(per_frame)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| r.err(4, "frame count overflows"))?;
    if bytes.len() - r.pos() != needed {
        let reason = if bytes.len() - r.pos() < needed {
            "truncated frame data"
        } else {
            "trailing bytes after frame data"
        };
        return Err(r.err(
            r.pos(),
            format!("{reason}: expected {needed} bytes, found {}", bytes.len() - r.pos()),
        ));
    }
    let mut frames = Vec::with_capacity(n_sa);
    for i in 0..n_sa {
        let at = r.pos();
        let mut values = Vec::with_capacity(per_frame);
        for _ in 0..per_frame {
            let re = r.f32("re")?;
            let im = r.f32("im")?;
            values.push(Complex32::new(re, im));
        }
        let frame = CsiFrame::new(values, i as u64);
        if !frame.is_finite() {
            return Err(r.err(at, format!("frame {i} has non-finite values")));
        }
        frames.push(frame);
    }
    CsiSequence::new(shape, frames, sample_rate, label)
}

pub fn write_dataset(seq: &CsiSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(seq)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<CsiSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
