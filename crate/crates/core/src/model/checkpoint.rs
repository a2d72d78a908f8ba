//! Binary checkpoint format.
//!
//! ```text
//! "PRBM1"                      5 bytes, magic + format version
//! n, m, p                      u64 little-endian each
//! alpha                        f64 little-endian
//! vh blocks                    f64 LE, blocks by (i, j) row-major, each n x m row-major
//! vbias blocks                 f64 LE, by lag i
//! hbias blocks                 f64 LE, by lag j
//! crc32                        u32 LE over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::{BlockWeights, Model, ModelShape};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PRBM";
const VERSION: u8 = b'1';
const HEADER_LEN: usize = 5 + 3 * 8 + 8;
const CRC_LEN: usize = 4;

pub fn serialize(model: &Model) -> Vec<u8> {
    let shape = model.shape();
    let w = model.weights();
    let count = w.vh.len() + w.vbias.len() + w.hbias.len();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * count + CRC_LEN);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for dim in [shape.n, shape.m, shape.p] {
        out.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    out.extend_from_slice(&shape.alpha.to_le_bytes());
    for x in w.vh.iter().chain(&w.vbias).chain(&w.hbias) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
}

fn read_f64(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
}

fn payload_len(n: u64, m: u64, p: u64) -> Option<usize> {
    let lags = p.checked_add(1)?;
    let vh = lags.checked_mul(lags)?.checked_mul(n)?.checked_mul(m)?;
    let biases = lags.checked_mul(n.checked_add(m)?)?;
    let floats = vh.checked_add(biases)?;
    usize::try_from(floats.checked_mul(8)?).ok()
}

pub fn deserialize(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 5 {
        return Err(Error::Format("truncated checkpoint: missing magic".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::Version(bytes[4]));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("truncated checkpoint header".into()));
    }
    let (n, m, p) = (read_u64(bytes, 5), read_u64(bytes, 13), read_u64(bytes, 21));
    let alpha = read_f64(bytes, 29);
    if n == 0 || m == 0 || !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Format(format!(
            "inconsistent header: n={n}, m={m}, p={p}, alpha={alpha}"
        )));
    }
    let payload = payload_len(n, m, p)
        .ok_or_else(|| Error::Format(format!("dimensions overflow: n={n}, m={m}, p={p}")))?;
    let expected = HEADER_LEN + payload + CRC_LEN;
    if bytes.len() < expected {
        return Err(Error::Format(format!(
            "truncated checkpoint: {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    if bytes.len() > expected {
        return Err(Error::Format(format!(
            "checkpoint has {} trailing bytes",
            bytes.len() - expected
        )));
    }
    let body = &bytes[..expected - CRC_LEN];
    let stored = u32::from_le_bytes(bytes[expected - CRC_LEN..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Integrity { stored, computed });
    }

    let (n, m, p) = (n as usize, m as usize, p as usize);
    let lags = p + 1;
    let mut floats = body[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |count: usize| -> Vec<f64> { floats.by_ref().take(count).collect() };
    let vh = take(lags * lags * n * m);
    let vbias = take(lags * n);
    let hbias = take(lags * m);
    let weights = BlockWeights::from_parts(n, m, p, vh, vbias, hbias)
        .map_err(|e| Error::Format(format!("invalid weights: {e}")))?;
    let shape = ModelShape::new(n, m, p, alpha)?;
    Model::new(shape, weights)
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serialize(model))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    deserialize(&fs::read(path)?)
}
