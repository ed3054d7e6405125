//! Model checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "CSEGCKP1"
//! scalar       u8       bytes per value (4 = f32, 8 = f64)
//! nf, ch, depth, num_classes   u32 each
//! dropout_rate f64
//! seed         u64
//! count        u32      number of tensors
//! per tensor:
//!   name_len u16, name (UTF-8), slot u8 (0 = parameter, 1 = buffer),
//!   rank u8, dims u32 × rank, values (scalar bytes each, row-major)
//! ```
//!
//! Tensors appear in the model's canonical order. Dropout RNG state is not
//! stored; a loaded model restarts its dropout stream from the seed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

use super::config::ModelConfig;
use super::model::{build_model, Model};
use super::params::Slot;

const MAGIC: &[u8; 8] = b"CSEGCKP1";

pub fn write_checkpoint<T: Scalar, W: Write>(model: &Model<T>, mut out: W) -> Result<()> {
    let c = model.config();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(T::BYTES as u8);
    for v in [c.nf, c.ch, c.depth, c.num_classes] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.extend_from_slice(&c.dropout_rate.to_le_bytes());
    buf.extend_from_slice(&c.seed.to_le_bytes());
    let mut tensors = Vec::new();
    model.visit(&mut |name, slot, t| tensors.push((name, slot, t)));
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, slot, t) in tensors {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(match slot {
            Slot::Param => 0,
            Slot::Buffer => 1,
        });
        buf.push(t.rank() as u8);
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            v.write_le(&mut buf);
        }
    }
    out.write_all(&buf)
        .map_err(|e| Error::io("<checkpoint>", e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Truncated(format!("checkpoint ends at byte {} (needed {n} more)", self.bytes.len()))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint<T: Scalar, R: Read>(mut input: R) -> Result<Model<T>> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<checkpoint>", e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(Error::UnsupportedFormat("not a model checkpoint (bad magic)".into()));
    }
    let width = cur.u8()? as usize;
    if width != T::BYTES {
        return Err(Error::UnsupportedFormat(format!(
            "checkpoint stores {width}-byte values, expected {}",
            T::BYTES
        )));
    }
    let config = ModelConfig {
        nf: cur.u32()? as usize,
        ch: cur.u32()? as usize,
        depth: cur.u32()? as usize,
        num_classes: cur.u32()? as usize,
        dropout_rate: f64::from_bits(cur.u64()?),
        seed: cur.u64()?,
    };
    let mut model: Model<T> = build_model(&config, &mut Rng::new(config.seed))?;
    let count = cur.u32()? as usize;
    let mut stored = Vec::with_capacity(count);
    for _ in 0..count {
        let len = cur.u16()? as usize;
        let name = String::from_utf8(cur.take(len)?.to_vec())
            .map_err(|_| Error::UnsupportedFormat("tensor name is not UTF-8".into()))?;
        let slot = match cur.u8()? {
            0 => Slot::Param,
            1 => Slot::Buffer,
            s => return Err(Error::UnsupportedFormat(format!("unknown tensor slot {s}"))),
        };
        let rank = cur.u8()? as usize;
        let shape = (0..rank).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let raw = cur.take(len * T::BYTES)?;
        let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
        stored.push((name, slot, Tensor::from_vec(&shape, data)?));
    }
    if cur.pos != bytes.len() {
        return Err(Error::UnsupportedFormat("trailing bytes after checkpoint".into()));
    }

    let mut expected = 0;
    let mut mismatch = None;
    let mut it = stored.into_iter();
    model.visit_mut(&mut |name, slot, t| {
        expected += 1;
        match it.next() {
            Some((n, s, v)) if n == name && s == slot && v.shape() == t.shape() => *t = v,
            Some((n, _, v)) => {
                mismatch.get_or_insert(format!("expected {name} {:?}, found {n} {:?}", t.shape(), v.shape()));
            }
            None => {
                mismatch.get_or_insert(format!("missing tensor {name}"));
            }
        }
    });
    if let Some(m) = mismatch {
        return Err(Error::ShapeMismatch(format!("checkpoint does not match its config: {m}")));
    }
    if expected != count {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint holds {count} tensors, model has {expected}"
        )));
    }
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(model, &mut w).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Model<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Mode;

    fn trained_model() -> Model<f32> {
        let cfg = ModelConfig {
            nf: 2,
            ch: 3,
            depth: 2,
            seed: 4,
            ..Default::default()
        };
        let mut m: Model = build_model(&cfg, &mut Rng::new(4)).unwrap();
        // One train pass so running statistics differ from their defaults.
        let x = Tensor::he_normal(&[2, 8, 8, 3], 1, &mut Rng::new(1)).unwrap();
        m.forward(&x, Mode::Train).unwrap();
        m
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = trained_model();
        let mut a = Vec::new();
        write_checkpoint(&m, &mut a).unwrap();
        let back: Model = read_checkpoint(a.as_slice()).unwrap();
        let mut b = Vec::new();
        write_checkpoint(&back, &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(back.config(), m.config());
        let x = Tensor::he_normal(&[8, 8, 3], 1, &mut Rng::new(2)).unwrap();
        assert_eq!(m.forward_infer(&x).unwrap(), back.forward_infer(&x).unwrap());
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let m = trained_model();
        let mut a = Vec::new();
        write_checkpoint(&m, &mut a).unwrap();
        assert!(matches!(
            read_checkpoint::<f32, _>(&a[..a.len() - 3]),
            Err(Error::Truncated(_))
        ));
        assert!(read_checkpoint::<f64, _>(a.as_slice()).is_err());
        let mut bad = a.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_checkpoint::<f32, _>(bad.as_slice()),
            Err(Error::UnsupportedFormat(_))
        ));
    }
}
