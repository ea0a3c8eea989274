//! Named-tensor container shared by checkpoints and dataset caches.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "IDDACKPT" | version: u32 | entries: u32 |
//!   { name_len: u16 | name: utf-8 | rank: u8 | dims: u32 * rank | values: f32 * prod(dims) } * entries
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"IDDACKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct TensorFile {
    pub version: u32,
    pub entries: Vec<(String, Tensor<f32>)>,
}

impl Default for TensorFile {
    fn default() -> Self {
        Self {
            version: FORMAT_VERSION,
            entries: Vec::new(),
        }
    }
}

impl TensorFile {
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<f32>) {
        self.entries.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor<f32>> {
        self.get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing entry `{name}`")))
    }

    /// Stores raw 32-bit words bit-for-bit in f32 slots.
    pub fn push_words(&mut self, name: impl Into<String>, words: &[u32]) {
        let data = words.iter().map(|w| f32::from_bits(*w)).collect();
        self.push(name, Tensor::new([words.len().max(1)], pad(data)).expect("non-empty"));
    }

    pub fn words(&self, name: &str) -> Result<Vec<u32>> {
        Ok(self.require(name)?.data().iter().map(|v| v.to_bits()).collect())
    }

    /// Stores bytes as small integral f32 values.
    pub fn push_bytes(&mut self, name: impl Into<String>, bytes: &[u8]) {
        let data = bytes.iter().map(|b| f32::from(*b)).collect();
        self.push(name, Tensor::new([bytes.len().max(1)], pad(data)).expect("non-empty"));
    }

    pub fn bytes(&self, name: &str) -> Result<Vec<u8>> {
        self.require(name)?
            .data()
            .iter()
            .map(|v| {
                if v.fract() == 0.0 && (0.0..=255.0).contains(v) {
                    Ok(*v as u8)
                } else {
                    Err(Error::Checkpoint(format!("entry `{name}` is not a byte string")))
                }
            })
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&self.version.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, t) in &self.entries {
            let len = u16::try_from(name.len())
                .map_err(|_| Error::Checkpoint(format!("name too long: {name}")))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            let rank = u8::try_from(t.rank()).map_err(|_| Error::Checkpoint("rank > 255".into()))?;
            w.write_all(&[rank])?;
            for &d in t.shape() {
                let d = u32::try_from(d).map_err(|_| Error::Checkpoint("dimension overflows u32".into()))?;
                w.write_all(&d.to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(4 * t.len());
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let count = read_u32(&mut r)?;
        let mut entries = Vec::new();
        for _ in 0..count {
            let mut len = [0u8; 2];
            read_exact(&mut r, &mut len)?;
            let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
            read_exact(&mut r, &mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("name is not utf-8".into()))?;
            let mut rank = [0u8; 1];
            read_exact(&mut r, &mut rank)?;
            let mut shape = Vec::with_capacity(rank[0] as usize);
            for _ in 0..rank[0] {
                shape.push(read_u32(&mut r)? as usize);
            }
            let n: usize = shape.iter().product();
            let mut raw = vec![0u8; 4 * n];
            read_exact(&mut r, &mut raw)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(format!("entry `{name}`: {e}")))?;
            entries.push((name, t));
        }
        Ok(Self { version, entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn pad(mut data: Vec<f32>) -> Vec<f32> {
    if data.is_empty() {
        data.push(0.0);
    }
    data
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Checkpoint("truncated file".into()),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}
