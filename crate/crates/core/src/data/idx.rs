//! IDX digit files: big-endian headers followed by unsigned bytes.
//! Gzip-compressed files are detected by magic and decompressed transparently.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::LabeledSample;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Raw image payload of an IDX image file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` bytes, image-major then row-major.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }
}

pub fn read_maybe_gzip(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Idx(format!("truncated {what} header")))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0, "image")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Idx(format!("wrong image magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4, "image")? as usize;
    let rows = be_u32(bytes, 8, "image")? as usize;
    let cols = be_u32(bytes, 12, "image")? as usize;
    let need = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::Idx(format!(
            "truncated image file: {} of {need} pixel bytes",
            body.len()
        )));
    }
    if body.len() > need {
        return Err(Error::Idx(format!("{} trailing bytes after image data", body.len() - need)));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body.to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "label")?;
    if magic != LABEL_MAGIC {
        return Err(Error::Idx(format!("wrong label magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4, "label")? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Idx(format!("truncated label file: {} of {count} labels", body.len())));
    }
    if body.len() > count {
        return Err(Error::Idx(format!("{} trailing bytes after label data", body.len() - count)));
    }
    Ok(body.to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGE_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Pairs parsed images with labels; each `x` is `[1, rows, cols]` in `[0, 1]`.
pub fn idx_samples(images: &IdxImages, labels: &[u8]) -> Result<Vec<LabeledSample>> {
    if images.count != labels.len() {
        return Err(Error::Idx(format!(
            "count mismatch: {} images, {} labels",
            images.count,
            labels.len()
        )));
    }
    (0..images.count)
        .map(|i| {
            let data = images.image(i).iter().map(|&p| f32::from(p) / 255.0).collect();
            Ok(LabeledSample {
                x: Tensor::new([1, images.rows, images.cols], data)?,
                y: usize::from(labels[i]),
            })
        })
        .collect()
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Vec<LabeledSample>> {
    let images = parse_idx_images(&read_maybe_gzip(images_path)?)?;
    let labels = parse_idx_labels(&read_maybe_gzip(labels_path)?)?;
    idx_samples(&images, &labels)
}
