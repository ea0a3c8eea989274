//! Colored target digits: each grayscale digit is blended over an RGB patch
//! as `|patch - digit|` per channel.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LabeledSample, UnlabeledSample};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Cells per side of the procedural color grid.
const GRID: usize = 4;

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "bmp", "ppm"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchSource {
    /// Random crops from the raster images in a directory.
    Directory(PathBuf),
    /// Smooth low-frequency RGB noise.
    Procedural,
}

/// `[1, H, W]` to `[3, H, W]` by channel replication.
pub fn gray_to_rgb(x: &Tensor<f32>) -> Result<Tensor<f32>> {
    let s = x.shape();
    if s.len() != 3 || s[0] != 1 {
        return Err(Error::InvalidShape {
            shape: s.to_vec(),
            reason: "expected a single-channel [1, H, W] image".into(),
        });
    }
    let mut data = Vec::with_capacity(3 * x.len());
    for _ in 0..3 {
        data.extend_from_slice(x.data());
    }
    Tensor::new([3, s[1], s[2]], data)
}

/// `|patch - digit|` with the digit broadcast over the three patch channels.
pub fn blend(digit: &Tensor<f32>, patch: &Tensor<f32>) -> Result<Tensor<f32>> {
    let (d, p) = (digit.shape(), patch.shape());
    if d.len() != 3 || d[0] != 1 || p.len() != 3 || p[0] != 3 || d[1..] != p[1..] {
        return Err(Error::shape(
            "blend",
            format!("digit {d:?} and patch {p:?} must be [1, H, W] and [3, H, W]"),
        ));
    }
    let plane = d[1] * d[2];
    let data = patch
        .data()
        .iter()
        .enumerate()
        .map(|(i, &pv)| (pv - digit.data()[i % plane]).abs())
        .collect();
    Tensor::new(p.to_vec(), data)
}

fn procedural_patch(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    let mut grid = [[[0.0f32; GRID]; GRID]; 3];
    for ch in grid.iter_mut() {
        for row in ch.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.random::<f32>();
            }
        }
    }
    let mut data = Vec::with_capacity(3 * h * w);
    let span = (GRID - 1) as f32;
    for ch in &grid {
        for i in 0..h {
            let fy = if h > 1 { i as f32 / (h - 1) as f32 * span } else { 0.0 };
            let y0 = (fy as usize).min(GRID - 2);
            let ty = fy - y0 as f32;
            for j in 0..w {
                let fx = if w > 1 { j as f32 / (w - 1) as f32 * span } else { 0.0 };
                let x0 = (fx as usize).min(GRID - 2);
                let tx = fx - x0 as f32;
                let top = ch[y0][x0] * (1.0 - tx) + ch[y0][x0 + 1] * tx;
                let bottom = ch[y0 + 1][x0] * (1.0 - tx) + ch[y0 + 1][x0 + 1] * tx;
                data.push(top * (1.0 - ty) + bottom * ty);
            }
        }
    }
    Tensor::new([3, h, w], data).expect("sized above")
}

struct PhotoSet {
    images: Vec<image::RgbImage>,
}

impl PhotoSet {
    fn open(dir: &Path, h: usize, w: usize) -> Result<Self> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|_| Error::NoPatches(dir.to_path_buf()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            })
            .collect();
        paths.sort();
        let mut images = Vec::new();
        for p in paths {
            let img = image::open(&p)?.to_rgb8();
            if img.width() as usize >= w && img.height() as usize >= h {
                images.push(img);
            }
        }
        if images.is_empty() {
            return Err(Error::NoPatches(dir.to_path_buf()));
        }
        Ok(Self { images })
    }

    fn crop(&self, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor<f32> {
        let img = &self.images[rng.random_range(0..self.images.len())];
        let x0 = rng.random_range(0..=img.width() as usize - w);
        let y0 = rng.random_range(0..=img.height() as usize - h);
        let mut data = vec![0.0f32; 3 * h * w];
        for i in 0..h {
            for j in 0..w {
                let px = img.get_pixel((x0 + j) as u32, (y0 + i) as u32);
                for c in 0..3 {
                    data[c * h * w + i * w + j] = f32::from(px[c]) / 255.0;
                }
            }
        }
        Tensor::new([3, h, w], data).expect("sized above")
    }
}

/// Blends every source digit over its own random patch. Patch `i` depends only
/// on `seed` and `i`, so output is independent of thread scheduling.
pub fn synth_mnist_m(source: &[LabeledSample], patch_source: &PatchSource, seed: u64) -> Result<Vec<UnlabeledSample>> {
    let Some(first) = source.first() else {
        return Ok(Vec::new());
    };
    let s = first.x.shape();
    if s.len() != 3 || s[0] != 1 {
        return Err(Error::InvalidShape {
            shape: s.to_vec(),
            reason: "source digits must be single-channel [1, H, W]".into(),
        });
    }
    let (h, w) = (s[1], s[2]);
    let photos = match patch_source {
        PatchSource::Directory(dir) => Some(PhotoSet::open(dir, h, w)?),
        PatchSource::Procedural => None,
    };
    let base = rng::stream(seed, Stream::Patches);
    source
        .par_iter()
        .enumerate()
        .map(|(i, sample)| {
            let mut r = base.clone();
            r.set_word_pos(i as u128 * 1024);
            let patch = match &photos {
                Some(p) => p.crop(h, w, &mut r),
                None => procedural_patch(h, w, &mut r),
            };
            Ok(UnlabeledSample::new(blend(&sample.x, &patch)?, Some(sample.y)))
        })
        .collect()
}

/// Random subset of `n` indices out of `len`, in sorted order.
pub fn subset_indices(len: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(rng);
    idx.truncate(n.min(len));
    idx.sort_unstable();
    idx
}
