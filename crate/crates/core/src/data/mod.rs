//! Labeled source and unlabeled target data.

mod idx;
mod mnist_m;
mod synthetic;

pub use idx::{
    encode_idx_images, encode_idx_labels, idx_samples, load_idx, parse_idx_images, parse_idx_labels, read_maybe_gzip,
    IdxImages,
};
pub use mnist_m::{blend, gray_to_rgb, subset_indices, synth_mnist_m, PatchSource};
pub use synthetic::{
    gaussian_mode_centers, gaussian_sample, gen_gaussian_modes, gen_two_moons, two_moons_sample, SyntheticShiftConfig,
    MOONS_CENTER,
};

use std::path::Path;

use crate::autodiff::Tensor;
use crate::container::TensorFile;
use crate::error::{Error, Result};

/// A source example `(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub x: Tensor<f32>,
    pub y: usize,
}

/// A target example. The label, when known, exists only for evaluation and
/// is reachable solely through [`UnlabeledSample::hidden_label`].
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledSample {
    pub x: Tensor<f32>,
    hidden_y: Option<usize>,
}

impl UnlabeledSample {
    pub fn new(x: Tensor<f32>, hidden_y: Option<usize>) -> Self {
        Self { x, hidden_y }
    }

    pub fn hidden_label(&self) -> Option<usize> {
        self.hidden_y
    }

    pub fn with_hidden_label(mut self, hidden_y: Option<usize>) -> Self {
        self.hidden_y = hidden_y;
        self
    }
}

/// Training data for one adaptation task.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainData {
    pub source: Vec<LabeledSample>,
    pub target: Vec<UnlabeledSample>,
}

/// Stacks sample inputs into one `[N, ...]` batch.
pub fn stack<'a>(inputs: impl IntoIterator<Item = &'a Tensor<f32>>) -> Result<Tensor<f32>> {
    let items: Vec<&Tensor<f32>> = inputs.into_iter().collect();
    Tensor::stack(&items)
}

pub fn source_inputs(samples: &[LabeledSample]) -> Result<Tensor<f32>> {
    stack(samples.iter().map(|s| &s.x))
}

pub fn target_inputs(samples: &[UnlabeledSample]) -> Result<Tensor<f32>> {
    stack(samples.iter().map(|s| &s.x))
}

/// Hidden target labels for evaluation; fails if any is missing.
pub fn hidden_labels(samples: &[UnlabeledSample]) -> Result<Vec<usize>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.hidden_label()
                .ok_or_else(|| Error::MissingLabels(format!("target sample {i} has no hidden label")))
        })
        .collect()
}

/// Treats labeled samples as a target domain whose labels stay hidden.
pub fn as_unlabeled(samples: &[LabeledSample]) -> Vec<UnlabeledSample> {
    samples
        .iter()
        .map(|s| UnlabeledSample::new(s.x.clone(), Some(s.y)))
        .collect()
}

impl DomainData {
    /// Serializes into the named-tensor container: `source/x`, `source/y`,
    /// `target/x` and, when every target has one, `target/hidden_y`.
    pub fn to_container(&self) -> Result<TensorFile> {
        let mut f = TensorFile::default();
        f.push("source/x", source_inputs(&self.source)?);
        f.push(
            "source/y",
            Tensor::new([self.source.len()], self.source.iter().map(|s| s.y as f32).collect())?,
        );
        f.push("target/x", target_inputs(&self.target)?);
        if let Ok(labels) = hidden_labels(&self.target) {
            f.push(
                "target/hidden_y",
                Tensor::new([labels.len()], labels.iter().map(|&y| y as f32).collect())?,
            );
        }
        Ok(f)
    }

    pub fn from_container(f: &TensorFile) -> Result<Self> {
        let split = |t: &Tensor<f32>| -> Result<Vec<Tensor<f32>>> {
            let shape = t.shape()[1..].to_vec();
            (0..t.rows()).map(|i| Tensor::new(shape.clone(), t.row(i).to_vec())).collect()
        };
        let sx = split(f.require("source/x")?)?;
        let sy = f.require("source/y")?;
        if sy.len() != sx.len() {
            return Err(Error::Checkpoint("source/x and source/y disagree in length".into()));
        }
        let source = sx
            .into_iter()
            .zip(sy.data())
            .map(|(x, &y)| LabeledSample { x, y: y as usize })
            .collect();
        let tx = split(f.require("target/x")?)?;
        let ty: Vec<Option<usize>> = match f.get("target/hidden_y") {
            Some(t) => t.data().iter().map(|&y| Some(y as usize)).collect(),
            None => vec![None; tx.len()],
        };
        let target = tx.into_iter().zip(ty).map(|(x, y)| UnlabeledSample::new(x, y)).collect();
        Ok(Self { source, target })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&TensorFile::load(path)?)
    }
}
