//! Two-dimensional domain-shift generators.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{LabeledSample, UnlabeledSample};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Class-conditional Gaussian mixture in the plane, with the target drawn
/// from the same mixture after a rotation about the origin and a translation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticShiftConfig {
    pub num_classes: usize,
    pub modes_per_class: usize,
    /// Mode centers, class-major (`class * modes_per_class + mode`). When
    /// absent, centers are spread on a circle with the classes interleaved.
    #[serde(default)]
    pub mode_centers: Option<Vec<[f64; 2]>>,
    /// Radius of the default circle of centers.
    pub radius: f64,
    /// Isotropic standard deviation of every mode.
    pub covariance_scale: f64,
    pub rotation_deg: f64,
    pub translation: [f64; 2],
    pub n_source: usize,
    pub n_target: usize,
    pub seed: u64,
}

impl Default for SyntheticShiftConfig {
    fn default() -> Self {
        Self {
            num_classes: 3,
            modes_per_class: 2,
            mode_centers: None,
            radius: 4.0,
            covariance_scale: 0.5,
            rotation_deg: 30.0,
            translation: [0.0, 0.0],
            n_source: 600,
            n_target: 600,
            seed: 0,
        }
    }
}

impl SyntheticShiftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.modes_per_class == 0 {
            return Err(Error::Config("need at least one class and one mode per class".into()));
        }
        if self.n_source == 0 || self.n_target == 0 {
            return Err(Error::Config("n_source and n_target must be positive".into()));
        }
        if !(self.covariance_scale > 0.0 && self.covariance_scale.is_finite()) {
            return Err(Error::Config(format!(
                "degenerate covariance scale {}",
                self.covariance_scale
            )));
        }
        if let Some(c) = &self.mode_centers {
            if c.len() != self.num_classes * self.modes_per_class {
                return Err(Error::Config(format!(
                    "{} mode centers given, need {}",
                    c.len(),
                    self.num_classes * self.modes_per_class
                )));
            }
        }
        Ok(())
    }

    /// Maps a source-domain point into the target domain.
    pub fn transform(&self, p: [f64; 2]) -> [f64; 2] {
        let r = rotate(p, [0.0, 0.0], self.rotation_deg);
        [r[0] + self.translation[0], r[1] + self.translation[1]]
    }
}

/// Mode centers, class-major.
pub fn gaussian_mode_centers(cfg: &SyntheticShiftConfig) -> Vec<[f64; 2]> {
    if let Some(c) = &cfg.mode_centers {
        return c.clone();
    }
    let total = cfg.num_classes * cfg.modes_per_class;
    let mut centers = vec![[0.0; 2]; total];
    for class in 0..cfg.num_classes {
        for mode in 0..cfg.modes_per_class {
            let slot = mode * cfg.num_classes + class;
            let angle = 2.0 * PI * slot as f64 / total as f64;
            centers[class * cfg.modes_per_class + mode] = [cfg.radius * angle.cos(), cfg.radius * angle.sin()];
        }
    }
    centers
}

fn rotate(p: [f64; 2], center: [f64; 2], deg: f64) -> [f64; 2] {
    let (s, c) = deg.to_radians().sin_cos();
    let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
    [center[0] + c * dx - s * dy, center[1] + s * dx + c * dy]
}

fn point(p: [f64; 2]) -> Tensor<f32> {
    Tensor::new([2], vec![p[0] as f32, p[1] as f32]).expect("two values")
}

fn gaussian_draw(cfg: &SyntheticShiftConfig, centers: &[[f64; 2]], i: usize, rng: &mut ChaCha8Rng) -> ([f64; 2], usize) {
    let total = centers.len();
    let mode_slot = i % total;
    let class = mode_slot % cfg.num_classes;
    let mode = mode_slot / cfg.num_classes;
    let c = centers[class * cfg.modes_per_class + mode];
    let dx: f64 = StandardNormal.sample(rng);
    let dy: f64 = StandardNormal.sample(rng);
    (
        [c[0] + cfg.covariance_scale * dx, c[1] + cfg.covariance_scale * dy],
        class,
    )
}

/// Draws `n` labeled points of the configured mixture; `shifted` applies the
/// target transform. Modes are visited round-robin, so classes are balanced.
pub fn gaussian_sample(cfg: &SyntheticShiftConfig, n: usize, shifted: bool, rng: &mut ChaCha8Rng) -> Vec<LabeledSample> {
    let centers = gaussian_mode_centers(cfg);
    (0..n)
        .map(|i| {
            let (p, y) = gaussian_draw(cfg, &centers, i, rng);
            let p = if shifted { cfg.transform(p) } else { p };
            LabeledSample { x: point(p), y }
        })
        .collect()
}

/// Source and target sets of the multimodal Gaussian benchmark.
pub fn gen_gaussian_modes(cfg: &SyntheticShiftConfig) -> Result<(Vec<LabeledSample>, Vec<UnlabeledSample>)> {
    cfg.validate()?;
    let mut src_rng = rng::stream(cfg.seed, Stream::SourceData);
    let mut tgt_rng = rng::stream(cfg.seed, Stream::TargetData);
    let source = gaussian_sample(cfg, cfg.n_source, false, &mut src_rng);
    let target = gaussian_sample(cfg, cfg.n_target, true, &mut tgt_rng)
        .into_iter()
        .map(|s| UnlabeledSample::new(s.x, Some(s.y)))
        .collect();
    Ok((source, target))
}

/// Center of the two-moons figure, used as the rotation pivot.
pub const MOONS_CENTER: [f64; 2] = [0.5, 0.25];

/// `n` labeled two-moons points rotated by `angle_deg` about [`MOONS_CENTER`].
/// The first `n / 2` points are class 0 (upper moon), the rest class 1.
pub fn two_moons_sample(n: usize, noise: f64, angle_deg: f64, rng: &mut ChaCha8Rng) -> Vec<LabeledSample> {
    let n_upper = n / 2;
    (0..n)
        .map(|i| {
            let t = rng.random_range(0.0..PI);
            let (base, y) = if i < n_upper {
                ([t.cos(), t.sin()], 0)
            } else {
                ([1.0 - t.cos(), 0.5 - t.sin()], 1)
            };
            let nx: f64 = StandardNormal.sample(rng);
            let ny: f64 = StandardNormal.sample(rng);
            let p = [base[0] + noise * nx, base[1] + noise * ny];
            LabeledSample {
                x: point(rotate(p, MOONS_CENTER, angle_deg)),
                y,
            }
        })
        .collect()
}

/// Two interleaved half circles as source; the target is the same figure
/// rotated by `shift_angle_deg`.
pub fn gen_two_moons(
    shift_angle_deg: f64,
    n_source: usize,
    n_target: usize,
    noise: f64,
    seed: u64,
) -> Result<(Vec<LabeledSample>, Vec<UnlabeledSample>)> {
    if noise.is_nan() || noise < 0.0 {
        return Err(Error::Config(format!("noise must be >= 0, got {noise}")));
    }
    let mut src_rng = rng::stream(seed, Stream::SourceData);
    let mut tgt_rng = rng::stream(seed, Stream::TargetData);
    let source = two_moons_sample(n_source, noise, 0.0, &mut src_rng);
    let target = two_moons_sample(n_target, noise, shift_angle_deg, &mut tgt_rng)
        .into_iter()
        .map(|s| UnlabeledSample::new(s.x, Some(s.y)))
        .collect();
    Ok((source, target))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moons_are_balanced() {
        for n in [300, 301, 7] {
            let (s, _) = gen_two_moons(30.0, n, 10, 0.1, 3).unwrap();
            let ones = s.iter().filter(|x| x.y == 1).count();
            assert!((ones as i64 - (n - ones) as i64).abs() <= 1);
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_two_moons(30.0, 50, 50, 0.1, 11).unwrap();
        let b = gen_two_moons(30.0, 50, 50, 0.1, 11).unwrap();
        assert_eq!(a, b);
        let cfg = SyntheticShiftConfig::default();
        assert_eq!(gen_gaussian_modes(&cfg).unwrap(), gen_gaussian_modes(&cfg).unwrap());
    }

    #[test]
    fn rejects_degenerate_configs() {
        let cfg = SyntheticShiftConfig {
            covariance_scale: 0.0,
            ..Default::default()
        };
        assert!(gen_gaussian_modes(&cfg).is_err());
        let cfg = SyntheticShiftConfig {
            n_target: 0,
            ..Default::default()
        };
        assert!(gen_gaussian_modes(&cfg).is_err());
        assert!(gen_two_moons(0.0, 10, 10, -0.1, 0).is_err());
    }

    #[test]
    fn transform_rotates_then_translates() {
        let cfg = SyntheticShiftConfig {
            rotation_deg: 90.0,
            translation: [1.0, 0.0],
            ..Default::default()
        };
        let p = cfg.transform([1.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12);
    }
}
