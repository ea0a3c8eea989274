//! Discrepancy measures, bound checks and rank statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::{source_inputs, target_inputs, LabeledSample, UnlabeledSample};
use crate::error::{Error, Result};
use crate::model::IddaModel;
use crate::rng::{self, Stream};

// ---------------------------------------------------------------------------
// Proxy A-distance

/// Gradient steps of the logistic probe.
const PROBE_ITERS: usize = 400;
const PROBE_LR: f64 = 0.5;
const PROBE_L2: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// Held-out domain classification error, clipped to `[0, 0.5]`.
    pub epsilon: f64,
    /// `2 (1 - 2 epsilon)`.
    pub d_a: f64,
}

impl ProbeResult {
    pub fn from_error(error: f64) -> Self {
        let epsilon = error.clamp(0.0, 0.5);
        Self {
            epsilon,
            d_a: 2.0 * (1.0 - 2.0 * epsilon),
        }
    }
}

/// Rows of a `[N, D]` tensor as f64 vectors.
fn rows_f64(t: &Tensor<f32>) -> Vec<Vec<f64>> {
    (0..t.rows())
        .map(|i| t.row(i).iter().map(|&v| f64::from(v)).collect())
        .collect()
}

/// Logistic regression by full-batch gradient descent on standardized inputs.
struct LogisticProbe {
    mean: Vec<f64>,
    scale: Vec<f64>,
    w: Vec<f64>,
    b: f64,
}

impl LogisticProbe {
    fn fit(x: &[&[f64]], y: &[f64]) -> Self {
        let d = x[0].len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row.iter()) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for row in x {
            for j in 0..d {
                scale[j] += (row[j] - mean[j]).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 1e-24 { 1.0 / s.sqrt() } else { 0.0 };
        }
        let z: Vec<Vec<f64>> = x
            .iter()
            .map(|row| (0..d).map(|j| (row[j] - mean[j]) * scale[j]).collect())
            .collect();
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut gw = vec![0.0; d];
        for _ in 0..PROBE_ITERS {
            gw.iter_mut().for_each(|g| *g = 0.0);
            let mut gb = 0.0;
            for (row, &t) in z.iter().zip(y) {
                let s: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
                let r = sigmoid(s) - t;
                for (g, a) in gw.iter_mut().zip(row) {
                    *g += r * a;
                }
                gb += r;
            }
            for (wj, g) in w.iter_mut().zip(&gw) {
                *wj -= PROBE_LR * (g / n + PROBE_L2 * *wj);
            }
            b -= PROBE_LR * gb / n;
        }
        Self { mean, scale, w, b }
    }

    fn predict(&self, row: &[f64]) -> f64 {
        let s: f64 = row
            .iter()
            .enumerate()
            .map(|(j, v)| (v - self.mean[j]) * self.scale[j] * self.w[j])
            .sum::<f64>()
            + self.b;
        if s > 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Trains a linear domain probe on a random half of each domain and scores
/// it on the other half.
pub fn proxy_a_distance(source: &Tensor<f32>, target: &Tensor<f32>, seed: u64) -> Result<ProbeResult> {
    if source.rank() != 2 || target.rank() != 2 || source.shape()[1] != target.shape()[1] {
        return Err(Error::shape(
            "proxy_a_distance",
            format!("feature sets {:?} and {:?} differ in width", source.shape(), target.shape()),
        ));
    }
    if source.rows() < 2 || target.rows() < 2 {
        return Err(Error::Empty("each domain needs at least two feature rows".into()));
    }
    let s = rows_f64(source);
    let t = rows_f64(target);
    // Each domain's split depends only on the seed and its size, so swapping
    // the two domains swaps their splits too.
    let split = |n: usize| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng::stream(seed, Stream::Probe));
        let train = idx[..n / 2].to_vec();
        let test = idx[n / 2..].to_vec();
        (train, test)
    };
    let (s_train, s_test) = split(s.len());
    let (t_train, t_test) = split(t.len());
    let mut x: Vec<&[f64]> = Vec::new();
    let mut y = Vec::new();
    for &i in &s_train {
        x.push(&s[i]);
        y.push(0.0);
    }
    for &i in &t_train {
        x.push(&t[i]);
        y.push(1.0);
    }
    let probe = LogisticProbe::fit(&x, &y);
    let mut wrong = 0usize;
    for &i in &s_test {
        wrong += usize::from(probe.predict(&s[i]) != 0.0);
    }
    for &i in &t_test {
        wrong += usize::from(probe.predict(&t[i]) != 1.0);
    }
    Ok(ProbeResult::from_error(wrong as f64 / (s_test.len() + t_test.len()) as f64))
}

// ---------------------------------------------------------------------------
// H-divergence bound chain

/// Binary hypotheses over points in `R^d`, evaluated as bitsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisFamily {
    /// Thresholds per input dimension. Each yields the stumps `x_j > t` and `x_j <= t`.
    pub thresholds: Vec<Vec<f64>>,
    /// XOR order of the discriminator family: members are XORs of up to this
    /// many classifier hypotheses. Order >= 2 contains the symmetric difference set.
    pub discriminator_order: usize,
}

impl HypothesisFamily {
    /// `per_dim` evenly spaced quantiles of the pooled samples in every dimension.
    pub fn quantile_grid(points: &[Vec<f64>], per_dim: usize) -> Result<Self> {
        let d = points.first().map(Vec::len).ok_or(Error::Empty("no points for the grid".into()))?;
        let thresholds = (0..d)
            .map(|j| {
                let mut v: Vec<f64> = points.iter().map(|p| p[j]).collect();
                v.sort_by(f64::total_cmp);
                (0..per_dim)
                    .map(|k| {
                        let q = (k as f64 + 0.5) / per_dim as f64;
                        v[((q * v.len() as f64) as usize).min(v.len() - 1)]
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            thresholds,
            discriminator_order: 2,
        })
    }

    pub fn num_stumps(&self) -> usize {
        2 * self.thresholds.iter().map(Vec::len).sum::<usize>()
    }

    /// Whether the discriminator family contains every `h1 xor h2` of the classifier family.
    pub fn contains_symmetric_difference(&self) -> bool {
        self.discriminator_order >= 2
    }

    /// Classifier hypotheses as distinct bitsets over `points`, including both constants.
    fn classifier_masks(&self, points: &[Vec<f64>]) -> Vec<Bits> {
        let n = points.len();
        let mut set = BTreeSet::new();
        set.insert(Bits::zeros(n));
        set.insert(Bits::zeros(n).not(n));
        for (j, ts) in self.thresholds.iter().enumerate() {
            for &t in ts {
                let mut above = Bits::zeros(n);
                for (i, p) in points.iter().enumerate() {
                    if p[j] > t {
                        above.set(i);
                    }
                }
                set.insert(above.not(n));
                set.insert(above);
            }
        }
        set.into_iter().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Bits(Vec<u64>);

impl Bits {
    fn zeros(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64).max(1)])
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn not(&self, n: usize) -> Self {
        let mut out = Bits(self.0.iter().map(|w| !w).collect());
        let tail = n % 64;
        if tail != 0 {
            *out.0.last_mut().expect("non-empty") &= (1u64 << tail) - 1;
        }
        if n == 0 {
            out.0[0] = 0;
        }
        out
    }

    fn xor(&self, other: &Bits) -> Bits {
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a ^ b).collect())
    }

    fn and(&self, other: &Bits) -> Bits {
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }

    fn count(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `2 sup |P_s[h=1] - P_t[h=1]|` over the symmetric difference set.
    pub d_hat: f64,
    /// `2 sup |alpha(h) - 1|` over the discriminator family.
    pub bound: f64,
    /// Same supremum over `h xor g` with `g` a classifier hypothesis that is 0 on every source point.
    pub augmented_bound: f64,
    pub holds: bool,
    pub holds_augmented: bool,
    pub family_contains_symmetric_difference: bool,
    pub symmetric_difference_size: usize,
}

/// Enumerates the families on the given samples and reports the bound chain.
pub fn empirical_hdh(source: &[Vec<f64>], target: &[Vec<f64>], family: &HypothesisFamily) -> Result<BoundReport> {
    if family.num_stumps() == 0 {
        return Err(Error::Empty("hypothesis family has no stumps".into()));
    }
    if source.is_empty() || target.is_empty() {
        return Err(Error::Empty("both domains need samples".into()));
    }
    let dims = family.thresholds.len();
    if source.iter().chain(target).any(|p| p.len() != dims) {
        return Err(Error::shape("empirical_hdh", format!("points must have {dims} coordinates")));
    }
    let (ns, nt) = (source.len(), target.len());
    let n = ns + nt;
    let points: Vec<Vec<f64>> = source.iter().chain(target).cloned().collect();
    let mut src_mask = Bits::zeros(n);
    for i in 0..ns {
        src_mask.set(i);
    }
    let tgt_mask = src_mask.not(n);

    // |P_s[h=1] - P_t[h=1]|, which equals |alpha(h) - 1|.
    let gap = |h: &Bits| -> f64 {
        let ps = f64::from(h.and(&src_mask).count()) / ns as f64;
        let pt = f64::from(h.and(&tgt_mask).count()) / nt as f64;
        (ps - pt).abs()
    };

    let hc = family.classifier_masks(&points);
    let mut sym: BTreeSet<Bits> = BTreeSet::new();
    for (a, h1) in hc.iter().enumerate() {
        for h2 in &hc[a..] {
            sym.insert(h1.xor(h2));
        }
    }
    let d_hat = 2.0 * sym.iter().map(gap).fold(0.0, f64::max);

    let mut hd: BTreeSet<Bits> = hc.iter().cloned().collect();
    for _ in 1..family.discriminator_order {
        let mut next = hd.clone();
        for h in &hd {
            for c in &hc {
                next.insert(h.xor(c));
            }
        }
        hd = next;
    }
    let bound = 2.0 * hd.iter().map(gap).fold(0.0, f64::max);

    let zero_on_source: Vec<&Bits> = hc.iter().filter(|g| g.and(&src_mask).count() == 0).collect();
    let mut aug = 0.0f64;
    for h in &hd {
        for g in &zero_on_source {
            aug = aug.max(gap(&h.xor(g)));
        }
    }
    let augmented_bound = 2.0 * aug;
    Ok(BoundReport {
        d_hat,
        bound,
        augmented_bound,
        holds: d_hat <= bound,
        holds_augmented: d_hat <= augmented_bound,
        family_contains_symmetric_difference: family.contains_symmetric_difference(),
        symmetric_difference_size: sym.len(),
    })
}

// ---------------------------------------------------------------------------
// Friedman ranks and Nemenyi critical difference

/// Studentized range statistic divided by sqrt(2), for k = 2..=10.
const NEMENYI_Q_05: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];
const NEMENYI_Q_10: [f64; 9] = [1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920];

pub fn nemenyi_q(k: usize, alpha: f64) -> Result<f64> {
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &NEMENYI_Q_05
    } else if (alpha - 0.10).abs() < 1e-12 {
        &NEMENYI_Q_10
    } else {
        return Err(Error::Config(format!("alpha must be 0.05 or 0.10, got {alpha}")));
    };
    if !(2..=10).contains(&k) {
        return Err(Error::Config(format!("Nemenyi constants cover 2..=10 methods, got {k}")));
    }
    Ok(table[k - 2])
}

/// `q sqrt(k (k + 1) / (6 n))`.
pub fn critical_difference(k: usize, n_blocks: usize, alpha: f64) -> Result<f64> {
    if n_blocks == 0 {
        return Err(Error::Empty("no blocks".into()));
    }
    Ok(nemenyi_q(k, alpha)? * (k as f64 * (k as f64 + 1.0) / (6.0 * n_blocks as f64)).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub method: String,
    pub seed: u64,
    pub target_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    /// Sorted method names.
    pub methods: Vec<String>,
    /// Mean rank per method; rank 1 is the highest accuracy.
    pub mean_ranks: Vec<f64>,
    pub n_blocks: usize,
    pub critical_difference: f64,
    /// Friedman chi-square statistic.
    pub chi_square: f64,
    /// Pairs whose mean-rank gap exceeds the critical difference, with the gap.
    pub significant: Vec<(String, String, f64)>,
}

impl FriedmanResult {
    pub fn mean_rank(&self, method: &str) -> Option<f64> {
        self.methods.iter().position(|m| m == method).map(|i| self.mean_ranks[i])
    }
}

/// Ranks of `values` in descending order; ties share their average rank.
pub fn rank_descending(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Blocks are `(dataset, seed)` pairs; every method must appear exactly once per block.
pub fn friedman_nemenyi(records: &[RunRecord], alpha: f64) -> Result<FriedmanResult> {
    let methods: Vec<String> = records
        .iter()
        .map(|r| r.method.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let k = methods.len();
    let mut blocks: BTreeMap<(String, u64), BTreeMap<String, f64>> = BTreeMap::new();
    for r in records {
        let block = blocks.entry((r.dataset.clone(), r.seed)).or_default();
        if block.insert(r.method.clone(), r.target_accuracy).is_some() {
            return Err(Error::IncompleteBlocks(format!(
                "duplicate record for {} on ({}, {})",
                r.method, r.dataset, r.seed
            )));
        }
    }
    if blocks.is_empty() {
        return Err(Error::IncompleteBlocks("no records".into()));
    }
    let mut sums = vec![0.0; k];
    for ((dataset, seed), block) in &blocks {
        if block.len() != k {
            return Err(Error::IncompleteBlocks(format!(
                "block ({dataset}, {seed}) has {} of {k} methods",
                block.len()
            )));
        }
        let values: Vec<f64> = methods.iter().map(|m| block[m]).collect();
        for (s, r) in sums.iter_mut().zip(rank_descending(&values)) {
            *s += r;
        }
    }
    let n = blocks.len();
    let mean_ranks: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    let kf = k as f64;
    let chi_square = 12.0 * n as f64 / (kf * (kf + 1.0))
        * (mean_ranks.iter().map(|r| r * r).sum::<f64>() - kf * (kf + 1.0).powi(2) / 4.0);
    let cd = critical_difference(k, n, alpha)?;
    let mut significant = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let gap = (mean_ranks[a] - mean_ranks[b]).abs();
            if gap > cd {
                significant.push((methods[a].clone(), methods[b].clone(), gap));
            }
        }
    }
    Ok(FriedmanResult {
        methods,
        mean_ranks,
        n_blocks: n,
        critical_difference: cd,
        chi_square,
        significant,
    })
}

// ---------------------------------------------------------------------------
// Mode preservation

/// Share of target rows whose nearest source class centroid is their hidden class.
pub fn mode_purity(
    target_features: &Tensor<f32>,
    target_labels: &[usize],
    source_features: &Tensor<f32>,
    source_labels: &[usize],
) -> Result<f64> {
    if target_features.rank() != 2
        || source_features.rank() != 2
        || target_features.shape()[1] != source_features.shape()[1]
        || target_features.rows() != target_labels.len()
        || source_features.rows() != source_labels.len()
    {
        return Err(Error::shape(
            "mode_purity",
            "features and labels must agree in width and row count",
        ));
    }
    if target_labels.is_empty() {
        return Err(Error::Empty("no target rows".into()));
    }
    let d = source_features.shape()[1];
    let classes = source_labels
        .iter()
        .chain(target_labels)
        .copied()
        .max()
        .map_or(0, |m| m + 1);
    let mut centroids = vec![vec![0.0f64; d]; classes];
    let mut counts = vec![0usize; classes];
    for (i, &y) in source_labels.iter().enumerate() {
        counts[y] += 1;
        for (c, &v) in centroids[y].iter_mut().zip(source_features.row(i)) {
            *c += f64::from(v);
        }
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Empty(format!("class {k} has no source samples")));
    }
    for (c, &n) in centroids.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|v| *v /= n as f64);
    }
    let mut hits = 0usize;
    for (i, &y) in target_labels.iter().enumerate() {
        let row = target_features.row(i);
        let mut best = (f64::INFINITY, 0);
        for (k, c) in centroids.iter().enumerate() {
            let dist: f64 = c.iter().zip(row).map(|(a, &b)| (a - f64::from(b)).powi(2)).sum();
            if dist < best.0 {
                best = (dist, k);
            }
        }
        hits += usize::from(best.1 == y);
    }
    Ok(hits as f64 / target_labels.len() as f64)
}

// ---------------------------------------------------------------------------
// Feature export

/// Writes `domain,label,f0..f{D-1}` with one row per sample. Target labels are
/// their hidden labels, or -1 when `blind` or unknown.
pub fn export_features(
    model: &IddaModel,
    source: &[LabeledSample],
    target: &[UnlabeledSample],
    blind: bool,
    path: impl AsRef<Path>,
) -> Result<usize> {
    let mut w = BufWriter::new(File::create(path)?);
    let d = model.config.feature_dim;
    write!(w, "domain,label")?;
    for j in 0..d {
        write!(w, ",f{j}")?;
    }
    writeln!(w)?;
    let mut rows = 0;
    let mut emit = |w: &mut BufWriter<File>, tag: &str, labels: Vec<i64>, feats: &Tensor<f32>| -> Result<()> {
        for (i, y) in labels.iter().enumerate() {
            write!(w, "{tag},{y}")?;
            for v in feats.row(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
            rows += 1;
        }
        Ok(())
    };
    if !source.is_empty() {
        let f = model.extract_features(&source_inputs(source)?)?;
        emit(&mut w, "source", source.iter().map(|s| s.y as i64).collect(), &f)?;
    }
    if !target.is_empty() {
        let f = model.extract_features(&target_inputs(target)?)?;
        let labels = target
            .iter()
            .map(|s| match (blind, s.hidden_label()) {
                (false, Some(y)) => y as i64,
                _ => -1,
            })
            .collect();
        emit(&mut w, "target", labels, &f)?;
    }
    w.flush()?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Reports

/// Analysis output: `{metric, value, config, seeds}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metric: String,
    pub value: serde_json::Value,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
}

impl Report {
    pub fn new(metric: impl Into<String>, value: impl Serialize, config: impl Serialize, seeds: &[u64]) -> Result<Self> {
        Ok(Self {
            metric: metric.into(),
            value: serde_json::to_value(value)?,
            config: serde_json::to_value(config)?,
            seeds: seeds.to_vec(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

/// Median of a non-empty slice; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

pub use crate::experiment::{lambda_sweep, SweepRow};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d_a_from_error() {
        let r = ProbeResult::from_error(0.05);
        assert!((r.d_a - 1.8).abs() < 1e-12);
        assert_eq!(ProbeResult::from_error(0.7).epsilon, 0.5);
    }

    #[test]
    fn cd_for_three_methods_thirty_blocks() {
        let cd = critical_difference(3, 30, 0.05).unwrap();
        assert!((cd - 2.343 * (12.0f64 / 180.0).sqrt()).abs() < 1e-12);
        assert!(critical_difference(11, 30, 0.05).is_err());
        assert!(critical_difference(3, 30, 0.01).is_err());
    }

    #[test]
    fn ties_share_average_rank() {
        assert_eq!(rank_descending(&[0.9, 0.9, 0.1]), vec![1.5, 1.5, 3.0]);
        assert_eq!(rank_descending(&[0.1, 0.5, 0.9]), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn incomplete_blocks_are_rejected() {
        let rec = |m: &str, s: u64| RunRecord {
            dataset: "d".into(),
            method: m.into(),
            seed: s,
            target_accuracy: 0.5,
        };
        let records = vec![rec("a", 0), rec("b", 0), rec("a", 1)];
        assert!(matches!(friedman_nemenyi(&records, 0.05), Err(Error::IncompleteBlocks(_))));
    }

    #[test]
    fn disjoint_supports_reach_two() {
        let s: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0]).collect();
        let t: Vec<Vec<f64>> = (0..10).map(|i| vec![2.0 + i as f64 / 10.0]).collect();
        let fam = HypothesisFamily {
            thresholds: vec![vec![1.5]],
            discriminator_order: 2,
        };
        let r = empirical_hdh(&s, &t, &fam).unwrap();
        assert_eq!((r.d_hat, r.bound), (2.0, 2.0));
        let same = empirical_hdh(&s, &s, &fam).unwrap();
        assert_eq!(same.d_hat, 0.0);
        assert!(same.bound >= 0.0);
    }

    #[test]
    fn purity_at_centroids_is_one() {
        let src = Tensor::new([4, 2], vec![0.0f32, 0.0, 0.0, 2.0, 5.0, 5.0, 5.0, 7.0]).unwrap();
        let tgt = Tensor::new([2, 2], vec![0.0f32, 1.0, 5.0, 6.0]).unwrap();
        assert_eq!(mode_purity(&tgt, &[0, 1], &src, &[0, 0, 1, 1]).unwrap(), 1.0);
        assert!(mode_purity(&tgt, &[0, 2], &src, &[0, 0, 1, 1]).is_err());
    }

    #[test]
    fn median_handles_parity() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
