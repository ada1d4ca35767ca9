//! Mini-batch construction and triplet sampling.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baseline::TripletIndexBatch;
use crate::math;
use crate::{Error, Matrix, Result, EPS};

/// Epoch-seeded generator: same `(seed, epoch)`, same stream.
pub(crate) fn epoch_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Splits one epoch into batches of `batch_size / k_per_class` classes with
/// exactly `k_per_class` examples each. Classes and examples are drawn
/// without replacement; examples that cannot fill a complete batch are
/// dropped. Deterministic per `(seed, epoch)`.
pub fn class_balanced_batches(
    labels: &[u32],
    batch_size: usize,
    k_per_class: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>> {
    if k_per_class == 0 || batch_size == 0 || !batch_size.is_multiple_of(k_per_class) {
        return Err(Error::Config(format!(
            "batch size {batch_size} is not a positive multiple of {k_per_class} examples per class"
        )));
    }
    let classes_per_batch = batch_size / k_per_class;
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if let Some((class, members)) = by_class.iter().find(|(_, m)| m.len() < k_per_class) {
        return Err(Error::Config(format!(
            "class {class} has {} examples, fewer than {k_per_class} per batch",
            members.len()
        )));
    }
    if by_class.len() < classes_per_batch {
        return Err(Error::Config(format!(
            "{} classes cannot fill batches of {classes_per_batch} classes",
            by_class.len()
        )));
    }

    let mut rng = epoch_rng(seed, epoch);
    let mut chunks: Vec<Vec<Vec<usize>>> = by_class
        .into_values()
        .map(|mut members| {
            members.shuffle(&mut rng);
            members.chunks_exact(k_per_class).map(<[usize]>::to_vec).collect()
        })
        .collect();

    let mut batches = Vec::new();
    loop {
        let open: Vec<usize> = (0..chunks.len()).filter(|&c| !chunks[c].is_empty()).collect();
        if open.len() < classes_per_batch {
            break;
        }
        let mut batch = Vec::with_capacity(batch_size);
        for &c in open.choose_multiple(&mut rng, classes_per_batch) {
            batch.extend(chunks[c].pop().expect("open class"));
        }
        batches.push(batch);
    }
    Ok(batches)
}

/// Settings of the distance-weighted negative sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SamplerConfig {
    /// Distances are clipped below at this value before weighting.
    pub cutoff: f64,
    /// Negatives farther than this get zero weight (they cannot violate a
    /// margin on the unit sphere).
    pub nonzero_loss_cutoff: f64,
    /// Ignore distances and draw negatives uniformly.
    pub uniform: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { cutoff: 0.5, nonzero_loss_cutoff: 1.4, uniform: false }
    }
}

/// Log of the inverse density of pairwise distances between uniform points
/// on the unit sphere in `dim` dimensions: `q(d) ∝ d^(n−2) (1 − d²/4)^((n−3)/2)`.
fn log_inverse_density(distance: f64, dim: usize, cutoff: f64) -> f64 {
    let d = distance.max(cutoff);
    let n = dim as f64;
    -((n - 2.0) * math::ln(d) + 0.5 * (n - 3.0) * math::ln_guarded(1.0 - 0.25 * d * d))
}

/// One negative for every ordered anchor-positive pair of `e`, drawn with
/// probability proportional to the inverse sphere density of its distance
/// to the anchor. Rows of `e` are expected to have unit length.
///
/// Weights are computed in log space and shifted so the largest is 1 before
/// normalization. An anchor whose negatives all lie beyond
/// `nonzero_loss_cutoff` falls back to uniform sampling.
pub fn distance_weighted_triplets(
    e: &Matrix,
    labels: &[u32],
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<TripletIndexBatch> {
    let n = e.rows();
    if labels.len() != n {
        return Err(Error::Sampling(format!("{n} embeddings but {} labels", labels.len())));
    }
    let first = labels.first().copied();
    if labels.iter().all(|&l| Some(l) == first) {
        return Err(Error::Sampling("triplets need at least two classes in the batch".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = TripletIndexBatch::default();
    let mut negatives = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for a in 0..n {
        negatives.clear();
        weights.clear();
        negatives.extend((0..n).filter(|&j| labels[j] != labels[a]));
        let positives: Vec<usize> = (0..n).filter(|&j| j != a && labels[j] == labels[a]).collect();
        if positives.is_empty() {
            continue;
        }
        let mut dist = Vec::with_capacity(negatives.len());
        for &j in &negatives {
            let d2: f64 = e.row(a).iter().zip(e.row(j)).map(|(x, y)| (x - y) * (x - y)).sum();
            dist.push(math::sqrt(d2));
        }
        if !cfg.uniform {
            let logw: Vec<f64> = dist.iter().map(|&d| log_inverse_density(d, e.cols(), cfg.cutoff)).collect();
            let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (lw, &d) in logw.iter().zip(&dist) {
                let w = if d < cfg.nonzero_loss_cutoff { math::exp(lw - top) } else { 0.0 };
                weights.push(if w.is_finite() { w } else { 0.0 });
            }
        }
        let picker = if cfg.uniform || weights.iter().sum::<f64>() <= EPS {
            None
        } else {
            Some(WeightedIndex::new(&weights).map_err(|err| Error::Sampling(format!("{err}")))?)
        };
        for &p in &positives {
            let which = match &picker {
                Some(w) => w.sample(&mut rng),
                None => rng.random_range(0..negatives.len()),
            };
            out.push(a, p, negatives[which]);
        }
    }
    if out.is_empty() {
        return Err(Error::Sampling("batch has no anchor-positive pair".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use std::collections::HashSet;

    fn labels(classes: u32, per: usize) -> Vec<u32> {
        (0..classes).flat_map(|c| core::iter::repeat_n(c, per)).collect()
    }

    #[test]
    fn forced_composition() {
        let l = labels(4, 10);
        let batches = class_balanced_batches(&l, 8, 2, 1, 0).unwrap();
        assert_eq!(batches.len(), 5);
        for b in &batches {
            assert_eq!(b.len(), 8);
            let mut counts = BTreeMap::new();
            for &i in b {
                *counts.entry(l[i]).or_insert(0) += 1;
            }
            assert_eq!(counts.len(), 4);
            assert!(counts.values().all(|&c| c == 2));
        }
    }

    #[test]
    fn deterministic_per_seed_and_epoch() {
        let l = labels(6, 13);
        let a = class_balanced_batches(&l, 12, 3, 5, 2).unwrap();
        assert_eq!(a, class_balanced_batches(&l, 12, 3, 5, 2).unwrap());
        assert_ne!(a, class_balanced_batches(&l, 12, 3, 5, 3).unwrap());
        assert_ne!(a, class_balanced_batches(&l, 12, 3, 6, 2).unwrap());
    }

    #[test]
    fn indices_used_at_most_once() {
        let l: Vec<u32> = (0..97).map(|i| (i * 7 % 5) as u32).collect();
        for seed in 0..10 {
            let batches = class_balanced_batches(&l, 10, 5, seed, 0).unwrap();
            let mut seen = HashSet::new();
            for b in &batches {
                for &i in b {
                    assert!(seen.insert(i), "index {i} repeated");
                }
            }
        }
    }

    #[test]
    fn batch_configuration_errors() {
        let l = labels(4, 10);
        assert!(matches!(class_balanced_batches(&l, 9, 2, 0, 0), Err(Error::Config(_))));
        assert!(matches!(class_balanced_batches(&l, 8, 0, 0, 0), Err(Error::Config(_))));
        assert!(matches!(class_balanced_batches(&l, 24, 12, 0, 0), Err(Error::Config(_))));
        assert!(matches!(class_balanced_batches(&l, 10, 2, 0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn single_negative_is_forced() {
        let e = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]).unwrap();
        let t = distance_weighted_triplets(&e, &[0, 0, 1], &SamplerConfig::default(), 3).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.negatives.iter().all(|&n| n == 2));
        t.validate(&[0, 0, 1]).unwrap();
    }

    #[test]
    fn sampling_errors() {
        let e = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let cfg = SamplerConfig::default();
        assert!(matches!(distance_weighted_triplets(&e, &[3, 3], &cfg, 0), Err(Error::Sampling(_))));
        assert!(matches!(distance_weighted_triplets(&e, &[0, 1], &cfg, 0), Err(Error::Sampling(_))));
        assert!(matches!(distance_weighted_triplets(&e, &[0], &cfg, 0), Err(Error::Sampling(_))));
    }

    /// Counts how often each negative is drawn for anchor 0 over `draws` seeds.
    fn negative_frequencies(e: &Matrix, labels: &[u32], cfg: &SamplerConfig, draws: u64) -> BTreeMap<usize, u64> {
        let mut freq = BTreeMap::new();
        for seed in 0..draws {
            let t = distance_weighted_triplets(e, labels, cfg, seed).unwrap();
            *freq.entry(t.negatives[0]).or_insert(0) += 1;
        }
        freq
    }

    fn assert_uniform(freq: &BTreeMap<usize, u64>, options: usize, draws: u64) {
        assert_eq!(freq.len(), options);
        let p = 1.0 / options as f64;
        let mean = draws as f64 * p;
        let sigma = libm::sqrt(draws as f64 * p * (1.0 - p));
        for (&k, &c) in freq {
            assert!((c as f64 - mean).abs() <= 3.0 * sigma, "negative {k}: {c} vs {mean}±{sigma}");
        }
    }

    #[test]
    fn uniform_override_is_uniform() {
        // Negatives at very different distances, weights overridden.
        let e = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [0.8, 0.6], [0.0, 1.0], [-1.0, 0.0]]).unwrap();
        let l = [0, 0, 1, 2, 3];
        let cfg = SamplerConfig { uniform: true, ..SamplerConfig::default() };
        assert_uniform(&negative_frequencies(&e, &l, &cfg, 10_000), 3, 10_000);
    }

    #[test]
    fn equidistant_negatives_are_uniform() {
        // Anchor at the pole, negatives on the equator of the 2-sphere.
        let e = Matrix::from_rows(&[
            [0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, -1.0, 0.0],
        ])
        .unwrap();
        let l = [0, 0, 1, 1, 2, 2];
        assert_uniform(&negative_frequencies(&e, &l, &SamplerConfig::default(), 10_000), 4, 10_000);
    }

    #[test]
    fn weighting_prefers_low_density_distances() {
        // In 8 dimensions the density of distances peaks near √2, so closer
        // negatives are rarer and get more weight.
        let mut rows = vec![[0.0; 8]; 4];
        rows[0][0] = 1.0;
        rows[1][0] = 1.0;
        rows[2][0] = 0.8;
        rows[2][1] = 0.6;
        rows[3][1] = 1.0;
        let e = Matrix::from_rows(&rows).unwrap();
        let freq = negative_frequencies(&e, &[0, 0, 1, 2], &SamplerConfig::default(), 2_000);
        assert!(freq[&2] > freq.get(&3).copied().unwrap_or(0));
    }
}
