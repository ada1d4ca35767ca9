//! Labelled datasets and the Gaussian-cluster generator.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Matrix, Result};

/// Feature rows with aligned class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<u32>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<u32>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Domain(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        Ok(Dataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m as usize + 1)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Stratified split: within every class a seeded `fraction` of the
    /// examples (rounded down) goes to the second part.
    pub fn split_per_class(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Parameter(format!("split fraction must lie in [0, 1], got {fraction}")));
        }
        let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            by_class.entry(l).or_default().push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut keep, mut held) = (Vec::new(), Vec::new());
        for mut members in by_class.into_values() {
            members.shuffle(&mut rng);
            let cut = (members.len() as f64 * fraction) as usize;
            held.extend_from_slice(&members[..cut]);
            keep.extend_from_slice(&members[cut..]);
        }
        keep.sort_unstable();
        held.sort_unstable();
        Ok((self.subset(&keep), self.subset(&held)))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub ambient_dim: usize,
    /// Standard deviation of the isotropic noise around each center.
    pub cluster_spread: f64,
    /// Radius of the sphere the class centers are drawn on.
    pub inter_class_separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.per_class == 0 || self.ambient_dim == 0 {
            return Err(Error::Config(format!(
                "classes, per-class count and dimension must be positive, got {}, {}, {}",
                self.classes, self.per_class, self.ambient_dim
            )));
        }
        if !(self.cluster_spread >= 0.0 && self.cluster_spread.is_finite()) {
            return Err(Error::Config(format!("cluster spread must be non-negative, got {}", self.cluster_spread)));
        }
        if !(self.inter_class_separation > 0.0 && self.inter_class_separation.is_finite()) {
            return Err(Error::Config(format!(
                "class separation must be positive, got {}",
                self.inter_class_separation
            )));
        }
        Ok(())
    }

    /// Non-fatal problems with the spec.
    pub fn warning(&self) -> Option<String> {
        (self.cluster_spread >= self.inter_class_separation).then(|| {
            format!(
                "cluster spread {} is not below the class separation {}; classes will overlap heavily",
                self.cluster_spread, self.inter_class_separation
            )
        })
    }
}

/// Class centers uniformly on the sphere of radius `inter_class_separation`,
/// points `center + N(0, spread² I)`, grouped by class. Deterministic per seed.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.ambient_dim;
    let mut centers = Matrix::zeros(spec.classes, dim);
    for c in 0..spec.classes {
        loop {
            let row = centers.row_mut(c);
            for v in row.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let norm = libm::sqrt(row.iter().map(|v| v * v).sum());
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v *= spec.inter_class_separation / norm);
                break;
            }
        }
    }
    let n = spec.classes * spec.per_class;
    let mut features = Matrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..spec.classes {
        for p in 0..spec.per_class {
            let row = features.row_mut(c * spec.per_class + p);
            for (v, &center) in row.iter_mut().zip(centers.row(c)) {
                let noise: f64 = StandardNormal.sample(&mut rng);
                *v = center + spec.cluster_spread * noise;
            }
            labels.push(c as u32);
        }
    }
    Dataset::new(features, labels)
}
