//! Relational divergence between two embeddings of the same examples.
//!
//! Evaluates the distance-wise and angle-wise losses between two sets
//! (the first in the teacher role) and histograms both potentials. This path
//! streams over tuples instead of building a tape, so it stays within memory
//! for the cubic number of angle triples.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;

use crate::math;
use crate::sampling::epoch_rng;
use crate::tape::row_norm;
use crate::{Error, Matrix, Result, EPS};

/// Largest number of rows compared; bigger inputs are subsampled.
pub const MAX_ROWS: usize = 512;
pub const BINS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn new(lo: f64, hi: f64) -> Self {
        Histogram { lo, hi, counts: vec![0; BINS] }
    }

    fn add(&mut self, v: f64) {
        let t = (v - self.lo) / (self.hi - self.lo);
        let bin = ((t * BINS as f64) as usize).min(BINS - 1);
        self.counts[bin] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DivergenceReport {
    pub rows_total: usize,
    pub rows_used: usize,
    /// Rows actually compared, when the input was subsampled.
    pub subsample: Option<Vec<usize>>,
    pub rkd_distance: f64,
    /// `None` for fewer than three rows.
    pub rkd_angle: Option<f64>,
    pub distance_hist_a: Histogram,
    pub distance_hist_b: Histogram,
    pub angle_hist_a: Option<Histogram>,
    pub angle_hist_b: Option<Histogram>,
}

/// Compares `a` (teacher role) with `b`. Dimensions may differ; row counts
/// may not. Inputs above [`MAX_ROWS`] rows are reduced to a seeded subsample
/// of the same rows in both sets.
pub fn relational_divergence(a: &Matrix, b: &Matrix, seed: u64) -> Result<DivergenceReport> {
    if a.rows() != b.rows() {
        return Err(Error::Domain(alloc::format!(
            "sets have {} and {} rows; relations need the same examples",
            a.rows(),
            b.rows()
        )));
    }
    if a.rows() < 2 {
        return Err(Error::Domain(alloc::format!("need at least 2 rows, got {}", a.rows())));
    }
    let rows_total = a.rows();
    let (a, b, subsample) = if rows_total > MAX_ROWS {
        let mut rng = epoch_rng(seed, 0);
        let mut pick = index::sample(&mut rng, rows_total, MAX_ROWS).into_vec();
        pick.sort_unstable();
        (a.select_rows(&pick), b.select_rows(&pick), Some(pick))
    } else {
        (a.clone(), b.clone(), None)
    };
    let n = a.rows();

    let pa = distance_potentials(&a);
    let pb = distance_potentials(&b);
    let rkd_distance = pa.iter().zip(&pb).map(|(&t, &s)| math::huber(s, t)).sum::<f64>() / pa.len() as f64;
    let hi = pa.iter().chain(&pb).copied().fold(0.0, f64::max);
    let hi = if hi > 0.0 { hi } else { 1.0 };
    let (mut distance_hist_a, mut distance_hist_b) = (Histogram::new(0.0, hi), Histogram::new(0.0, hi));
    pa.iter().for_each(|&v| distance_hist_a.add(v));
    pb.iter().for_each(|&v| distance_hist_b.add(v));

    let (mut rkd_angle, mut angle_hist_a, mut angle_hist_b) = (None, None, None);
    if n >= 3 {
        let (mut ha, mut hb) = (Histogram::new(-1.0, 1.0), Histogram::new(-1.0, 1.0));
        let mut total = 0.0;
        let mut count = 0u64;
        let (mut ua, mut ub) = (Matrix::zeros(n, a.cols()), Matrix::zeros(n, b.cols()));
        for j in 0..n {
            unit_edges(&a, j, &mut ua);
            unit_edges(&b, j, &mut ub);
            for i in 0..n {
                if i == j {
                    continue;
                }
                for k in i + 1..n {
                    if k == j {
                        continue;
                    }
                    let ta = dot(ua.row(i), ua.row(k));
                    let sb = dot(ub.row(i), ub.row(k));
                    ha.add(ta);
                    hb.add(sb);
                    total += math::huber(sb, ta);
                    count += 1;
                }
            }
        }
        rkd_angle = Some(total / count as f64);
        angle_hist_a = Some(ha);
        angle_hist_b = Some(hb);
    }

    Ok(DivergenceReport {
        rows_total,
        rows_used: n,
        subsample,
        rkd_distance,
        rkd_angle,
        distance_hist_a,
        distance_hist_b,
        angle_hist_a,
        angle_hist_b,
    })
}

fn distance_potentials(e: &Matrix) -> Vec<f64> {
    let n = e.rows();
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = e.row(i).iter().zip(e.row(j)).map(|(x, y)| (x - y) * (x - y)).sum();
            d.push(math::sqrt(s));
        }
    }
    let mu = (d.iter().sum::<f64>() / d.len() as f64).max(EPS);
    d.iter_mut().for_each(|v| *v /= mu);
    d
}

/// Row `i` of `out` := (e_i − e_j) / max(‖e_i − e_j‖, EPS).
fn unit_edges(e: &Matrix, j: usize, out: &mut Matrix) {
    for i in 0..e.rows() {
        let row = out.row_mut(i);
        for ((o, x), y) in row.iter_mut().zip(e.row(i)).zip(e.row(j)) {
            *o = x - y;
        }
        let norm = row_norm(row).max(EPS);
        row.iter_mut().for_each(|v| *v /= norm);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_scaled_sets_do_not_diverge() {
        let a = Matrix::from_fn(9, 3, |i, j| libm::cos((i * 5 + j * 3) as f64));
        let r = relational_divergence(&a, &a, 0).unwrap();
        assert_eq!(r.rkd_distance, 0.0);
        assert_eq!(r.rkd_angle, Some(0.0));
        let r = relational_divergence(&a, &a.scale(2.0), 0).unwrap();
        assert!(r.rkd_distance < 1e-12);
        assert!(r.rkd_angle.unwrap() < 1e-12);
        assert_eq!(r.distance_hist_a.total(), 36);
        assert_eq!(r.angle_hist_b.as_ref().unwrap().total(), 9 * 8 * 7 / 2);
        assert!(r.subsample.is_none());
    }

    #[test]
    fn hand_built_distance_example() {
        let a = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).unwrap();
        let r = relational_divergence(&a, &b, 0).unwrap();
        assert!((r.rkd_distance - 0.0625 / 3.0).abs() < 1e-15);
        // Collinear points: every angle is 0° or 180° in both sets.
        assert_eq!(r.rkd_angle, Some(0.0));
    }

    #[test]
    fn mismatched_and_tiny_inputs() {
        assert!(relational_divergence(&Matrix::zeros(3, 2), &Matrix::zeros(4, 2), 0).is_err());
        assert!(relational_divergence(&Matrix::zeros(1, 2), &Matrix::zeros(1, 2), 0).is_err());
        let r = relational_divergence(&Matrix::zeros(2, 2), &Matrix::zeros(2, 5), 0).unwrap();
        assert_eq!(r.rkd_angle, None);
        assert_eq!(r.rkd_distance, 0.0);
    }

    #[test]
    fn large_inputs_are_subsampled() {
        let a = Matrix::from_fn(520, 2, |i, j| libm::sin((i * 2 + j) as f64 * 0.37));
        let r = relational_divergence(&a, &a.scale(3.0), 4).unwrap();
        assert_eq!(r.rows_total, 520);
        assert_eq!(r.rows_used, 512);
        let pick = r.subsample.clone().unwrap();
        assert_eq!(pick.len(), 512);
        assert_eq!(r, relational_divergence(&a, &a.scale(3.0), 4).unwrap());
        assert!(r.rkd_angle.unwrap() < 1e-12);
    }
}
