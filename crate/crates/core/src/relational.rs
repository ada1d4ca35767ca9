//! Relational distillation losses.
//!
//! Instead of matching a teacher's outputs one example at a time, these
//! losses match *relations* among the examples of a mini-batch:
//!
//! * distance-wise: for every pair, the Euclidean distance divided by the
//!   mean pair distance of the batch (computed separately for teacher and
//!   student, so differing output scales and dimensions do not matter);
//! * angle-wise: for every triple, the cosine of the angle at the middle
//!   example.
//!
//! Teacher and student potentials are compared with a unit-threshold Huber
//! penalty and averaged over all tuples. Pairs are unordered and angle
//! triples are deduplicated over swapping the two flanks; both potentials are
//! symmetric under those swaps, so this only rescales the sum.
//!
//! Teacher potentials are built from constants and never receive gradient.
//! On the student side the gradient flows through the batch mean distance
//! as well as through each individual distance.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Matrix, Result, Tape, Var, EPS};

/// Embeddings (one row per example) with aligned integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub embeddings: Matrix,
    pub labels: Vec<u32>,
}

impl EmbeddingBatch {
    pub fn new(embeddings: Matrix, labels: Vec<u32>) -> Result<Self> {
        if embeddings.rows() != labels.len() {
            return Err(Error::Domain(format!(
                "{} embeddings but {} labels",
                embeddings.rows(),
                labels.len()
            )));
        }
        Ok(EmbeddingBatch { embeddings, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }
}

/// A triple `(i, j, k)` whose angle is measured at the vertex `j`; `i < k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AngleTriplet {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

/// Every tuple used by the relational losses for a batch of `n` examples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TupleIndexSet {
    pub pairs: Vec<(usize, usize)>,
    pub angle_triplets: Vec<AngleTriplet>,
}

impl TupleIndexSet {
    pub fn for_batch(n: usize) -> Result<Self> {
        Ok(TupleIndexSet { pairs: enumerate_pairs(n)?, angle_triplets: enumerate_angle_triplets(n)? })
    }
}

/// All `(i, j)` with `i < j < n`, lexicographically.
pub fn enumerate_pairs(n: usize) -> Result<Vec<(usize, usize)>> {
    if n < 2 {
        return Err(Error::Domain(format!("pair enumeration needs at least 2 examples, got {n}")));
    }
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push((i, j));
        }
    }
    Ok(out)
}

/// For every vertex `j`, every flank pair `i < k` with `i, k ≠ j`;
/// `n(n−1)(n−2)/2` triples ordered by vertex, then `i`, then `k`.
pub fn enumerate_angle_triplets(n: usize) -> Result<Vec<AngleTriplet>> {
    if n < 3 {
        return Err(Error::Domain(format!("angle enumeration needs at least 3 examples, got {n}")));
    }
    let mut out = Vec::with_capacity(n * (n - 1) * (n - 2) / 2);
    for j in 0..n {
        for i in 0..n {
            if i == j {
                continue;
            }
            for k in i + 1..n {
                if k != j {
                    out.push(AngleTriplet { i, j, k });
                }
            }
        }
    }
    Ok(out)
}

/// Pair distances of `e` divided by their mean (guarded below by `EPS`),
/// as a `pairs.len() × 1` column.
pub fn distance_potentials(tape: &mut Tape, e: Var, pairs: &[(usize, usize)]) -> Result<Var> {
    if pairs.is_empty() {
        return Err(Error::Domain("no pairs to measure".into()));
    }
    let (left, right): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
    let a = tape.gather_rows(e, left)?;
    let b = tape.gather_rows(e, right)?;
    let diff = tape.sub(a, b)?;
    let dist = tape.row_norm(diff);
    let mu = tape.mean(dist)?;
    let mu = tape.max_scalar(mu, EPS);
    tape.div_by_scalar(dist, mu)
}

/// Cosine of the angle at `t.j` for each triple, as a `triplets.len() × 1`
/// column. Zero-length edges normalize to the zero vector, giving 0.
pub fn angle_potentials(tape: &mut Tape, e: Var, triplets: &[AngleTriplet]) -> Result<Var> {
    if triplets.is_empty() {
        return Err(Error::Domain("no triplets to measure".into()));
    }
    let n = tape.value(e).rows();
    // Unit vectors for every ordered pair; row a·n + b holds (e_a − e_b)/‖·‖.
    let heads: Vec<usize> = (0..n * n).map(|r| r / n).collect();
    let tails: Vec<usize> = (0..n * n).map(|r| r % n).collect();
    let h = tape.gather_rows(e, heads)?;
    let t = tape.gather_rows(e, tails)?;
    let d = tape.sub(h, t)?;
    let unit = tape.row_l2_normalize(d);
    let ij = triplets.iter().map(|t| t.i * n + t.j).collect();
    let kj = triplets.iter().map(|t| t.k * n + t.j).collect();
    let u = tape.gather_rows(unit, ij)?;
    let v = tape.gather_rows(unit, kj)?;
    let prod = tape.mul(u, v)?;
    Ok(tape.row_sum(prod))
}

fn check_batch(teacher: &Matrix, student: &Matrix, min: usize, what: &str) -> Result<()> {
    if teacher.rows() != student.rows() {
        return Err(Error::Domain(format!(
            "teacher has {} examples but student has {}",
            teacher.rows(),
            student.rows()
        )));
    }
    if student.rows() < min {
        return Err(Error::Domain(format!(
            "{what} needs at least {min} examples, got {}",
            student.rows()
        )));
    }
    Ok(())
}

/// Mean Huber penalty between teacher and student distance potentials.
pub fn rkd_distance_loss(tape: &mut Tape, teacher: &Matrix, student: Var) -> Result<Var> {
    check_batch(teacher, tape.value(student), 2, "distance-wise loss")?;
    let pairs = enumerate_pairs(teacher.rows())?;
    let t = tape.constant(teacher.clone());
    let t_pot = distance_potentials(tape, t, &pairs)?;
    let s_pot = distance_potentials(tape, student, &pairs)?;
    let h = tape.huber(s_pot, t_pot)?;
    tape.mean(h)
}

/// Mean Huber penalty between teacher and student angle potentials.
pub fn rkd_angle_loss(tape: &mut Tape, teacher: &Matrix, student: Var) -> Result<Var> {
    check_batch(teacher, tape.value(student), 3, "angle-wise loss")?;
    let triplets = enumerate_angle_triplets(teacher.rows())?;
    let t = tape.constant(teacher.clone());
    let t_pot = angle_potentials(tape, t, &triplets)?;
    let s_pot = angle_potentials(tape, student, &triplets)?;
    let h = tape.huber(s_pot, t_pot)?;
    tape.mean(h)
}

/// Weights of the combined distance + angle objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RkdWeights {
    pub distance: f64,
    pub angle: f64,
}

impl RkdWeights {
    /// Metric-learning setting.
    pub const METRIC: RkdWeights = RkdWeights { distance: 1.0, angle: 2.0 };
    /// Classification setting, used alongside Hinton KD.
    pub const CLASSIFICATION: RkdWeights = RkdWeights { distance: 25.0, angle: 50.0 };
}

/// `distance · rkd_distance_loss + angle · rkd_angle_loss`; a zero-weight
/// term is not evaluated at all.
pub fn rkd_da_loss(tape: &mut Tape, teacher: &Matrix, student: Var, w: RkdWeights) -> Result<Var> {
    if !(w.distance >= 0.0 && w.angle >= 0.0) || (w.distance == 0.0 && w.angle == 0.0) {
        return Err(Error::Config(format!(
            "relational weights must be non-negative and not both zero, got {} and {}",
            w.distance, w.angle
        )));
    }
    let d = if w.distance > 0.0 {
        let l = rkd_distance_loss(tape, teacher, student)?;
        Some(tape.scale(l, w.distance))
    } else {
        None
    };
    let a = if w.angle > 0.0 {
        let l = rkd_angle_loss(tape, teacher, student)?;
        Some(tape.scale(l, w.angle))
    } else {
        None
    };
    match (d, a) {
        (Some(d), Some(a)) => tape.add(d, a),
        (Some(x), None) | (None, Some(x)) => Ok(x),
        (None, None) => unreachable!("weights validated"),
    }
}
