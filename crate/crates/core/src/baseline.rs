//! Individual-output losses: triplet, Hinton KD, projected L2 (FitNet) and
//! cross-entropy.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Matrix, Result, Tape, Var};

/// Default triplet margin.
pub const DEFAULT_MARGIN: f64 = 0.2;
/// Default Hinton KD temperature.
pub const DEFAULT_TEMPERATURE: f64 = 4.0;

/// Anchor/positive/negative rows of an embedding batch, index-aligned.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripletIndexBatch {
    pub anchors: Vec<usize>,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

impl TripletIndexBatch {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn push(&mut self, anchor: usize, positive: usize, negative: usize) {
        self.anchors.push(anchor);
        self.positives.push(positive);
        self.negatives.push(negative);
    }

    /// Checks label agreement: `a ≠ p`, `label(a) = label(p) ≠ label(n)`.
    pub fn validate(&self, labels: &[u32]) -> Result<()> {
        if self.positives.len() != self.len() || self.negatives.len() != self.len() {
            return Err(Error::Domain("triplet index lists differ in length".into()));
        }
        for t in 0..self.len() {
            let (a, p, n) = (self.anchors[t], self.positives[t], self.negatives[t]);
            if [a, p, n].iter().any(|&i| i >= labels.len()) {
                return Err(Error::Domain(format!("triplet {t} indexes past {} labels", labels.len())));
            }
            if a == p || labels[a] != labels[p] || labels[a] == labels[n] {
                return Err(Error::Domain(format!("triplet {t} ({a}, {p}, {n}) violates label constraints")));
            }
        }
        Ok(())
    }
}

/// Mean over triplets of `[‖e_a − e_p‖² − ‖e_a − e_n‖² + margin]₊`.
pub fn triplet_loss(tape: &mut Tape, e: Var, trips: &TripletIndexBatch, margin: f64) -> Result<Var> {
    if trips.is_empty() {
        return Err(Error::Domain("triplet loss over an empty triplet batch".into()));
    }
    if margin.is_nan() || margin < 0.0 {
        return Err(Error::Parameter(format!("margin must be non-negative, got {margin}")));
    }
    let a = tape.gather_rows(e, trips.anchors.clone())?;
    let p = tape.gather_rows(e, trips.positives.clone())?;
    let n = tape.gather_rows(e, trips.negatives.clone())?;
    let ap = squared_row_distance(tape, a, p)?;
    let an = squared_row_distance(tape, a, n)?;
    let gap = tape.sub(ap, an)?;
    let shifted = tape.add_scalar(gap, margin);
    let hinge = tape.relu(shifted);
    tape.mean(hinge)
}

fn squared_row_distance(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let d = tape.sub(a, b)?;
    let sq = tape.square(d);
    Ok(tape.row_sum(sq))
}

/// Options for [`hkd_loss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HkdOptions {
    pub temperature: f64,
    /// Multiply the loss by `τ²` (common practice; off by default).
    pub scale_by_temperature_squared: bool,
}

impl Default for HkdOptions {
    fn default() -> Self {
        HkdOptions { temperature: DEFAULT_TEMPERATURE, scale_by_temperature_squared: false }
    }
}

/// Mean over rows of `KL(softmax(t/τ) ‖ softmax(s/τ))`.
pub fn hkd_loss(tape: &mut Tape, teacher_logits: &Matrix, student_logits: Var, opts: HkdOptions) -> Result<Var> {
    let s_shape = tape.value(student_logits).shape();
    if teacher_logits.shape() != s_shape {
        return Err(Error::dim("hkd_loss", teacher_logits.shape(), s_shape));
    }
    let t = tape.constant(teacher_logits.clone());
    let log_p = tape.log_softmax_rows(t, opts.temperature)?;
    let p = tape.exp(log_p);
    let log_q = tape.log_softmax_rows(student_logits, opts.temperature)?;
    let gap = tape.sub(log_p, log_q)?;
    let weighted = tape.mul(p, gap)?;
    let total = tape.sum(weighted)?;
    let mut factor = 1.0 / s_shape.0 as f64;
    if opts.scale_by_temperature_squared {
        factor *= opts.temperature * opts.temperature;
    }
    Ok(tape.scale(total, factor))
}

/// Linear map from student to teacher embedding space, `s·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams {
    /// `d_S × d_T`.
    pub weight: Matrix,
    /// `1 × d_T`.
    pub bias: Matrix,
}

impl ProjectionParams {
    pub fn identity(dim: usize) -> Self {
        ProjectionParams { weight: Matrix::identity(dim), bias: Matrix::zeros(1, dim) }
    }

    pub fn student_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn teacher_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Tape handles of a projection, either leaves (trained) or constants.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionVars {
    pub weight: Var,
    pub bias: Var,
}

/// Mean over rows of `‖t_i − β(s_i)‖²`.
pub fn ikd_l2_loss(tape: &mut Tape, teacher_emb: &Matrix, student_emb: Var, proj: ProjectionVars) -> Result<Var> {
    let mapped = tape.matmul(student_emb, proj.weight)?;
    let mapped = tape.add_row(mapped, proj.bias)?;
    let m_shape = tape.value(mapped).shape();
    if m_shape != teacher_emb.shape() {
        return Err(Error::dim("ikd_l2_loss", teacher_emb.shape(), m_shape));
    }
    let t = tape.constant(teacher_emb.clone());
    let d = tape.sub(t, mapped)?;
    let sq = tape.square(d);
    let total = tape.sum(sq)?;
    Ok(tape.scale(total, 1.0 / m_shape.0 as f64))
}

/// Mean negative log-probability of the true class.
pub fn cross_entropy_loss(tape: &mut Tape, logits: Var, labels: &[u32]) -> Result<Var> {
    let classes = tape.value(logits).cols();
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(Error::Domain(format!("label {bad} out of range for {classes} classes")));
    }
    let log_p = tape.log_softmax_rows(logits, 1.0)?;
    let picked = tape.pick_per_row(log_p, labels.iter().map(|&l| l as usize).collect())?;
    let mean = tape.mean(picked)?;
    Ok(tape.scale(mean, -1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn value(t: &Tape, v: Var) -> f64 {
        t.value(v).item().unwrap()
    }

    fn single(a: usize, p: usize, n: usize) -> TripletIndexBatch {
        let mut b = TripletIndexBatch::default();
        b.push(a, p, n);
        b
    }

    #[test]
    fn triplet_hinge_cases() {
        let mut t = Tape::new();
        let e = t.leaf(m(&[&[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0]]));
        let l = triplet_loss(&mut t, e, &single(0, 1, 2), 0.2).unwrap();
        assert_eq!(value(&t, l), 0.0);

        let e = t.leaf(m(&[&[0.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]]));
        let l = triplet_loss(&mut t, e, &single(0, 1, 2), 0.2).unwrap();
        assert!((value(&t, l) - 0.2).abs() < 1e-15);

        assert!(matches!(
            triplet_loss(&mut t, e, &TripletIndexBatch::default(), 0.2),
            Err(Error::Domain(_))
        ));
        assert!(matches!(triplet_loss(&mut t, e, &single(0, 1, 2), -0.1), Err(Error::Parameter(_))));
    }

    #[test]
    fn triplet_validation() {
        let labels = [0, 0, 1];
        assert!(single(0, 1, 2).validate(&labels).is_ok());
        assert!(single(0, 0, 2).validate(&labels).is_err());
        assert!(single(0, 2, 1).validate(&labels).is_err());
        assert!(single(0, 1, 5).validate(&labels).is_err());
    }

    #[test]
    fn hkd_cases() {
        let mut t = Tape::new();
        let logits = m(&[&[0.3, -1.0, 2.0], &[1.0, 1.0, 0.0]]);
        let s = t.leaf(logits.clone());
        let l = hkd_loss(&mut t, &logits, s, HkdOptions::default()).unwrap();
        assert!(value(&t, l).abs() < 1e-15);

        let s = t.leaf(m(&[&[0.0, libm::log(3.0)]]));
        let opts = HkdOptions { temperature: 1.0, scale_by_temperature_squared: false };
        let l = hkd_loss(&mut t, &m(&[&[0.0, 0.0]]), s, opts).unwrap();
        let expected = 0.5 * libm::log(2.0) + 0.5 * libm::log(2.0 / 3.0);
        assert!((value(&t, l) - expected).abs() < 1e-15);
        assert!((expected - 0.14384).abs() < 1e-5);

        let opts = HkdOptions { temperature: 1.0, scale_by_temperature_squared: true };
        let l2 = hkd_loss(&mut t, &m(&[&[0.0, 0.0]]), s, opts).unwrap();
        assert_eq!(value(&t, l2), value(&t, l));

        let bad = t.leaf(Matrix::zeros(1, 3));
        assert!(matches!(
            hkd_loss(&mut t, &m(&[&[0.0, 0.0]]), bad, HkdOptions::default()),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn hkd_decreases_with_temperature() {
        let teacher = m(&[&[2.0, -1.0, 0.5], &[0.0, 3.0, -2.0]]);
        let student = m(&[&[-1.0, 1.0, 0.0], &[1.5, 0.0, 0.5]]);
        let mut last = f64::INFINITY;
        for tau in [1.0, 4.0, 16.0, 100.0] {
            let mut t = Tape::new();
            let s = t.leaf(student.clone());
            let opts = HkdOptions { temperature: tau, scale_by_temperature_squared: false };
            let v = hkd_loss(&mut t, &teacher, s, opts).unwrap();
            let l = value(&t, v);
            assert!(l < last && l >= 0.0, "tau {tau}: {l} vs {last}");
            last = l;
        }
    }

    #[test]
    fn ikd_l2_cases() {
        let mut t = Tape::new();
        let emb = m(&[&[1.0, 2.0], &[-0.5, 0.0]]);
        let s = t.leaf(emb.clone());
        let proj = ProjectionParams::identity(2);
        let pv = ProjectionVars { weight: t.constant(proj.weight), bias: t.constant(proj.bias) };
        let l = ikd_l2_loss(&mut t, &emb, s, pv).unwrap();
        assert_eq!(value(&t, l), 0.0);

        let s = t.leaf(m(&[&[0.0, 0.0]]));
        let l = ikd_l2_loss(&mut t, &m(&[&[1.0, 0.0]]), s, pv).unwrap();
        assert_eq!(value(&t, l), 1.0);

        let s3 = t.leaf(m(&[&[0.0, 0.0, 0.0]]));
        assert!(matches!(ikd_l2_loss(&mut t, &m(&[&[1.0, 0.0]]), s3, pv), Err(Error::Dimension { .. })));
        let pv3 = ProjectionVars { weight: t.constant(Matrix::zeros(2, 3)), bias: t.constant(Matrix::zeros(1, 3)) };
        assert!(matches!(ikd_l2_loss(&mut t, &m(&[&[1.0, 0.0]]), s, pv3), Err(Error::Dimension { .. })));
    }

    #[test]
    fn cross_entropy_cases() {
        let mut t = Tape::new();
        let x = t.leaf(m(&[&[100.0, 0.0, 0.0], &[0.0, 0.0, 100.0]]));
        let l = cross_entropy_loss(&mut t, x, &[0, 2]).unwrap();
        assert!(value(&t, l) < 1e-10);

        for c in [2usize, 3, 7, 10] {
            let x = t.leaf(Matrix::filled(4, c, 0.37));
            let l = cross_entropy_loss(&mut t, x, &[0, 1, 0, 1]).unwrap();
            assert!((value(&t, l) - libm::log(c as f64)).abs() < 1e-12);
        }
        let x = t.leaf(Matrix::zeros(2, 3));
        assert!(matches!(cross_entropy_loss(&mut t, x, &[0, 3]), Err(Error::Domain(_))));
    }
}
