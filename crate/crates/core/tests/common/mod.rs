//! Shared helpers: seeded random matrices, similarity transforms and naive
//! nested-loop references for the batched implementations.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rkd_core::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Random orthogonal matrix by Gram-Schmidt on a Gaussian matrix.
pub fn orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    loop {
        let g = gaussian(rng, d, d);
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
        let mut ok = true;
        for i in 0..d {
            let mut v = g.row(i).to_vec();
            for u in &q {
                let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
            }
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if n < 1e-6 {
                ok = false;
                break;
            }
            v.iter_mut().for_each(|a| *a /= n);
            q.push(v);
        }
        if ok {
            return Matrix::from_fn(d, d, |i, j| q[i][j]);
        }
    }
}

/// `s · e · R + 1 cᵀ` for a random rotation/reflection `R`, offset `c` and
/// scale `s ∈ [0.1, 10]`.
pub fn random_similarity(rng: &mut ChaCha8Rng, e: &Matrix) -> Matrix {
    let r = orthogonal(rng, e.cols());
    let s = rng.random_range(0.1..10.0);
    let c = gaussian(rng, 1, e.cols());
    let mut out = e.matmul(&r).unwrap().scale(s);
    for i in 0..out.rows() {
        out.row_mut(i).iter_mut().zip(c.row(0)).for_each(|(v, o)| *v += 3.0 * o);
    }
    out
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn huber(x: f64, y: f64) -> f64 {
    let r = (x - y).abs();
    if r <= 1.0 {
        0.5 * r * r
    } else {
        r - 0.5
    }
}

/// ψ_D for every pair i < j, in nested-loop order.
pub fn naive_distance_potentials(e: &Matrix) -> Vec<f64> {
    let n = e.rows();
    let mut d = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(dist(e.row(i), e.row(j)));
        }
    }
    let mu = d.iter().sum::<f64>() / d.len() as f64;
    let mu = if mu > 1e-12 { mu } else { 1e-12 };
    d.into_iter().map(|x| x / mu).collect()
}

/// ψ_A for every vertex j and every pair i < k with i, k ≠ j.
pub fn naive_angle_potentials(e: &Matrix) -> Vec<f64> {
    let n = e.rows();
    let mut out = Vec::new();
    for j in 0..n {
        for i in 0..n {
            for k in (i + 1)..n {
                if i == j || k == j {
                    continue;
                }
                let u: Vec<f64> = e.row(i).iter().zip(e.row(j)).map(|(a, b)| a - b).collect();
                let v: Vec<f64> = e.row(k).iter().zip(e.row(j)).map(|(a, b)| a - b).collect();
                let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
                let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
                out.push(u.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / (nu * nv));
            }
        }
    }
    out
}

pub fn naive_rkd_distance(teacher: &Matrix, student: &Matrix) -> f64 {
    let t = naive_distance_potentials(teacher);
    let s = naive_distance_potentials(student);
    t.iter().zip(&s).map(|(a, b)| huber(*b, *a)).sum::<f64>() / t.len() as f64
}

pub fn naive_rkd_angle(teacher: &Matrix, student: &Matrix) -> f64 {
    let t = naive_angle_potentials(teacher);
    let s = naive_angle_potentials(student);
    t.iter().zip(&s).map(|(a, b)| huber(*b, *a)).sum::<f64>() / t.len() as f64
}

/// Recall@K by sorting every query's neighbours on (distance, index).
pub fn naive_recall(e: &Matrix, labels: &[u32], k: usize) -> f64 {
    let n = e.rows();
    let mut hits = 0;
    for q in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != q)
            .map(|j| (e.row(j).iter().zip(e.row(q)).map(|(a, b)| (a - b) * (a - b)).sum(), j))
            .collect();
        others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        if others[..k].iter().any(|&(_, j)| labels[j] == labels[q]) {
            hits += 1;
        }
    }
    hits as f64 / n as f64
}

pub fn scalar(tape: &rkd_core::Tape, v: rkd_core::Var) -> f64 {
    tape.value(v).item().expect("scalar")
}
