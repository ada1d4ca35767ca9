//! Batched implementations against naive nested-loop references.

mod common;

use common::*;
use rand::Rng;
use rkd_core::baseline::{cross_entropy_loss, hkd_loss, triplet_loss, HkdOptions, TripletIndexBatch};
use rkd_core::eval::recall_at_k;
use rkd_core::relational::{distance_potentials, enumerate_pairs, rkd_angle_loss, rkd_distance_loss};
use rkd_core::{Matrix, Tape};

fn rkd_pair(t: &Matrix, s: &Matrix) -> (f64, f64) {
    let mut tape = Tape::new();
    let sv = tape.leaf(s.clone());
    let d = rkd_distance_loss(&mut tape, t, sv).unwrap();
    let a = rkd_angle_loss(&mut tape, t, sv).unwrap();
    (scalar(&tape, d), scalar(&tape, a))
}

#[test]
fn relational_losses_match_nested_loops() {
    for seed in 0..50 {
        let mut r = rng(seed);
        for n in 3..=8 {
            let d = r.random_range(1..=4);
            let t = gaussian(&mut r, n, d);
            let ds = r.random_range(1..=4);
            let s = gaussian(&mut r, n, ds);
            let (dist, angle) = rkd_pair(&t, &s);
            let (nd, na) = (naive_rkd_distance(&t, &s), naive_rkd_angle(&t, &s));
            assert!((dist - nd).abs() <= 1e-10, "seed {seed} n {n}: {dist} vs {nd}");
            assert!((angle - na).abs() <= 1e-10, "seed {seed} n {n}: {angle} vs {na}");
        }
    }
}

#[test]
fn distance_loss_on_two_points_is_zero() {
    let mut r = rng(7);
    let t = gaussian(&mut r, 2, 3);
    let s = gaussian(&mut r, 2, 5);
    let mut tape = Tape::new();
    let sv = tape.leaf(s);
    let d = rkd_distance_loss(&mut tape, &t, sv).unwrap();
    assert!(scalar(&tape, d).abs() <= 1e-12);
}

#[test]
fn distance_potentials_average_to_one() {
    for seed in 0..100 {
        let mut r = rng(1000 + seed);
        let n = r.random_range(2..=12);
        let d = r.random_range(1..=6);
        let e = uniform(&mut r, n, d, -5.0, 5.0);
        let pairs = enumerate_pairs(n).unwrap();
        let mut tape = Tape::new();
        let ev = tape.constant(e);
        let psi = distance_potentials(&mut tape, ev, &pairs).unwrap();
        let vals = tape.value(psi).as_slice();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((mean - 1.0).abs() <= 1e-9, "seed {seed}: {mean}");
    }
}

#[test]
fn recall_matches_sorted_reference() {
    for seed in 0..50 {
        let mut r = rng(2000 + seed);
        for n in [2, 3, 5, 9, 17, 33, 64] {
            let classes = r.random_range(1..=4u32);
            let labels: Vec<u32> = (0..n).map(|_| r.random_range(0..classes)).collect();
            // Small integer grid so exact distance ties are common.
            let e = Matrix::from_fn(n, 2, |_, _| r.random_range(0..3) as f64);
            let ks: Vec<usize> = [1, 2, 4, 8, 16, 32].into_iter().filter(|&k| k < n).collect();
            let got = recall_at_k(&e, &labels, &ks).unwrap();
            for (k, g) in ks.iter().zip(&got) {
                assert_eq!(*g, naive_recall(&e, &labels, *k), "seed {seed} n {n} k {k}");
            }
            let g = gaussian(&mut r, n, 3);
            let got = recall_at_k(&g, &labels, &ks).unwrap();
            for (k, v) in ks.iter().zip(&got) {
                assert_eq!(*v, naive_recall(&g, &labels, *k));
            }
        }
    }
}

#[test]
fn random_two_class_recall_is_chance() {
    let mut r = rng(5);
    let n = 4000;
    let labels: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
    let e = gaussian(&mut r, n, 4);
    let got = recall_at_k(&e, &labels, &[1]).unwrap()[0];
    assert!((got - 0.5).abs() <= 0.05, "{got}");
}

#[test]
fn triplet_hkd_and_cross_entropy_match_direct_formulas() {
    for seed in 0..20 {
        let mut r = rng(3000 + seed);
        let n = 6;
        let e = gaussian(&mut r, n, 3);
        let labels = [0u32, 0, 1, 1, 2, 2];
        let mut trips = TripletIndexBatch::default();
        for a in 0..n {
            let p = a ^ 1;
            let neg = (a + 2 + r.random_range(0..4)) % n;
            let neg = if labels[neg] == labels[a] { (neg + 2) % n } else { neg };
            trips.push(a, p, neg);
        }
        trips.validate(&labels).unwrap();
        let margin = 0.2;
        let sq = |i: usize, j: usize| dist(e.row(i), e.row(j)).powi(2);
        let expected = (0..trips.len())
            .map(|t| (sq(trips.anchors[t], trips.positives[t]) - sq(trips.anchors[t], trips.negatives[t]) + margin).max(0.0))
            .sum::<f64>()
            / trips.len() as f64;
        let mut tape = Tape::new();
        let ev = tape.leaf(e.clone());
        let l = triplet_loss(&mut tape, ev, &trips, margin).unwrap();
        assert!((scalar(&tape, l) - expected).abs() <= 1e-12);

        let tl = gaussian(&mut r, n, 4);
        let sl = gaussian(&mut r, n, 4);
        let tau = 4.0;
        let soft = |row: &[f64]| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: Vec<f64> = row.iter().map(|v| ((v - m) / tau).exp()).collect();
            let s: f64 = z.iter().sum();
            z.into_iter().map(|v| v / s).collect::<Vec<_>>()
        };
        let kl = (0..n)
            .map(|i| {
                let (p, q) = (soft(tl.row(i)), soft(sl.row(i)));
                p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum::<f64>()
            })
            .sum::<f64>()
            / n as f64;
        let mut tape = Tape::new();
        let sv = tape.leaf(sl.clone());
        let h = hkd_loss(&mut tape, &tl, sv, HkdOptions::default()).unwrap();
        assert!((scalar(&tape, h) - kl).abs() <= 1e-12);

        let xent = (0..n)
            .map(|i| {
                let row = sl.row(i);
                let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
                lse - row[labels[i] as usize]
            })
            .sum::<f64>()
            / n as f64;
        let mut tape = Tape::new();
        let sv = tape.leaf(sl);
        let c = cross_entropy_loss(&mut tape, sv, &labels).unwrap();
        assert!((scalar(&tape, c) - xent).abs() <= 1e-12);
    }
}
