//! Retrieval and classification metrics.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Matrix, Result};

/// Recall@K for every K in `ks`.
///
/// Each row queries all other rows ranked by Euclidean distance, ties broken
/// by lower index. A query scores 1 at K when one of its K nearest
/// neighbours shares its label; recall is the mean over queries.
pub fn recall_at_k(embeddings: &Matrix, labels: &[u32], ks: &[usize]) -> Result<Vec<f64>> {
    let n = embeddings.rows();
    if labels.len() != n {
        return Err(Error::Domain(format!("{n} embeddings but {} labels", labels.len())));
    }
    if n < 2 {
        return Err(Error::Domain(format!("recall needs at least 2 embeddings, got {n}")));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k >= n) {
        return Err(Error::Domain(format!("K = {k} must lie in 1..{n}")));
    }
    let mut hits = vec![0usize; ks.len()];
    let mut dist = vec![0.0; n];
    for q in 0..n {
        let query = embeddings.row(q);
        for (j, d) in dist.iter_mut().enumerate() {
            *d = embeddings.row(j).iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
        }
        // Closest same-label neighbour, first index on ties.
        let Some(best) = (0..n)
            .filter(|&j| j != q && labels[j] == labels[q])
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)))
        else {
            continue;
        };
        let rank = (0..n)
            .filter(|&j| j != q && (dist[j] < dist[best] || (dist[j] == dist[best] && j < best)))
            .count();
        for (h, &k) in hits.iter_mut().zip(ks) {
            if rank < k {
                *h += 1;
            }
        }
    }
    Ok(hits.into_iter().map(|h| h as f64 / n as f64).collect())
}

/// Fraction of rows whose arg-max logit (first on ties) is the label.
pub fn accuracy(logits: &Matrix, labels: &[u32]) -> Result<f64> {
    if logits.rows() != labels.len() || labels.is_empty() {
        return Err(Error::Domain(format!("{} logit rows for {} labels", logits.rows(), labels.len())));
    }
    let correct = (0..logits.rows())
        .filter(|&i| {
            let row = logits.row(i);
            let arg = (0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best });
            arg == labels[i] as usize
        })
        .count();
    Ok(correct as f64 / labels.len() as f64)
}
