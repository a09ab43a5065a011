//! Rank agreement metrics: Kendall tau over aligned value vectors, the
//! size-weighted per-cluster generalization, and robustness comparisons
//! between clean and attacked rankings.

use thiserror::Error;

use crate::graph::RatingGraph;
use crate::multipartite::MultipartiteResult;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("vectors must have equal length, got {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 aligned values, got {0}")]
    TooShort(usize),
    #[error("every pair is tied, correlation undefined")]
    Undefined,
    #[error("results carry different partitions")]
    MismatchedPartitions,
}

/// Kendall tau (|C| - |D|) / (|C| + |D|); pairs tied in either vector count
/// for neither side. Runs in O(n log n) via sort plus inversion counting.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(MetricsError::TooShort(n));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let n0 = pairs(n as u64);
    let mut n1 = 0u64; // tied in x
    let mut n3 = 0u64; // tied in both
    let mut run = 1u64;
    let mut joint = 1u64;
    for w in idx.windows(2) {
        if x[w[0]] == x[w[1]] {
            run += 1;
            if y[w[0]] == y[w[1]] {
                joint += 1;
            } else {
                n3 += pairs(joint);
                joint = 1;
            }
        } else {
            n1 += pairs(run);
            n3 += pairs(joint);
            run = 1;
            joint = 1;
        }
    }
    n1 += pairs(run);
    n3 += pairs(joint);
    let mut ys: Vec<f64> = idx.iter().map(|&k| y[k]).collect();
    let mut sorted_y = ys.clone();
    sorted_y.sort_by(f64::total_cmp);
    let mut n2 = 0u64; // tied in y
    run = 1;
    for w in sorted_y.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            n2 += pairs(run);
            run = 1;
        }
    }
    n2 += pairs(run);
    let mut buf = vec![0.0; n];
    let d = count_inversions(&mut ys, &mut buf);
    // n3 joins first so intermediates stay non-negative when everything ties
    let untied = n0 + n3 - n1 - n2;
    if untied == 0 {
        return Err(MetricsError::Undefined);
    }
    let c = untied - d;
    Ok((c as f64 - d as f64) / untied as f64)
}

fn pairs(n: u64) -> u64 {
    n * (n - 1) / 2
}

/// Strict inversions (a before b with v[a] > v[b]) by merge sort.
fn count_inversions(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = {
        let (lo, hi) = v.split_at_mut(mid);
        count_inversions(lo, buf) + count_inversions(hi, buf)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] > v[j] {
            count += (mid - i) as u64;
            buf[k] = v[j];
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    // leftover right values already sit in final position; leftover left
    // values are the largest and close out the merged prefix of length j
    buf[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
    v[..j].copy_from_slice(&buf[..j]);
    count
}

/// Tau restricted to positions holding a value in both vectors.
fn restricted_tau(a: &[Option<f64>], b: &[Option<f64>]) -> Result<f64, MetricsError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (va, vb) in a.iter().zip(b) {
        if let (Some(va), Some(vb)) = (va, vb) {
            xs.push(*va);
            ys.push(*vb);
        }
    }
    if xs.len() < 2 {
        return Err(MetricsError::TooShort(xs.len()));
    }
    kendall_tau(&xs, &ys)
}

/// Size-weighted mean of per-cluster taus. Clusters whose tau is undefined
/// (or with fewer than 2 shared items) drop out of both the numerator and
/// the normalizer.
pub fn generalized_tau(
    a: &MultipartiteResult,
    b: &MultipartiteResult,
) -> Result<f64, MetricsError> {
    if a.n_components() != b.n_components() || a.component_sizes() != b.component_sizes() {
        return Err(MetricsError::MismatchedPartitions);
    }
    let clusters: Vec<(usize, &[Option<f64>], &[Option<f64>])> = (0..a.n_components())
        .map(|c| {
            (
                a.component_sizes()[c],
                &a.component_states()[c].rankings[..],
                &b.component_states()[c].rankings[..],
            )
        })
        .collect();
    weighted_cluster_tau(&clusters)
}

/// As `generalized_tau`, over explicit (size, rankings, rankings) triples.
pub fn weighted_cluster_tau(
    clusters: &[(usize, &[Option<f64>], &[Option<f64>])],
) -> Result<f64, MetricsError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for &(size, xs, ys) in clusters {
        match restricted_tau(xs, ys) {
            Ok(t) => {
                num += size as f64 * t;
                den += size as f64;
            }
            Err(MetricsError::Undefined | MetricsError::TooShort(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if den == 0.0 {
        return Err(MetricsError::Undefined);
    }
    Ok(num / den)
}

/// Tau between clean and attacked display vectors over items ranked in both.
/// For a bipartite run, pass the plain ranking vector as the display vector.
pub fn robustness_tau(
    clean: &[Option<f64>],
    attacked: &[Option<f64>],
) -> Result<f64, MetricsError> {
    restricted_tau(clean, attacked)
}

/// Agreement with the reputation-blind arithmetic mean ranking of the same
/// graph. For per-cluster effectiveness, compare against a frozen
/// multipartite run with unit reputations via `generalized_tau`.
pub fn effectiveness_tau(
    g: &RatingGraph,
    rankings: &[Option<f64>],
) -> Result<f64, MetricsError> {
    let ones = vec![1.0; g.n_users()];
    let aa = crate::engine::ranking_step(g, &ones);
    restricted_tau(rankings, &aa)
}
