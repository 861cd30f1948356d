//! PAM k-medoids: greedy BUILD followed by best-improvement SWAP.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::emd::DistanceMatrix;
use crate::error::{Error, Result};

const SWAP_EPS: f64 = 1e-12;
const MAX_SWAPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster id of every point, in `[0, k)`.
    pub labels: Vec<usize>,
    /// Point index of each cluster's medoid; cluster `c` has medoid `medoids[c]`.
    pub medoids: Vec<usize>,
    pub k: usize,
    /// Sum of distances from each point to its medoid.
    pub cost: f64,
}

impl ClusterAssignment {
    pub fn is_medoid(&self, i: usize) -> bool {
        self.medoids.contains(&i)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Clusters points described by a distance matrix. The seed only decides
/// which of several equally good candidates BUILD and SWAP pick.
pub fn kmedoids(dist: &DistanceMatrix, k: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = dist.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k={k} for {n} points")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut medoids = build(dist, k, &order);
    swap(dist, &mut medoids, &order);
    medoids.sort_unstable();
    Ok(assign(dist, medoids))
}

fn build(dist: &DistanceMatrix, k: usize, order: &[usize]) -> Vec<usize> {
    let n = dist.len();
    let mut medoids = Vec::with_capacity(k);
    let mut is_medoid = vec![false; n];
    // distance of every point to its nearest chosen medoid
    let mut nearest = vec![f64::INFINITY; n];

    let first = *order
        .iter()
        .min_by(|&&a, &&b| {
            let ca: f64 = dist.row(a).iter().sum();
            let cb: f64 = dist.row(b).iter().sum();
            ca.total_cmp(&cb)
        })
        .expect("nonempty");
    medoids.push(first);
    is_medoid[first] = true;
    nearest.copy_from_slice(dist.row(first));

    while medoids.len() < k {
        let mut best = None;
        let mut best_gain = f64::NEG_INFINITY;
        for &c in order {
            if is_medoid[c] {
                continue;
            }
            let gain: f64 = (0..n)
                .map(|j| (nearest[j] - dist.get(c, j)).max(0.0))
                .sum();
            if gain > best_gain {
                best_gain = gain;
                best = Some(c);
            }
        }
        let c = best.expect("k <= n");
        medoids.push(c);
        is_medoid[c] = true;
        for (j, d) in nearest.iter_mut().enumerate() {
            *d = d.min(dist.get(c, j));
        }
    }
    medoids
}

/// Nearest and second-nearest medoid slot and distance for each point.
fn nearest_two(dist: &DistanceMatrix, medoids: &[usize]) -> Vec<(usize, f64, f64)> {
    (0..dist.len())
        .map(|j| {
            let mut best = (usize::MAX, f64::INFINITY);
            let mut second = f64::INFINITY;
            for (slot, &m) in medoids.iter().enumerate() {
                let d = dist.get(m, j);
                if d < best.1 {
                    second = best.1;
                    best = (slot, d);
                } else if d < second {
                    second = d;
                }
            }
            (best.0, best.1, second)
        })
        .collect()
}

fn swap(dist: &DistanceMatrix, medoids: &mut [usize], order: &[usize]) {
    let k = medoids.len();
    for _ in 0..MAX_SWAPS {
        let near = nearest_two(dist, medoids);
        let mut best = (0.0, usize::MAX, usize::MAX);
        for &h in order {
            if medoids.contains(&h) {
                continue;
            }
            // change in cost if medoid slot `s` is replaced by `h`
            let mut delta = vec![0.0; k];
            let mut shared = 0.0;
            for (j, &(slot, d1, d2)) in near.iter().enumerate() {
                let dh = dist.get(h, j);
                let elsewhere = (dh - d1).min(0.0);
                shared += elsewhere;
                delta[slot] += dh.min(d2) - d1 - elsewhere;
            }
            for (s, d) in delta.iter().enumerate() {
                let total = d + shared;
                if total < best.0 - SWAP_EPS {
                    best = (total, s, h);
                }
            }
        }
        if best.1 == usize::MAX {
            return;
        }
        medoids[best.1] = best.2;
    }
    log::warn!("k-medoids swap phase stopped after {MAX_SWAPS} swaps");
}

fn assign(dist: &DistanceMatrix, medoids: Vec<usize>) -> ClusterAssignment {
    let n = dist.len();
    let mut labels = vec![0; n];
    let mut cost = 0.0;
    for (j, label) in labels.iter_mut().enumerate() {
        if let Some(c) = medoids.iter().position(|&m| m == j) {
            *label = c;
            continue;
        }
        let (c, d) = medoids
            .iter()
            .enumerate()
            .map(|(c, &m)| (c, dist.get(m, j)))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        *label = c;
        cost += d;
    }
    ClusterAssignment {
        labels,
        k: medoids.len(),
        medoids,
        cost,
    }
}

/// k-medoids on feature vectors with Euclidean distance.
///
/// `+inf` components are replaced, per component, by a value larger than
/// every finite value of that component, so infinities compare equal to
/// each other and greater than anything finite.
pub fn kmedoids_features(points: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InsufficientData("no points".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Dimension("feature vectors of different lengths".into()));
    }
    if points.iter().flatten().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
        return Err(Error::NonFinite("NaN or -inf feature".into()));
    }
    let sentinels: Vec<f64> = (0..dim)
        .map(|c| {
            let finite = points.iter().map(|p| p[c]).filter(|v| v.is_finite());
            let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
            if hi.is_finite() {
                hi + (hi - lo).max(1.0)
            } else {
                1.0
            }
        })
        .collect();
    let finite: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            p.iter()
                .zip(&sentinels)
                .map(|(&v, &s)| if v.is_infinite() { s } else { v })
                .collect()
        })
        .collect();
    let dist = DistanceMatrix::from_fn(n, |i, j| euclidean(&finite[i], &finite[j]));
    kmedoids(&dist, k, seed)
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
