//! Copula clustering: EMD + spectral embedding, and k-medoids on corner
//! features. Also the agreement scores used to evaluate labelings.

mod emd;
mod kmedoids;
mod spectral;

pub use emd::{distance_matrix, emd, ground_distance, transport, DistanceMatrix};
pub use kmedoids::{kmedoids, kmedoids_features, ClusterAssignment};
pub use spectral::{
    affinity, affinity_with_sigma, spectral_clusters, spectral_clusters_with, SpectralVariant,
};

use std::collections::HashMap;

fn contingency(a: &[usize], b: &[usize]) -> HashMap<(usize, usize), usize> {
    let mut table = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_insert(0) += 1;
    }
    table
}

/// Fraction of points whose label agrees with the majority truth label of
/// their cluster.
pub fn purity(labels: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(labels.len(), truth.len());
    if labels.is_empty() {
        return 1.0;
    }
    let mut best: HashMap<usize, usize> = HashMap::new();
    for ((c, _), count) in contingency(labels, truth) {
        let e = best.entry(c).or_insert(0);
        *e = (*e).max(count);
    }
    best.values().sum::<usize>() as f64 / labels.len() as f64
}

/// Adjusted Rand index between two labelings; 1 for identical partitions.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let pairs = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = contingency(a, b).values().map(|&c| pairs(c)).sum();
    let sums = |labels: &[usize]| {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for &l in labels {
            *counts.entry(l).or_insert(0) += 1;
        }
        counts.values().map(|&c| pairs(c)).sum::<f64>()
    };
    let (sa, sb) = (sums(a), sums(b));
    let expected = sa * sb / pairs(n);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
