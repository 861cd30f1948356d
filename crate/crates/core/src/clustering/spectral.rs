use nalgebra::{DMatrix, SymmetricEigen};

use super::emd::DistanceMatrix;
use super::kmedoids::{euclidean, kmedoids, ClusterAssignment};
use crate::error::{Error, Result};

/// Gaussian affinity `exp(-D²/(2σ²))` with zero diagonal, where σ is the
/// population standard deviation of the off-diagonal distances.
pub fn affinity(dist: &DistanceMatrix) -> Result<DMatrix<f64>> {
    let upper: Vec<f64> = dist.upper_triangle().collect();
    if upper.is_empty() {
        return Err(Error::InsufficientData("need at least 2 points".into()));
    }
    let mean = upper.iter().sum::<f64>() / upper.len() as f64;
    let var = upper.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / upper.len() as f64;
    let sigma = var.sqrt();
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::DegenerateDistances);
    }
    Ok(affinity_with_sigma(dist, sigma))
}

pub fn affinity_with_sigma(dist: &DistanceMatrix, sigma: f64) -> DMatrix<f64> {
    let n = dist.len();
    let denom = 2.0 * sigma * sigma;
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (-dist.get(i, j).powi(2) / denom).exp()
        }
    })
}

/// Which eigenvectors embed the points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpectralVariant {
    /// Top-k eigenvectors of `D^{-1/2} A D^{-1/2}`, rows scaled to unit length.
    #[default]
    NormalizedAffinity,
    /// Bottom-k eigenvectors of the unnormalized Laplacian `D - A`.
    UnnormalizedLaplacian,
}

pub fn spectral_clusters(affinity: &DMatrix<f64>, k: usize, seed: u64) -> Result<ClusterAssignment> {
    spectral_clusters_with(affinity, k, seed, SpectralVariant::NormalizedAffinity)
}

pub fn spectral_clusters_with(
    affinity: &DMatrix<f64>,
    k: usize,
    seed: u64,
    variant: SpectralVariant,
) -> Result<ClusterAssignment> {
    let n = affinity.nrows();
    if affinity.ncols() != n {
        return Err(Error::Dimension("affinity matrix is not square".into()));
    }
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!("k={k} for {n} points")));
    }
    let degree: Vec<f64> = affinity.row_iter().map(|r| r.sum()).collect();
    if let Some(index) = degree.iter().position(|&d| d <= 0.0) {
        return Err(Error::IsolatedPoint { index });
    }

    let (operator, largest) = match variant {
        SpectralVariant::NormalizedAffinity => {
            let inv_sqrt: Vec<f64> = degree.iter().map(|d| d.sqrt().recip()).collect();
            let l = DMatrix::from_fn(n, n, |i, j| inv_sqrt[i] * affinity[(i, j)] * inv_sqrt[j]);
            (l, true)
        }
        SpectralVariant::UnnormalizedLaplacian => {
            let mut l = -affinity.clone();
            for i in 0..n {
                l[(i, i)] += degree[i];
            }
            (l, false)
        }
    };
    let eig = SymmetricEigen::new(operator);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        let ord = eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]);
        if largest {
            ord.reverse()
        } else {
            ord
        }
    });

    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|i| idx[..k].iter().map(|&c| eig.eigenvectors[(i, c)]).collect())
        .collect();
    if variant == SpectralVariant::NormalizedAffinity {
        for r in &mut rows {
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                r.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
    let embedded = DistanceMatrix::from_fn(n, |i, j| euclidean(&rows[i], &rows[j]));
    kmedoids(&embedded, k, seed)
}
