//! Uniform sampling of long-only portfolios and their return/variance.
//!
//! A uniform point of the canonical simplex is a vector of i.i.d. standard
//! exponentials divided by its sum. Every batch of samples draws from its own
//! ChaCha8 stream keyed by `(window, batch)`, so results do not depend on how
//! batches are scheduled across threads.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const DEFAULT_BATCH: usize = 16_384;

const BATCH_BITS: u32 = 24;

/// Deterministic RNG for batch `batch` of sampling job `window`.
pub fn substream(seed: u64, window: u64, batch: u64) -> ChaCha8Rng {
    debug_assert!(batch < (1 << BATCH_BITS));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((window << BATCH_BITS) | batch);
    rng
}

/// `count` portfolios stored row-major as a count×n matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioBatch {
    n: usize,
    weights: Vec<f64>,
}

impl PortfolioBatch {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.weights.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.chunks_exact(self.n)
    }
}

#[inline]
fn draw_exponentials(rng: &mut ChaCha8Rng, buf: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    for e in buf.iter_mut() {
        let v: f64 = Exp1.sample(rng);
        *e = v;
        sum += v;
    }
    sum
}

/// `count` i.i.d. uniform points of the (n-1)-simplex.
pub fn sample_uniform_simplex(n: usize, count: usize, seed: u64) -> Result<PortfolioBatch> {
    check_sizes(n, count)?;
    let n_batches = count.div_ceil(DEFAULT_BATCH);
    let chunks: Vec<Vec<f64>> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let len = DEFAULT_BATCH.min(count - b * DEFAULT_BATCH);
            let mut rng = substream(seed, 0, b as u64);
            let mut out = vec![0.0; len * n];
            for x in out.chunks_exact_mut(n) {
                let s = draw_exponentials(&mut rng, x);
                x.iter_mut().for_each(|v| *v /= s);
            }
            out
        })
        .collect();
    Ok(PortfolioBatch {
        n,
        weights: chunks.concat(),
    })
}

fn check_sizes(n: usize, count: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("simplex dimension must be >= 1".into()));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    Ok(())
}

/// Portfolio returns `Rᵀx` and variances `xᵀΣx` of a set of samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvaluatedSamples {
    pub returns: Vec<f64>,
    pub volatilities: Vec<f64>,
}

impl EvaluatedSamples {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

fn check_moments(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<()> {
    let n = mean.len();
    if cov.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "mean has {n} entries but covariance is {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    Ok(())
}

pub fn eval_portfolios(
    samples: &PortfolioBatch,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> Result<EvaluatedSamples> {
    check_moments(mean, cov)?;
    if samples.dim() != mean.len() {
        return Err(Error::Dimension(format!(
            "samples have dimension {}, moments {}",
            samples.dim(),
            mean.len()
        )));
    }
    let kernel = QuadKernel::new(mean, cov);
    let (returns, volatilities) = samples.iter().map(|x| kernel.eval(x, 1.0)).unzip();
    Ok(EvaluatedSamples {
        returns,
        volatilities,
    })
}

/// Row-major copy of the moments for the inner loop.
struct QuadKernel {
    n: usize,
    mean: Vec<f64>,
    cov: Vec<f64>,
}

impl QuadKernel {
    fn new(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Self {
        let n = mean.len();
        Self {
            n,
            mean: mean.iter().copied().collect(),
            cov: (0..n * n).map(|k| cov[(k / n, k % n)]).collect(),
        }
    }

    /// Return and variance of `x / scale`.
    #[inline]
    fn eval(&self, x: &[f64], scale: f64) -> (f64, f64) {
        let n = self.n;
        let mut ret = 0.0;
        let mut quad = 0.0;
        for i in 0..n {
            ret += self.mean[i] * x[i];
            let row = &self.cov[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += row[j] * x[j];
            }
            quad += x[i] * acc;
        }
        (ret / scale, quad / (scale * scale))
    }
}

/// Draws `count` uniform portfolios and evaluates them without storing the
/// weights. `window` selects the RNG stream family; batches run in parallel.
pub fn sample_and_evaluate(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    count: usize,
    seed: u64,
    window: u64,
) -> Result<EvaluatedSamples> {
    check_moments(mean, cov)?;
    let n = mean.len();
    check_sizes(n, count)?;
    let kernel = QuadKernel::new(mean, cov);
    let n_batches = count.div_ceil(DEFAULT_BATCH);
    let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let len = DEFAULT_BATCH.min(count - b * DEFAULT_BATCH);
            let mut rng = substream(seed, window, b as u64);
            let mut x = vec![0.0; n];
            let mut rets = Vec::with_capacity(len);
            let mut vols = Vec::with_capacity(len);
            for _ in 0..len {
                let s = draw_exponentials(&mut rng, &mut x);
                let (r, v) = kernel.eval(&x, s);
                rets.push(r);
                vols.push(v);
            }
            (rets, vols)
        })
        .collect();
    let mut out = EvaluatedSamples {
        returns: Vec::with_capacity(count),
        volatilities: Vec::with_capacity(count),
    };
    for (r, v) in parts {
        out.returns.extend(r);
        out.volatilities.extend(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_simplex() {
        let s = sample_uniform_simplex(1, 50, 3).unwrap();
        assert!(s.iter().all(|x| x == [1.0]));
    }

    #[test]
    fn zero_sizes_are_errors() {
        assert!(sample_uniform_simplex(0, 10, 1).is_err());
        assert!(sample_uniform_simplex(3, 0, 1).is_err());
    }

    #[test]
    fn samples_lie_on_simplex() {
        let s = sample_uniform_simplex(7, 20_000, 11).unwrap();
        assert_eq!(s.len(), 20_000);
        for x in s.iter() {
            assert!(x.iter().all(|&v| v >= 0.0));
            assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_dim_marginal_is_uniform() {
        let s = sample_uniform_simplex(2, 100_000, 5).unwrap();
        let first: Vec<f64> = s.iter().map(|x| x[0]).collect();
        let mean = first.iter().sum::<f64>() / first.len() as f64;
        let var = first.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / first.len() as f64;
        assert!((mean - 0.5).abs() < 0.005, "{mean}");
        assert!((var - 1.0 / 12.0).abs() < 0.005, "{var}");
    }

    #[test]
    fn three_dim_marginal_matches_beta_1_2() {
        let s = sample_uniform_simplex(3, 200_000, 9).unwrap();
        let mut first: Vec<f64> = s.iter().map(|x| x[0]).collect();
        first.sort_by(f64::total_cmp);
        let count = first.len() as f64;
        let cdf = |t: f64| 1.0 - (1.0 - t).powi(2);
        let ks = first
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let f = cdf(t);
                (f - i as f64 / count).abs().max(((i + 1) as f64 / count - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn seeds_are_reproducible_and_distinct() {
        let a = sample_uniform_simplex(4, 100_000, 42).unwrap();
        let b = sample_uniform_simplex(4, 100_000, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_uniform_simplex(4, 100_000, 43).unwrap();
        assert_ne!(a, c);
        let mean = |p: &PortfolioBatch| p.iter().map(|x| x[0]).sum::<f64>() / p.len() as f64;
        assert!((mean(&a) - mean(&c)).abs() < 0.01);
    }

    #[test]
    fn vertex_and_center_evaluations() {
        let batch = |rows: &[&[f64]]| PortfolioBatch {
            n: rows[0].len(),
            weights: rows.concat(),
        };
        let r = DVector::from_vec(vec![0.02, -0.01, 0.03]);
        let cov = DMatrix::identity(3, 3);
        let e = eval_portfolios(&batch(&[&[1.0, 0.0, 0.0]]), &r, &cov).unwrap();
        assert_eq!(e.returns, vec![0.02]);

        let e = eval_portfolios(
            &batch(&[&[0.5, 0.5]]),
            &DVector::zeros(2),
            &DMatrix::identity(2, 2),
        )
        .unwrap();
        assert_eq!(e.volatilities, vec![0.5]);

        let third = 1.0 / 3.0;
        let e = eval_portfolios(
            &batch(&[&[third, third, third]]),
            &DVector::from_vec(vec![0.03, 0.0, -0.03]),
            &cov,
        )
        .unwrap();
        assert!(e.returns[0].abs() < 1e-18);
    }

    #[test]
    fn dimension_mismatch() {
        let s = sample_uniform_simplex(3, 4, 1).unwrap();
        assert!(eval_portfolios(&s, &DVector::zeros(2), &DMatrix::zeros(2, 2)).is_err());
        assert!(eval_portfolios(&s, &DVector::zeros(3), &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn fused_path_matches_materialized_path() {
        let r = DVector::from_vec(vec![0.01, -0.02, 0.005]);
        let cov = DMatrix::from_row_slice(3, 3, &[4e-4, 1e-4, 0.0, 1e-4, 2e-4, -5e-5, 0.0, -5e-5, 1e-4]);
        let count = 40_000;
        let fused = sample_and_evaluate(&r, &cov, count, 8, 0).unwrap();
        let batch = sample_uniform_simplex(3, count, 8).unwrap();
        let slow = eval_portfolios(&batch, &r, &cov).unwrap();
        for i in 0..count {
            assert!((fused.returns[i] - slow.returns[i]).abs() < 1e-16);
            assert!((fused.volatilities[i] - slow.volatilities[i]).abs() < 1e-18);
        }
        assert!(fused.volatilities.iter().all(|&v| v >= -1e-15));
    }

    #[test]
    fn windows_use_distinct_streams() {
        let r = DVector::from_vec(vec![0.01, -0.02]);
        let cov = DMatrix::identity(2, 2);
        let a = sample_and_evaluate(&r, &cov, 100, 1, 0).unwrap();
        let b = sample_and_evaluate(&r, &cov, 100, 1, 1).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, sample_and_evaluate(&r, &cov, 100, 1, 0).unwrap());
    }
}
