//! Test-only generators and independent oracles.
#![allow(dead_code)]

pub mod lp;

use chrono::NaiveDate;
use crisis_core::copula::CopulaGrid;
use crisis_core::ReturnsTable;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn day(i: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).unwrap() + chrono::Days::new(i as u64)
}

/// Random mean vector and covariance `B Bᵀ + diag` for `n` assets.
pub fn random_moments(n: usize, seed: u64) -> (DVector<f64>, DMatrix<f64>) {
    let mut r = rng(seed);
    let mean = DVector::from_fn(n, |_, _| r.gen_range(-0.01..0.01));
    let b = DMatrix::from_fn(n, n, |_, _| r.sample::<f64, _>(StandardNormal) * 0.01);
    let mut cov = &b * b.transpose();
    for i in 0..n {
        cov[(i, i)] += 1e-5;
    }
    (mean, cov)
}

/// Regime parameters: asset volatilities, means and a one-factor correlation.
#[derive(Debug, Clone)]
pub struct Regime {
    pub days: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

pub const N_ASSETS: usize = 10;

fn one_factor_cov(vols: &[f64], rho: f64) -> DMatrix<f64> {
    let n = vols.len();
    DMatrix::from_fn(n, n, |i, j| {
        let c = if i == j { 1.0 } else { rho };
        c * vols[i] * vols[j]
    })
}

fn base_vols() -> Vec<f64> {
    (0..N_ASSETS)
        .map(|i| 0.01 + 0.02 * i as f64 / (N_ASSETS - 1) as f64)
        .collect()
}

/// Riskier assets earn more: portfolio return rises with volatility.
pub fn normal_regime(days: usize) -> Regime {
    let vols = base_vols();
    Regime {
        days,
        mean: DVector::from_iterator(N_ASSETS, vols.iter().map(|v| 0.5 * v)),
        cov: one_factor_cov(&vols, 0.3),
    }
}

/// Negative means, doubled volatilities, and losses growing with risk.
pub fn crisis_regime(days: usize) -> Regime {
    let vols: Vec<f64> = base_vols().iter().map(|v| 2.0 * v).collect();
    Regime {
        days,
        mean: DVector::from_iterator(N_ASSETS, vols.iter().map(|v| -0.5 * v)),
        cov: one_factor_cov(&vols, 0.6),
    }
}

/// Gaussian daily returns, regimes concatenated in order.
pub fn regime_market(regimes: &[Regime], seed: u64) -> ReturnsTable {
    let mut r = rng(seed);
    let mut rows = Vec::new();
    for regime in regimes {
        let l = regime.cov.clone().cholesky().expect("regime covariance").l();
        for _ in 0..regime.days {
            let z = DVector::from_fn(N_ASSETS, |_, _| r.sample::<f64, _>(StandardNormal));
            let x = &regime.mean + &l * z;
            rows.push(x.iter().copied().collect::<Vec<f64>>());
        }
    }
    let dates = (0..rows.len()).map(day).collect();
    let assets = (0..N_ASSETS).map(|i| format!("A{i}")).collect();
    ReturnsTable::from_rows(dates, assets, &rows).unwrap()
}

/// 400 normal days followed by 150 crisis days.
pub fn crisis_injected_market(seed: u64) -> ReturnsTable {
    regime_market(&[normal_regime(400), crisis_regime(150)], seed)
}

/// Rank-binned copula of (return, volatility) pairs, computed without the
/// library's estimator. Ties are broken by position.
pub fn rank_copula(ret: &[f64], vol: &[f64], m: usize) -> Vec<f64> {
    let n = ret.len();
    let bins = |values: &[f64]| {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut bin = vec![0usize; n];
        for (rank, &i) in order.iter().enumerate() {
            bin[i] = rank * m / n;
        }
        bin
    };
    let (rb, vb) = (bins(ret), bins(vol));
    let mut mass = vec![0.0; m * m];
    for k in 0..n {
        mass[rb[k] * m + vb[k]] += 1.0 / n as f64;
    }
    mass
}

/// Every point of the simplex lattice `{w : w_i = k_i·h, Σ w = 1}` for n=3.
/// The lattice is uniform in the interior, so its (return, volatility)
/// copula converges to the population copula as `h → 0`.
pub fn barycentric_copula(mean: &[f64; 3], cov: &[[f64; 3]; 3], m: usize, h: f64) -> Vec<f64> {
    let steps = (1.0 / h).round() as usize;
    let mut ret = Vec::new();
    let mut vol = Vec::new();
    for a in 0..=steps {
        for b in 0..=steps - a {
            let c = steps - a - b;
            let w = [a as f64 * h, b as f64 * h, c as f64 * h];
            ret.push((0..3).map(|i| w[i] * mean[i]).sum());
            let mut v = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    v += w[i] * cov[i][j] * w[j];
                }
            }
            vol.push(v);
        }
    }
    rank_copula(&ret, &vol, m)
}

pub fn grid_from(m: usize, mass: Vec<f64>) -> CopulaGrid {
    CopulaGrid::from_mass(m, mass).unwrap()
}

/// Random histogram on an m×m grid with some empty cells.
pub fn random_histogram(r: &mut ChaCha8Rng, m: usize) -> CopulaGrid {
    let mut mass: Vec<f64> = (0..m * m)
        .map(|_| if r.gen_bool(0.2) { 0.0 } else { r.gen::<f64>() })
        .collect();
    if mass.iter().all(|&v| v == 0.0) {
        mass[0] = 1.0;
    }
    let total: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|v| *v /= total);
    grid_from(m, mass)
}
