//! Empirical return/volatility copula on an m×m grid.
//!
//! Row `i` is the i-th return slab (ascending), column `j` the j-th
//! volatility slab (ascending). Slabs hold equal sample mass, which under
//! uniform simplex sampling is the same as equal simplex volume.

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::simplex::EvaluatedSamples;

pub const DEFAULT_GRID: usize = 10;
pub const DEFAULT_SAMPLES: usize = 500_000;

/// Tolerance on the total mass of grids that come from files or models.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CopulaGrid {
    m: usize,
    mass: Vec<f64>,
    pub ret_thresholds: Vec<f64>,
    pub vol_thresholds: Vec<f64>,
    pub sample_count: usize,
    pub window_end: Option<NaiveDate>,
}

impl CopulaGrid {
    /// Sets the thresholds and sample count carried alongside the masses.
    pub fn with_metadata(
        mut self,
        ret_thresholds: Vec<f64>,
        vol_thresholds: Vec<f64>,
        sample_count: usize,
        window_end: Option<NaiveDate>,
    ) -> Self {
        self.ret_thresholds = ret_thresholds;
        self.vol_thresholds = vol_thresholds;
        self.sample_count = sample_count;
        self.window_end = window_end;
        self
    }

    /// Validates a row-major m×m mass vector: finite, nonnegative, total 1.
    pub fn from_mass(m: usize, mass: Vec<f64>) -> Result<Self> {
        if m == 0 || mass.len() != m * m {
            return Err(Error::Dimension(format!(
                "grid of resolution {m} needs {} cells, got {}",
                m * m,
                mass.len()
            )));
        }
        if let Some(v) = mass.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!("invalid cell mass {v}")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidArgument(format!("cell masses sum to {total}, not 1")));
        }
        Ok(Self {
            m,
            mass,
            ret_thresholds: Vec::new(),
            vol_thresholds: Vec::new(),
            sample_count: 0,
            window_end: None,
        })
    }

    pub fn uniform(m: usize) -> Self {
        let cell = 1.0 / (m * m) as f64;
        Self {
            m,
            mass: vec![cell; m * m],
            ret_thresholds: Vec::new(),
            vol_thresholds: Vec::new(),
            sample_count: 0,
            window_end: None,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn mass(&self, row: usize, col: usize) -> f64 {
        self.mass[row * self.m + col]
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.mass.chunks_exact(self.m).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.m)
            .map(|j| (0..self.m).map(|i| self.mass(i, j)).sum())
            .collect()
    }

    /// Mirror across the main diagonal, `(i, j) -> (j, i)`.
    pub fn transposed(&self) -> Self {
        let m = self.m;
        let mut out = self.clone();
        out.mass = (0..m * m).map(|k| self.mass(k % m, k / m)).collect();
        std::mem::swap(&mut out.ret_thresholds, &mut out.vol_thresholds);
        out
    }

    /// Reverses the volatility axis, `(i, j) -> (i, m-1-j)`, swapping the
    /// main and anti-diagonal.
    pub fn reflected(&self) -> Self {
        let m = self.m;
        let mut out = self.clone();
        out.mass = (0..m * m)
            .map(|k| self.mass(k / m, m - 1 - k % m))
            .collect();
        out.vol_thresholds.reverse();
        out
    }
}

/// One of the four corners of a grid in matrix orientation: "upper" rows
/// are the lowest return slabs, "left" columns the lowest volatility slabs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Corner {
    UpperLeft,
    UpperRight,
    LowerLeft,
    LowerRight,
}

impl Corner {
    pub const ALL: [Corner; 4] = [
        Corner::UpperLeft,
        Corner::UpperRight,
        Corner::LowerLeft,
        Corner::LowerRight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Corner::UpperLeft => "upper-left",
            Corner::UpperRight => "upper-right",
            Corner::LowerLeft => "lower-left",
            Corner::LowerRight => "lower-right",
        }
    }

    /// Cells of the `side`×`side` block in row-major order.
    pub fn cells(self, m: usize, side: usize) -> Vec<(usize, usize)> {
        let row0 = match self {
            Corner::UpperLeft | Corner::UpperRight => 0,
            Corner::LowerLeft | Corner::LowerRight => m - side,
        };
        let col0 = match self {
            Corner::UpperLeft | Corner::LowerLeft => 0,
            Corner::UpperRight | Corner::LowerRight => m - side,
        };
        (row0..row0 + side)
            .flat_map(|i| (col0..col0 + side).map(move |j| (i, j)))
            .collect()
    }

    /// Total mass in the `side`×`side` block.
    pub fn mass(self, grid: &CopulaGrid, side: usize) -> f64 {
        self.cells(grid.m(), side)
            .into_iter()
            .map(|(i, j)| grid.mass(i, j))
            .sum()
    }
}

impl std::fmt::Display for Corner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Corner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Corner::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown corner {s:?}")))
    }
}

/// Sorted copy of `values` paired with original indices. NaNs sort last.
fn sorted_with_index(values: &[f64]) -> Vec<(f64, u32)> {
    let mut v: Vec<(f64, u32)> = values
        .iter()
        .enumerate()
        .map(|(i, &x)| (x, i as u32))
        .collect();
    v.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    v
}

/// Empirical quantile at `p` with linear interpolation between order statistics.
fn quantile_sorted(sorted: &[(f64, u32)], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    if lo == hi {
        sorted[lo].0
    } else {
        sorted[lo].0 + frac * (sorted[hi].0 - sorted[lo].0)
    }
}

fn check_bins(count: usize, m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidArgument("grid resolution must be >= 1".into()));
    }
    if m > count {
        return Err(Error::InsufficientData(format!("{count} values for {m} bins")));
    }
    Ok(())
}

/// The 0, 1/m, ..., 1 empirical quantiles of `values`.
pub fn equal_mass_thresholds(values: &[f64], m: usize) -> Result<Vec<f64>> {
    check_bins(values.len(), m)?;
    let sorted = sorted_with_index(values);
    Ok(thresholds_from_sorted(&sorted, m))
}

fn thresholds_from_sorted(sorted: &[(f64, u32)], m: usize) -> Vec<f64> {
    (0..=m)
        .map(|i| quantile_sorted(sorted, i as f64 / m as f64))
        .collect()
}

/// Bin of every value by rank: `floor(rank * m / count)`, where tied values
/// share the rank of the first member of their tie group.
fn rank_bins_sorted(sorted: &[(f64, u32)], m: usize) -> Vec<u16> {
    let count = sorted.len();
    let mut bins = vec![0u16; count];
    let mut group_start = 0;
    for (rank, &(v, idx)) in sorted.iter().enumerate() {
        if rank > 0 && v != sorted[rank - 1].0 {
            group_start = rank;
        }
        bins[idx as usize] = (group_start * m / count) as u16;
    }
    bins
}

pub fn rank_bins(values: &[f64], m: usize) -> Result<Vec<u16>> {
    check_bins(values.len(), m)?;
    Ok(rank_bins_sorted(&sorted_with_index(values), m))
}

/// Slab index of `v` for thresholds `s_0..s_m`.
///
/// Slabs are `[s_i, s_{i+1})` with the last one closed; a value equal to a
/// run of tied thresholds goes to the lowest slab starting at it. Values
/// outside `[s_0, s_m]` are clamped to the end slabs.
pub fn threshold_bin(thresholds: &[f64], v: f64) -> usize {
    let m = thresholds.len() - 1;
    let j = thresholds.partition_point(|&s| s < v);
    if j <= m && thresholds[j] == v {
        j.min(m - 1)
    } else {
        j.saturating_sub(1).min(m - 1)
    }
}

/// How samples are assigned to slabs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Binning {
    /// Exact equal marginal counts when `m` divides the sample count.
    #[default]
    Rank,
    /// Comparison against the interpolated quantile thresholds.
    Threshold,
}

pub fn estimate_copula(evaluated: &EvaluatedSamples, m: usize) -> Result<CopulaGrid> {
    estimate_copula_with(evaluated, m, Binning::Rank)
}

pub fn estimate_copula_with(
    evaluated: &EvaluatedSamples,
    m: usize,
    binning: Binning,
) -> Result<CopulaGrid> {
    let count = evaluated.len();
    if evaluated.volatilities.len() != count {
        return Err(Error::Dimension(format!(
            "{count} returns but {} volatilities",
            evaluated.volatilities.len()
        )));
    }
    if m == 0 || m > u16::MAX as usize {
        return Err(Error::InvalidArgument(format!("grid resolution {m} out of range")));
    }
    if count < m * m {
        return Err(Error::InsufficientData(format!(
            "{count} samples for a {m}x{m} grid; need at least {}",
            m * m
        )));
    }
    if count < 10 * m * m {
        log::warn!("{count} samples for a {m}x{m} grid; at least {} recommended", 10 * m * m);
    }

    let (ret_sorted, vol_sorted) = rayon::join(
        || sorted_with_index(&evaluated.returns),
        || sorted_with_index(&evaluated.volatilities),
    );
    let ret_thresholds = thresholds_from_sorted(&ret_sorted, m);
    let vol_thresholds = thresholds_from_sorted(&vol_sorted, m);

    let (ret_bins, vol_bins): (Vec<u16>, Vec<u16>) = match binning {
        Binning::Rank => (rank_bins_sorted(&ret_sorted, m), rank_bins_sorted(&vol_sorted, m)),
        Binning::Threshold => (
            evaluated
                .returns
                .iter()
                .map(|&v| threshold_bin(&ret_thresholds, v) as u16)
                .collect(),
            evaluated
                .volatilities
                .iter()
                .map(|&v| threshold_bin(&vol_thresholds, v) as u16)
                .collect(),
        ),
    };

    let mut counts = vec![0u64; m * m];
    for (&r, &v) in ret_bins.iter().zip(&vol_bins) {
        counts[r as usize * m + v as usize] += 1;
    }
    let mass = counts.iter().map(|&c| c as f64 / count as f64).collect();
    Ok(CopulaGrid {
        m,
        mass,
        ret_thresholds,
        vol_thresholds,
        sample_count: count,
        window_end: None,
    })
}
