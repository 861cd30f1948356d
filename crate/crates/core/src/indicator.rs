//! Diagonal-band crisis indicator, run classification and corner features.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::copula::{Corner, CopulaGrid};
use crate::error::{Error, Result};

pub const DEFAULT_BAND: f64 = 0.10;
pub const DEFAULT_CORNER_SIZE: usize = 3;
/// Runs above 1 longer than this are warnings.
pub const WARNING_MIN_RUN: usize = 61;
/// Runs above 1 at least this long are crises.
pub const CRISIS_MIN_RUN: usize = 100;

/// Cells near the main diagonal ("up" band) and the anti-diagonal ("down"
/// band) of an m×m grid, with the cells shared by both removed from both.
#[derive(Debug, Clone, PartialEq)]
pub struct BandGeometry {
    pub m: usize,
    pub band_fraction: f64,
    pub half_width: usize,
    pub up_cells: Vec<(usize, usize)>,
    pub down_cells: Vec<(usize, usize)>,
}

pub fn band_masks(m: usize, band_fraction: f64) -> Result<BandGeometry> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("grid resolution {m} < 2")));
    }
    if !(0.0..0.5).contains(&band_fraction) {
        return Err(Error::InvalidArgument(format!(
            "band fraction {band_fraction} outside [0, 0.5)"
        )));
    }
    let w = (band_fraction * m as f64).round() as i64;
    let last = m as i64 - 1;
    let mut up_cells = Vec::new();
    let mut down_cells = Vec::new();
    for i in 0..m as i64 {
        for j in 0..m as i64 {
            let up = (i - j).abs() <= w;
            let down = (i + j - last).abs() <= w;
            match (up, down) {
                (true, false) => up_cells.push((i as usize, j as usize)),
                (false, true) => down_cells.push((i as usize, j as usize)),
                _ => {}
            }
        }
    }
    Ok(BandGeometry {
        m,
        band_fraction,
        half_width: w as usize,
        up_cells,
        down_cells,
    })
}

impl BandGeometry {
    pub fn up_mass(&self, grid: &CopulaGrid) -> f64 {
        self.up_cells.iter().map(|&(i, j)| grid.mass(i, j)).sum()
    }

    pub fn down_mass(&self, grid: &CopulaGrid) -> f64 {
        self.down_cells.iter().map(|&(i, j)| grid.mass(i, j)).sum()
    }

    /// Down-band mass over up-band mass. `+inf` when only the up band is
    /// empty; 1 when both are.
    pub fn indicator(&self, grid: &CopulaGrid) -> Result<f64> {
        if grid.m() != self.m {
            return Err(Error::Dimension(format!(
                "band geometry for m={} applied to grid with m={}",
                self.m,
                grid.m()
            )));
        }
        let up = self.up_mass(grid);
        let down = self.down_mass(grid);
        Ok(match (up > 0.0, down > 0.0) {
            (true, _) => down / up,
            (false, true) => f64::INFINITY,
            (false, false) => 1.0,
        })
    }
}

pub fn indicator(grid: &CopulaGrid, band_fraction: f64) -> Result<f64> {
    band_masks(grid.m(), band_fraction)?.indicator(grid)
}

/// Indicator values dated by window end.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IndicatorSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl IndicatorSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} dates for {} values",
                dates.len(),
                values.len()
            )));
        }
        Ok(Self { dates, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeriodKind {
    Warning,
    Crisis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketPeriod {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub kind: PeriodKind,
    pub run_length: usize,
}

impl MarketPeriod {
    pub fn overlaps(&self, start: NaiveDate, end: NaiveDate) -> bool {
        self.start <= end && start <= self.end
    }
}

/// Maximal runs of consecutive entries above 1, classified by length.
pub fn classify_periods(series: &IndicatorSeries) -> Vec<MarketPeriod> {
    let mut periods = Vec::new();
    let mut run_start: Option<usize> = None;
    let n = series.values.len();
    for t in 0..=n {
        let above = t < n && series.values[t] > 1.0;
        match (above, run_start) {
            (true, None) => run_start = Some(t),
            (false, Some(s)) => {
                let len = t - s;
                let kind = if len >= CRISIS_MIN_RUN {
                    Some(PeriodKind::Crisis)
                } else if len >= WARNING_MIN_RUN {
                    Some(PeriodKind::Warning)
                } else {
                    None
                };
                if let Some(kind) = kind {
                    periods.push(MarketPeriod {
                        start: series.dates[s],
                        end: series.dates[t - 1],
                        kind,
                        run_length: len,
                    });
                }
                run_start = None;
            }
            _ => {}
        }
    }
    periods
}

/// `[UL/UR, UL/LL, UL/LR, UR/LL, UR/LR, LL/LR]` of the four corner-block masses.
///
/// A zero denominator gives `+inf`, except `0/0` which is 0.
pub fn corner_features(grid: &CopulaGrid, corner_size: usize) -> Result<[f64; 6]> {
    if corner_size == 0 || 2 * corner_size > grid.m() {
        return Err(Error::InvalidArgument(format!(
            "corner size {corner_size} invalid for m={}",
            grid.m()
        )));
    }
    let [ul, ur, ll, lr] = Corner::ALL.map(|c| c.mass(grid, corner_size));
    let ratio = |a: f64, b: f64| {
        if b > 0.0 {
            a / b
        } else if a > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    };
    Ok([
        ratio(ul, ur),
        ratio(ul, ll),
        ratio(ul, lr),
        ratio(ur, ll),
        ratio(ur, lr),
        ratio(ll, lr),
    ])
}
