//! Loading of daily price/return tables and rolling-window moment estimation.
//!
//! Tables are stored row-major with `NaN` marking a missing cell. A missing
//! cell is only legal before an asset's first observation or after its last
//! one; gaps inside the active span are rejected at load time.

use std::collections::HashSet;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_DATE_FORMAT: &str = "%Y-%m-%d";

/// Dated matrix of daily observations (rows = days, columns = assets).
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsTable {
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    values: Vec<f64>,
}

impl ReturnsTable {
    /// Builds a table from row-major values. `NaN` is the missing marker.
    pub fn new(dates: Vec<NaiveDate>, assets: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != dates.len() * assets.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} rows x {} assets",
                values.len(),
                dates.len(),
                assets.len()
            )));
        }
        for w in dates.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidArgument(format!(
                    "dates not strictly increasing at {}",
                    w[1]
                )));
            }
        }
        let table = Self {
            dates,
            assets,
            values,
        };
        table.check_active_spans()?;
        Ok(table)
    }

    /// Convenience constructor for a fully observed table.
    pub fn from_rows(dates: Vec<NaiveDate>, assets: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * assets.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != assets.len() {
                return Err(Error::Dimension(format!(
                    "row {i} has {} values, expected {}",
                    row.len(),
                    assets.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::new(dates, assets, values)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    /// Value at (row, asset); `None` when missing.
    pub fn get(&self, row: usize, asset: usize) -> Option<f64> {
        let v = self.values[row * self.assets.len() + asset];
        (!v.is_nan()).then_some(v)
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.assets.len();
        &self.values[row * n..(row + 1) * n]
    }

    pub fn column(&self, asset: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        (0..self.n_rows()).map(move |t| self.get(t, asset))
    }

    fn check_active_spans(&self) -> Result<()> {
        for a in 0..self.n_assets() {
            let present: Vec<usize> = (0..self.n_rows())
                .filter(|&t| self.get(t, a).is_some())
                .collect();
            if let (Some(&first), Some(&last)) = (present.first(), present.last()) {
                if last - first + 1 != present.len() {
                    let gap = (first..=last)
                        .find(|&t| self.get(t, a).is_none())
                        .unwrap_or(first);
                    return Err(Error::InvalidArgument(format!(
                        "asset {} has a missing value inside its active span on {}",
                        self.assets[a], self.dates[gap]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Reads a `date,<asset>,...` CSV. Empty fields are missing values.
///
/// Rows are returned sorted by date. Line numbers in errors are 1-based and
/// count the header.
pub fn load_returns_csv(path: impl AsRef<Path>, date_format: &str) -> Result<ReturnsTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table_csv(&text, path, date_format)
}

/// Same file layout as [`load_returns_csv`]; values are close prices.
pub fn load_prices_csv(path: impl AsRef<Path>, date_format: &str) -> Result<ReturnsTable> {
    let table = load_returns_csv(path, date_format)?;
    for a in 0..table.n_assets() {
        for t in 0..table.n_rows() {
            if let Some(p) = table.get(t, a) {
                if p <= 0.0 {
                    return Err(Error::NonPositivePrice {
                        asset: table.assets[a].clone(),
                        date: table.dates[t].to_string(),
                        value: p,
                    });
                }
            }
        }
    }
    Ok(table)
}

pub(crate) fn parse_table_csv(text: &str, path: &Path, date_format: &str) -> Result<ReturnsTable> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());

    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.len() < 2 {
        return Err(parse_err(1, "header needs a date column and at least one asset".into()));
    }
    let assets: Vec<String> = header.iter().skip(1).map(str::to_string).collect();

    let mut rows: Vec<(NaiveDate, usize, Vec<f64>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != assets.len() + 1 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", assets.len() + 1, record.len()),
            ));
        }
        let date = NaiveDate::parse_from_str(&record[0], date_format)
            .map_err(|e| parse_err(line, format!("bad date {:?}: {e}", &record[0])))?;
        let mut values = Vec::with_capacity(assets.len());
        for (field, asset) in record.iter().skip(1).zip(&assets) {
            if field.is_empty() {
                values.push(f64::NAN);
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("non-numeric value {field:?} for {asset}")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value {field:?} for {asset}")));
            }
            values.push(v);
        }
        rows.push((date, line, values));
    }

    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{}: need at least 2 data rows, found {}",
            path.display(),
            rows.len()
        )));
    }

    let mut seen = HashSet::with_capacity(rows.len());
    for (date, line, _) in &rows {
        if !seen.insert(*date) {
            return Err(Error::DuplicateDate {
                date: date.to_string(),
                line: *line,
            });
        }
    }
    rows.sort_by_key(|(d, _, _)| *d);

    let dates = rows.iter().map(|(d, _, _)| *d).collect();
    let values = rows.into_iter().flat_map(|(_, _, v)| v).collect();
    ReturnsTable::new(dates, assets, values)
}

/// Converts close prices to simple daily returns `p_t / p_{t-1} - 1`.
///
/// The output has one row fewer than the input and is dated by the later day.
/// A return is missing whenever either price is missing.
pub fn prices_to_returns(prices: &ReturnsTable) -> Result<ReturnsTable> {
    let t_len = prices.n_rows();
    let n = prices.n_assets();
    if t_len < 2 {
        return Err(Error::InsufficientData(
            "need at least 2 price rows to form a return".into(),
        ));
    }
    for a in 0..n {
        for t in 0..t_len {
            if let Some(p) = prices.get(t, a) {
                if p <= 0.0 {
                    return Err(Error::NonPositivePrice {
                        asset: prices.assets[a].clone(),
                        date: prices.dates[t].to_string(),
                        value: p,
                    });
                }
            }
        }
    }
    let mut values = Vec::with_capacity((t_len - 1) * n);
    for t in 1..t_len {
        for a in 0..n {
            let r = match (prices.get(t - 1, a), prices.get(t, a)) {
                (Some(prev), Some(cur)) => cur / prev - 1.0,
                _ => f64::NAN,
            };
            values.push(r);
        }
    }
    ReturnsTable::new(prices.dates[1..].to_vec(), prices.assets.clone(), values)
}

/// A `len`-row span of a table restricted to the assets observed on every day
/// of the span.
#[derive(Debug, Clone)]
pub struct Window<'a> {
    table: &'a ReturnsTable,
    /// Index of the first row.
    pub start: usize,
    pub len: usize,
    /// Columns of `table` fully observed over the span.
    pub assets: Vec<usize>,
}

impl<'a> Window<'a> {
    /// Row index of the last day, used as the window's identity.
    pub fn end_index(&self) -> usize {
        self.start + self.len - 1
    }

    pub fn end_date(&self) -> NaiveDate {
        self.table.dates[self.end_index()]
    }

    pub fn value(&self, day: usize, asset_slot: usize) -> f64 {
        self.table.values[(self.start + day) * self.table.n_assets() + self.assets[asset_slot]]
    }

    pub fn table(&self) -> &'a ReturnsTable {
        self.table
    }
}

/// All windows of `k` consecutive rows, one per end date, step one row.
pub fn rolling_windows(table: &ReturnsTable, k: usize) -> Result<Vec<Window<'_>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("window length {k} < 2")));
    }
    let t_len = table.n_rows();
    if t_len < k {
        return Err(Error::InsufficientData(format!(
            "table has {t_len} rows, window needs {k}"
        )));
    }
    let n = table.n_assets();
    // missing[a][t] = number of missing cells of asset a in rows [0, t)
    let missing: Vec<Vec<u32>> = (0..n)
        .map(|a| {
            let mut acc = Vec::with_capacity(t_len + 1);
            acc.push(0u32);
            let mut c = 0;
            for t in 0..t_len {
                if table.get(t, a).is_none() {
                    c += 1;
                }
                acc.push(c);
            }
            acc
        })
        .collect();

    Ok((0..=t_len - k)
        .map(|start| Window {
            table,
            start,
            len: k,
            assets: (0..n)
                .filter(|&a| missing[a][start + k] == missing[a][start])
                .collect(),
        })
        .collect())
}

/// Per-window sample mean and unbiased covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowMoments {
    pub mean_returns: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub window_end: NaiveDate,
    /// Table columns the moments refer to, in order.
    pub assets: Vec<usize>,
}

impl WindowMoments {
    pub fn n_assets(&self) -> usize {
        self.mean_returns.len()
    }
}

pub fn window_moments(window: &Window<'_>) -> Result<WindowMoments> {
    let n = window.assets.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "window ending {} has {n} active assets, need at least 2",
            window.end_date()
        )));
    }
    let k = window.len;
    let data = DMatrix::from_fn(k, n, |t, a| window.value(t, a));
    let (mean, cov) = sample_moments(&data);
    Ok(WindowMoments {
        mean_returns: mean,
        covariance: cov,
        window_end: window.end_date(),
        assets: window.assets.clone(),
    })
}

/// Column means and the symmetrized unbiased covariance of a k×n sample.
pub fn sample_moments(data: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (k, n) = data.shape();
    let mean = DVector::from_iterator(n, data.column_iter().map(|c| c.sum() / k as f64));
    let mut centered = data.clone();
    for (mut col, mu) in centered.column_iter_mut().zip(mean.iter()) {
        col.add_scalar_mut(-mu);
    }
    let mut cov = centered.tr_mul(&centered) / (k as f64 - 1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
    }
    (mean, cov)
}
