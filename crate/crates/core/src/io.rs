//! On-disk formats: copula grids, indicator series, periods, distance
//! matrices, cluster labels and fitted copula models.
//!
//! Floats are written with 17 significant digits so every file round-trips
//! bit-exactly. Infinite indicator values are written as `inf`.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;

use crate::clustering::{ClusterAssignment, DistanceMatrix};
use crate::copula::{Corner, CopulaGrid};
use crate::error::{Error, Result};
use crate::indicator::{IndicatorSeries, MarketPeriod};
use crate::regression::{n_factor_params, CopulaModel, CornerSpec, QuadraticCellModel, TrainingMeta};

/// `{:.16e}` with `inf` / `-inf` for infinities.
pub fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(",")
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_row(path: &Path, line: usize, text: &str) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|f| parse_f64(f).ok_or_else(|| parse_error(path, line, format!("bad number {f:?}"))))
        .collect()
}

// -- copula grids ----------------------------------------------------------

pub fn copula_to_string(grid: &CopulaGrid) -> String {
    let m = grid.m();
    let mut out = String::new();
    let end = grid.window_end.map(|d| d.to_string()).unwrap_or_default();
    writeln!(out, "# m={m} samples={} window_end={end}", grid.sample_count).unwrap();
    for row in grid.masses().chunks_exact(m) {
        writeln!(out, "{}", join(row)).unwrap();
    }
    writeln!(out, "ret_thresholds,{}", join(&grid.ret_thresholds)).unwrap();
    writeln!(out, "vol_thresholds,{}", join(&grid.vol_thresholds)).unwrap();
    out
}

pub fn write_copula(path: &Path, grid: &CopulaGrid) -> Result<()> {
    write_text(path, &copula_to_string(grid))
}

pub fn parse_copula(text: &str, path: &Path) -> Result<CopulaGrid> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, header) = lines.next().ok_or_else(|| parse_error(path, 1, "empty file"))?;
    let header = header
        .strip_prefix('#')
        .ok_or_else(|| parse_error(path, 1, "missing '# m=...' header"))?;
    let mut m = None;
    let mut samples = 0;
    let mut window_end = None;
    for kv in header.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| parse_error(path, 1, format!("bad header field {kv:?}")))?;
        match k {
            "m" => m = v.parse::<usize>().ok(),
            "samples" => {
                samples = v
                    .parse()
                    .map_err(|_| parse_error(path, 1, format!("bad sample count {v:?}")))?
            }
            "window_end" if !v.is_empty() => {
                window_end = Some(
                    v.parse::<NaiveDate>()
                        .map_err(|_| parse_error(path, 1, format!("bad date {v:?}")))?,
                )
            }
            _ => {}
        }
    }
    let m = m.filter(|&m| m > 0).ok_or_else(|| parse_error(path, 1, "missing m"))?;
    let mut mass = Vec::with_capacity(m * m);
    let mut ret = Vec::new();
    let mut vol = Vec::new();
    for (line, text) in lines {
        if text.is_empty() {
            continue;
        }
        if let Some(rest) = text.strip_prefix("ret_thresholds") {
            ret = parse_row(path, line, rest.trim_start_matches(','))?;
        } else if let Some(rest) = text.strip_prefix("vol_thresholds") {
            vol = parse_row(path, line, rest.trim_start_matches(','))?;
        } else {
            let row = parse_row(path, line, text)?;
            if row.len() != m {
                return Err(parse_error(path, line, format!("expected {m} cells, found {}", row.len())));
            }
            mass.extend(row);
        }
    }
    let grid = CopulaGrid::from_mass(m, mass).map_err(|e| parse_error(path, 0, e.to_string()))?;
    Ok(grid.with_metadata(ret, vol, samples, window_end))
}

pub fn read_copula(path: &Path) -> Result<CopulaGrid> {
    parse_copula(&read(path)?, path)
}

// -- indicator series and periods -----------------------------------------

pub fn indicator_to_string(series: &IndicatorSeries) -> String {
    let mut out = String::from("date,indicator\n");
    for (d, v) in series.dates.iter().zip(&series.values) {
        writeln!(out, "{d},{}", fmt_f64(*v)).unwrap();
    }
    out
}

pub fn parse_indicator(text: &str, path: &Path) -> Result<IndicatorSeries> {
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (d, v) = line
            .split_once(',')
            .ok_or_else(|| parse_error(path, i + 1, "expected date,indicator"))?;
        dates.push(
            d.parse::<NaiveDate>()
                .map_err(|_| parse_error(path, i + 1, format!("bad date {d:?}")))?,
        );
        values.push(parse_f64(v).ok_or_else(|| parse_error(path, i + 1, format!("bad value {v:?}")))?);
    }
    IndicatorSeries::new(dates, values)
}

pub fn periods_to_json(periods: &[MarketPeriod]) -> String {
    let mut s = serde_json::to_string_pretty(periods).expect("periods serialize");
    s.push('\n');
    s
}

pub fn parse_periods(text: &str) -> Result<Vec<MarketPeriod>> {
    serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("periods JSON: {e}")))
}

// -- clustering -------------------------------------------------------------

pub fn distance_matrix_to_string(d: &DistanceMatrix) -> String {
    let mut out = String::new();
    for i in 0..d.len() {
        writeln!(out, "{}", join(d.row(i))).unwrap();
    }
    out
}

pub fn parse_distance_matrix(text: &str, path: &Path) -> Result<DistanceMatrix> {
    let rows = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_row(path, i + 1, l))
        .collect::<Result<Vec<_>>>()?;
    let n = rows.len();
    DistanceMatrix::from_dense(n, rows.concat())
}

pub fn assignment_to_string(assignment: &ClusterAssignment, dates: &[Option<NaiveDate>]) -> String {
    let mut out = String::from("index,date,label,is_medoid\n");
    for (i, &label) in assignment.labels.iter().enumerate() {
        let date = dates.get(i).copied().flatten().map(|d| d.to_string()).unwrap_or_default();
        writeln!(out, "{i},{date},{label},{}", assignment.is_medoid(i)).unwrap();
    }
    out
}

// -- models -----------------------------------------------------------------

const MODEL_MAGIC: &str = "# copula-model v1";

pub fn model_to_string(model: &CopulaModel) -> String {
    let c = &model.corner;
    let t = &model.training;
    let mut out = String::new();
    writeln!(out, "{MODEL_MAGIC}").unwrap();
    writeln!(out, "m={}", c.m).unwrap();
    writeln!(out, "corner={}", c.corner).unwrap();
    writeln!(out, "side={}", c.side).unwrap();
    writeln!(out, "n_train={}", t.n_train).unwrap();
    writeln!(out, "window={}", t.window).unwrap();
    writeln!(out, "dataset={}", t.dataset).unwrap();
    writeln!(out, "cells={}", model.models.len()).unwrap();
    for q in &model.models {
        writeln!(
            out,
            "cell={},{} residual={} iterations={}",
            q.target_cell.0,
            q.target_cell.1,
            fmt_f64(q.fit_residual),
            q.iterations
        )
        .unwrap();
        writeln!(out, "{}", join(&q.factor)).unwrap();
    }
    out
}

pub fn write_model(path: &Path, model: &CopulaModel) -> Result<()> {
    write_text(path, &model_to_string(model))
}

pub fn parse_model(text: &str, path: &Path) -> Result<CopulaModel> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, MODEL_MAGIC)) => {}
        _ => return Err(parse_error(path, 1, format!("expected {MODEL_MAGIC:?}"))),
    }
    let mut header = std::collections::HashMap::new();
    let mut models = Vec::new();
    let mut pending: Option<(usize, (usize, usize), f64, usize)> = None;
    for (line, text) in lines {
        if text.is_empty() {
            continue;
        }
        if let Some((_, cell, residual, iterations)) = pending.take() {
            models.push(QuadraticCellModel {
                target_cell: cell,
                factor: parse_row(path, line, text)?,
                fit_residual: residual,
                iterations,
            });
            continue;
        }
        if let Some(rest) = text.strip_prefix("cell=") {
            let mut fields = rest.split_whitespace();
            let cell = fields
                .next()
                .and_then(|c| c.split_once(','))
                .and_then(|(i, j)| Some((i.parse().ok()?, j.parse().ok()?)))
                .ok_or_else(|| parse_error(path, line, "bad cell index"))?;
            let mut residual = 0.0;
            let mut iterations = 0;
            for f in fields {
                match f.split_once('=') {
                    Some(("residual", v)) => {
                        residual = parse_f64(v).ok_or_else(|| parse_error(path, line, "bad residual"))?
                    }
                    Some(("iterations", v)) => {
                        iterations = v.parse().map_err(|_| parse_error(path, line, "bad iterations"))?
                    }
                    _ => {}
                }
            }
            pending = Some((line, cell, residual, iterations));
            continue;
        }
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| parse_error(path, line, format!("unexpected line {text:?}")))?;
        header.insert(k.to_string(), (line, v.to_string()));
    }
    if let Some((line, ..)) = pending {
        return Err(parse_error(path, line, "cell header without factor row"));
    }
    let get = |key: &str| {
        header
            .get(key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| parse_error(path, 0, format!("missing {key}")))
    };
    let num = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| parse_error(path, header.get(key).map_or(0, |h| h.0), format!("bad {key}")))
    };
    let corner: Corner = get("corner")?.parse()?;
    let spec = CornerSpec::new(corner, num("side")?, num("m")?)?;
    let cells = num("cells")?;
    if cells != models.len() {
        return Err(parse_error(path, 0, format!("header says {cells} cells, found {}", models.len())));
    }
    if let Some(q) = models.iter().find(|q| q.factor.len() != n_factor_params(spec.n_observed())) {
        return Err(parse_error(path, 0, format!("cell {:?}: wrong factor length", q.target_cell)));
    }
    CopulaModel::new(
        spec,
        models,
        TrainingMeta {
            dataset: get("dataset").unwrap_or("").to_string(),
            n_train: num("n_train")?,
            window: num("window")?,
        },
    )
}

pub fn read_model(path: &Path) -> Result<CopulaModel> {
    parse_model(&read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indicator::PeriodKind;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn copula_file_layout() {
        let g = CopulaGrid::uniform(2).with_metadata(
            vec![0.0, 0.5, 1.0],
            vec![1.0, 2.0, 3.0],
            400,
            NaiveDate::from_ymd_opt(2020, 3, 15),
        );
        let text = copula_to_string(&g);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# m=2 samples=400 window_end=2020-03-15");
        assert_eq!(lines[1], "2.5000000000000000e-1,2.5000000000000000e-1");
        assert!(lines[3].starts_with("ret_thresholds,0.0000000000000000e0,"));
        assert!(lines[4].starts_with("vol_thresholds,"));
        assert_eq!(parse_copula(&text, p()).unwrap(), g);
        let bare = CopulaGrid::uniform(3);
        assert_eq!(parse_copula(&copula_to_string(&bare), p()).unwrap(), bare);
    }

    #[test]
    fn copula_parse_errors() {
        assert!(parse_copula("2.5e-1\n", p()).is_err());
        assert!(parse_copula("# m=2\n0.5,0.5\n0.0\n", p()).is_err());
        assert!(parse_copula("# m=2\n0.5,0.5\n0.5,0.5\n", p()).is_err());
    }

    #[test]
    fn indicator_with_infinity() {
        let d = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let s = IndicatorSeries::new(vec![d, d.succ_opt().unwrap()], vec![0.5, f64::INFINITY]).unwrap();
        let text = indicator_to_string(&s);
        assert!(text.ends_with(",inf\n"));
        assert_eq!(parse_indicator(&text, p()).unwrap(), s);
    }

    #[test]
    fn periods_json_shape() {
        let d = NaiveDate::from_ymd_opt(2008, 9, 15).unwrap();
        let periods = vec![MarketPeriod {
            start: d,
            end: d,
            kind: PeriodKind::Crisis,
            run_length: 120,
        }];
        let json = periods_to_json(&periods);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v[0]["kind"], "crisis");
        assert_eq!(v[0]["start"], "2008-09-15");
        assert_eq!(v[0]["run_length"], 120);
        assert_eq!(parse_periods(&json).unwrap(), periods);
        assert_eq!(periods_to_json(&[]).trim(), "[]");
    }

    #[test]
    fn assignment_rows() {
        let a = ClusterAssignment {
            labels: vec![0, 1],
            medoids: vec![0, 1],
            k: 2,
            cost: 0.0,
        };
        let text = assignment_to_string(&a, &[NaiveDate::from_ymd_opt(2001, 1, 2), None]);
        assert_eq!(text, "index,date,label,is_medoid\n0,2001-01-02,0,true\n1,,1,true\n");
    }

    proptest! {
        #[test]
        fn model_and_matrix_round_trip(
            factors in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 3), 3),
            dists in proptest::collection::vec(0.0f64..2.0, 3),
        ) {
            let spec = CornerSpec::new(Corner::UpperRight, 1, 2).unwrap();
            let models: Vec<QuadraticCellModel> = spec.target_cells().into_iter().zip(&factors)
                .map(|(cell, f)| QuadraticCellModel {
                    target_cell: cell, factor: vec![f[0]], fit_residual: f[1].abs(), iterations: 3,
                })
                .collect();
            let model = CopulaModel::new(spec, models, TrainingMeta {
                dataset: "synthetic".into(), n_train: 7, window: 60,
            }).unwrap();
            let text = model_to_string(&model);
            prop_assert_eq!(parse_model(&text, p()).unwrap(), model);

            let d = DistanceMatrix::from_fn(3, |i, j| dists[i + j - 1]);
            let text = distance_matrix_to_string(&d);
            prop_assert_eq!(parse_distance_matrix(&text, p()).unwrap(), d);
        }
    }
}
