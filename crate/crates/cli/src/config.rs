//! Run settings: command-line flags override the config file, which
//! overrides built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use crisis_core::copula::{DEFAULT_GRID, DEFAULT_SAMPLES};
use crisis_core::data::DEFAULT_DATE_FORMAT;
use crisis_core::indicator::DEFAULT_BAND;
use crisis_core::pipeline::DEFAULT_WINDOW;
use crisis_core::PipelineParams;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    Prices,
    Returns,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Daily CSV: `date,<asset>,...`
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<InputKind>,
    /// chrono format of the date column [default: %Y-%m-%d]
    #[arg(long)]
    pub date_format: Option<String>,
    /// Rolling window length in trading days [default: 60]
    #[arg(long)]
    pub window: Option<usize>,
    /// Copula grid resolution m [default: 10]
    #[arg(long)]
    pub grid: Option<usize>,
    /// Random portfolios per window [default: 500000]
    #[arg(long)]
    pub samples: Option<usize>,
    /// Diagonal band half-width as a fraction of m [default: 0.10]
    #[arg(long)]
    pub band: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads [default: all cores]
    #[arg(long)]
    pub workers: Option<usize>,
    /// `key = value` file with any of the settings above
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Config file contents: flat `key = value` lines, `#` comments. Keys
/// mirror the long flag names; values may be wrapped in double quotes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub kind: Option<InputKind>,
    pub date_format: Option<String>,
    pub window: Option<usize>,
    pub grid: Option<usize>,
    pub samples: Option<usize>,
    pub band: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub k: Option<usize>,
    pub method: Option<String>,
    pub stride: Option<usize>,
    pub corner: Option<String>,
    pub side: Option<usize>,
    pub model: Option<PathBuf>,
    pub copulas: Option<PathBuf>,
}

fn num<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| anyhow::anyhow!("line {line}: invalid value {value:?} for `{key}`"))
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                bail!("line {line}: expected `key = value`");
            };
            let key = key.trim().replace('_', "-");
            let value = value.trim();
            let value = value
                .strip_prefix('"')
                .and_then(|v| v.strip_suffix('"'))
                .unwrap_or(value);
            match key.as_str() {
                "input" => c.input = Some(value.into()),
                "kind" => {
                    c.kind = Some(InputKind::from_str(value, true).map_err(|e| {
                        anyhow::anyhow!("line {line}: {e}")
                    })?)
                }
                "date-format" => c.date_format = Some(value.to_string()),
                "window" => c.window = Some(num(&key, value, line)?),
                "grid" => c.grid = Some(num(&key, value, line)?),
                "samples" => c.samples = Some(num(&key, value, line)?),
                "band" => c.band = Some(num(&key, value, line)?),
                "seed" => c.seed = Some(num(&key, value, line)?),
                "out" => c.out = Some(value.into()),
                "workers" => c.workers = Some(num(&key, value, line)?),
                "k" => c.k = Some(num(&key, value, line)?),
                "method" => c.method = Some(value.to_string()),
                "stride" => c.stride = Some(num(&key, value, line)?),
                "corner" => c.corner = Some(value.to_string()),
                "side" => c.side = Some(num(&key, value, line)?),
                "model" => c.model = Some(value.into()),
                "copulas" => c.copulas = Some(value.into()),
                _ => bail!("line {line}: unknown key `{key}`"),
            }
        }
        Ok(c)
    }
}

/// Fully resolved settings. This is what the manifest records and hashes;
/// `workers` is left out since it cannot change any artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub input: Option<PathBuf>,
    pub kind: InputKind,
    pub date_format: String,
    pub window: usize,
    pub grid: usize,
    pub samples: usize,
    pub band: f64,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl Settings {
    pub fn resolve(args: &CommonArgs, file: &FileConfig) -> Result<Self> {
        let out = args
            .out
            .clone()
            .or_else(|| file.out.clone())
            .context("no output directory: pass --out or set `out` in the config")?;
        let settings = Self {
            input: args.input.clone().or_else(|| file.input.clone()),
            kind: args.kind.or(file.kind).unwrap_or(InputKind::Returns),
            date_format: args
                .date_format
                .clone()
                .or_else(|| file.date_format.clone())
                .unwrap_or_else(|| DEFAULT_DATE_FORMAT.to_string()),
            window: args.window.or(file.window).unwrap_or(DEFAULT_WINDOW),
            grid: args.grid.or(file.grid).unwrap_or(DEFAULT_GRID),
            samples: args.samples.or(file.samples).unwrap_or(DEFAULT_SAMPLES),
            band: args.band.or(file.band).unwrap_or(DEFAULT_BAND),
            seed: args.seed.or(file.seed).unwrap_or(0),
            out,
            workers: args.workers.or(file.workers),
        };
        if settings.workers == Some(0) {
            bail!("--workers must be at least 1");
        }
        if settings.window < 2 {
            bail!("--window must be at least 2, got {}", settings.window);
        }
        if settings.grid < 2 {
            bail!("--grid must be at least 2, got {}", settings.grid);
        }
        if settings.samples == 0 {
            bail!("--samples must be positive");
        }
        if !(0.0..0.5).contains(&settings.band) {
            bail!("--band must be in [0, 0.5), got {}", settings.band);
        }
        Ok(settings)
    }

    pub fn pipeline(&self) -> PipelineParams {
        PipelineParams {
            window: self.window,
            grid: self.grid,
            samples: self.samples,
            band_fraction: self.band,
            seed: self.seed,
        }
    }

    pub fn input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .context("no input file: pass --input or set `input` in the config")
    }
}
