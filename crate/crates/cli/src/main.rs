mod config;
mod output;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use crisis_core::clustering::{affinity, distance_matrix, kmedoids, kmedoids_features, spectral_clusters};
use crisis_core::data::{load_prices_csv, load_returns_csv, prices_to_returns};
use crisis_core::indicator::{classify_periods, corner_features, DEFAULT_CORNER_SIZE};
use crisis_core::pipeline::{series_from_grids, window_copulas};
use crisis_core::regression::{
    fit_copula_model, predict_from_grid, DEFAULT_CORNER, DEFAULT_SIDE,
};
use crisis_core::{io, report, CopulaGrid, Corner, CornerSpec, FitOptions, ReturnsTable, TrainingMeta};
use serde::Serialize;

use config::{CommonArgs, FileConfig, InputKind, Settings};
use output::Staging;

#[derive(Debug, Parser)]
#[command(name = "crisis", version, about = "Copula-based crisis detection for asset markets")]
struct Cli {
    /// Only print warnings and errors
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the copula of every rolling window
    Copulas {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Indicator series and warning/crisis periods
    Detect {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Cluster window copulas
    Cluster {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Use every n-th window
        #[arg(long)]
        stride: Option<usize>,
        /// Read copulas written by `copulas` instead of recomputing them
        #[arg(long)]
        copulas: Option<PathBuf>,
    },
    /// Fit per-cell quadratic models on the copulas of the input
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        corner: CornerArgs,
        /// Read training copulas from a `copulas` output directory
        #[arg(long)]
        copulas: Option<PathBuf>,
    },
    /// Indicator series from model-reconstructed copulas
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, clap::Args)]
struct CornerArgs {
    /// Observed block: upper-left, upper-right, lower-left or lower-right.
    /// Matrix orientation: lower rows hold the highest returns, left
    /// columns the lowest volatility [default: lower-left]
    #[arg(long, value_parser = parse_corner)]
    corner: Option<Corner>,
    /// Side of the observed square block [default: 3]
    #[arg(long)]
    side: Option<usize>,
}

fn parse_corner(s: &str) -> std::result::Result<Corner, String> {
    s.parse::<Corner>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Method {
    EmdSpectral,
    CornerKmedoids,
}

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet {
            log::LevelFilter::Warn
        } else {
            log::LevelFilter::Info
        })
        .parse_default_env()
        .format_timestamp(None)
        .format_target(false)
        .init();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn common_of(cmd: &Command) -> &CommonArgs {
    match cmd {
        Command::Copulas { common }
        | Command::Detect { common }
        | Command::Cluster { common, .. }
        | Command::Fit { common, .. }
        | Command::Predict { common, .. } => common,
    }
}

fn run(cmd: Command) -> Result<()> {
    let common = common_of(&cmd);
    let file = match &common.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let settings = Settings::resolve(common, &file)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = settings.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting worker pool")?;
    pool.install(|| match &cmd {
        Command::Copulas { .. } => cmd_copulas(&settings),
        Command::Detect { .. } => cmd_detect(&settings),
        Command::Cluster {
            k,
            method,
            stride,
            copulas,
            ..
        } => {
            let opts = ClusterSettings {
                k: k.or(file.k).unwrap_or(2),
                method: match method {
                    Some(m) => *m,
                    None => match &file.method {
                        Some(s) => Method::from_str(s, true).map_err(anyhow::Error::msg)?,
                        None => Method::EmdSpectral,
                    },
                },
                stride: stride.or(file.stride).unwrap_or(1),
                copulas: copulas.clone().or_else(|| file.copulas.clone()),
            };
            cmd_cluster(&settings, &opts)
        }
        Command::Fit { corner, copulas, .. } => {
            let opts = FitSettings {
                corner: match corner.corner {
                    Some(c) => c,
                    None => match &file.corner {
                        Some(s) => s.parse()?,
                        None => DEFAULT_CORNER,
                    },
                },
                side: corner.side.or(file.side).unwrap_or(DEFAULT_SIDE),
                copulas: copulas.clone().or_else(|| file.copulas.clone()),
            };
            cmd_fit(&settings, &opts)
        }
        Command::Predict { model, .. } => {
            let model = model
                .clone()
                .or_else(|| file.model.clone())
                .context("no model: pass --model or set `model` in the config")?;
            cmd_predict(&settings, &model)
        }
    })
}

struct Input {
    table: ReturnsTable,
    bytes: Vec<u8>,
}

fn load_input(settings: &Settings) -> Result<Input> {
    let path = settings.input()?;
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let table = match settings.kind {
        InputKind::Returns => load_returns_csv(path, &settings.date_format)?,
        InputKind::Prices => prices_to_returns(&load_prices_csv(path, &settings.date_format)?)?,
    };
    log::info!(
        "loaded {} days x {} assets from {}",
        table.n_rows(),
        table.n_assets(),
        path.display()
    );
    Ok(Input { table, bytes })
}

fn compute_copulas(settings: &Settings, table: &ReturnsTable) -> Result<Vec<CopulaGrid>> {
    let params = settings.pipeline();
    let n = table.n_rows().saturating_sub(params.window) + 1;
    log::info!(
        "estimating {n} window copulas ({} samples each, m={})",
        params.samples,
        params.grid
    );
    Ok(window_copulas(table, &params)?)
}

fn copula_file_name(index: usize, grid: &CopulaGrid) -> String {
    match grid.window_end {
        Some(d) => format!("copulas/{index:05}_{d}.csv"),
        None => format!("copulas/{index:05}.csv"),
    }
}

/// Copulas written by the `copulas` command, in file-name order.
fn read_copula_dir(dir: &Path) -> Result<Vec<CopulaGrid>> {
    let dir = if dir.join("copulas").is_dir() {
        dir.join("copulas")
    } else {
        dir.to_path_buf()
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no copula files in {}", dir.display());
    }
    let grids = paths
        .iter()
        .map(|p| io::read_copula(p))
        .collect::<crisis_core::Result<Vec<_>>>()?;
    log::info!("read {} copulas from {}", grids.len(), dir.display());
    Ok(grids)
}

fn cmd_copulas(settings: &Settings) -> Result<()> {
    let input = load_input(settings)?;
    let mut stage = Staging::new(&settings.out)?;
    let grids = compute_copulas(settings, &input.table)?;
    for (i, g) in grids.iter().enumerate() {
        stage.write(&copula_file_name(i, g), io::copula_to_string(g).as_bytes())?;
    }
    if let Some(last) = grids.last() {
        stage.write("last_copula.svg", report::copula_heatmap_svg(last).as_bytes())?;
    }
    let out = stage.commit("copulas", settings, &(), Some(&input.bytes))?;
    log::info!("wrote {} copulas to {}", grids.len(), out.display());
    Ok(())
}

fn write_detection(
    stage: &mut Staging,
    grids: &[CopulaGrid],
    band: f64,
) -> Result<Vec<crisis_core::MarketPeriod>> {
    let series = series_from_grids(grids, band)?;
    let periods = classify_periods(&series);
    stage.write("indicator.csv", io::indicator_to_string(&series).as_bytes())?;
    stage.write("periods.json", io::periods_to_json(&periods).as_bytes())?;
    stage.write(
        "timeline.svg",
        report::indicator_timeline_svg(&series, &periods).as_bytes(),
    )?;
    for p in &periods {
        log::info!("{:?} {} .. {} ({} days)", p.kind, p.start, p.end, p.run_length);
    }
    Ok(periods)
}

fn cmd_detect(settings: &Settings) -> Result<()> {
    let input = load_input(settings)?;
    let mut stage = Staging::new(&settings.out)?;
    let grids = compute_copulas(settings, &input.table)?;
    let periods = write_detection(&mut stage, &grids, settings.band)?;
    let out = stage.commit("detect", settings, &(), Some(&input.bytes))?;
    log::info!("{} periods; wrote {}", periods.len(), out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct ClusterSettings {
    k: usize,
    method: Method,
    stride: usize,
    #[serde(skip)]
    copulas: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ClusterSummary {
    k: usize,
    method: Method,
    n_points: usize,
    sizes: Vec<usize>,
    mean_indicator: Vec<f64>,
    medoid_dates: Vec<Option<String>>,
    cost: f64,
}

fn cmd_cluster(settings: &Settings, opts: &ClusterSettings) -> Result<()> {
    if opts.k == 0 {
        bail!("--k must be at least 1");
    }
    if opts.stride == 0 {
        bail!("--stride must be at least 1");
    }
    let (grids, input_bytes) = match &opts.copulas {
        Some(dir) => (read_copula_dir(dir)?, None),
        None => {
            let input = load_input(settings)?;
            (compute_copulas(settings, &input.table)?, Some(input.bytes))
        }
    };
    let grids: Vec<CopulaGrid> = grids.into_iter().step_by(opts.stride).collect();
    if opts.k > grids.len() {
        bail!("--k {} exceeds the {} copulas to cluster", opts.k, grids.len());
    }
    let mut stage = Staging::new(&settings.out)?;
    log::info!("clustering {} copulas into {} groups", grids.len(), opts.k);
    let assignment = match opts.method {
        Method::EmdSpectral => {
            let dist = distance_matrix(&grids)?;
            stage.write("distances.csv", io::distance_matrix_to_string(&dist).as_bytes())?;
            if opts.k == 1 || opts.k == grids.len() {
                kmedoids(&dist, opts.k, settings.seed)?
            } else {
                spectral_clusters(&affinity(&dist)?, opts.k, settings.seed)?
            }
        }
        Method::CornerKmedoids => {
            let features = grids
                .iter()
                .map(|g| corner_features(g, DEFAULT_CORNER_SIZE).map(|f| f.to_vec()))
                .collect::<crisis_core::Result<Vec<_>>>()?;
            kmedoids_features(&features, opts.k, settings.seed)?
        }
    };
    let dates: Vec<_> = grids.iter().map(|g| g.window_end).collect();
    stage.write("clusters.csv", io::assignment_to_string(&assignment, &dates).as_bytes())?;

    let series = series_from_grids(&grids, settings.band)?;
    let sizes = assignment.cluster_sizes();
    let mut sums = vec![0.0; opts.k];
    for (&l, &v) in assignment.labels.iter().zip(&series.values) {
        sums[l] += v;
    }
    let summary = ClusterSummary {
        k: opts.k,
        method: opts.method,
        n_points: grids.len(),
        mean_indicator: sums.iter().zip(&sizes).map(|(s, &n)| s / n as f64).collect(),
        sizes,
        medoid_dates: assignment
            .medoids
            .iter()
            .map(|&i| dates[i].map(|d| d.to_string()))
            .collect(),
        cost: assignment.cost,
    };
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    stage.write("clusters.json", json.as_bytes())?;
    let points: Vec<(usize, usize)> = assignment.labels.iter().copied().enumerate().collect();
    stage.write(
        "clusters.svg",
        report::cluster_overlay_svg(&series, &points).as_bytes(),
    )?;
    let out = stage.commit("cluster", settings, opts, input_bytes.as_deref())?;
    log::info!("cluster sizes {:?}; wrote {}", summary.sizes, out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct FitSettings {
    corner: Corner,
    side: usize,
    #[serde(skip)]
    copulas: Option<PathBuf>,
}

fn cmd_fit(settings: &Settings, opts: &FitSettings) -> Result<()> {
    let (grids, input_bytes, dataset) = match &opts.copulas {
        Some(dir) => (read_copula_dir(dir)?, None, dir.display().to_string()),
        None => {
            let input = load_input(settings)?;
            let name = settings
                .input()?
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            (compute_copulas(settings, &input.table)?, Some(input.bytes), name)
        }
    };
    let m = grids.first().map_or(settings.grid, |g| g.m());
    let spec = CornerSpec::new(opts.corner, opts.side, m)?;
    let mut stage = Staging::new(&settings.out)?;
    log::info!(
        "fitting {} cell models on {} copulas",
        m * m - spec.n_observed(),
        grids.len()
    );
    let model = fit_copula_model(
        &grids,
        &spec,
        &FitOptions::default(),
        TrainingMeta {
            dataset,
            n_train: grids.len(),
            window: settings.window,
        },
    )?;
    let capped = model
        .models
        .iter()
        .filter(|q| q.iterations >= FitOptions::default().solver.max_iterations)
        .count();
    if capped > 0 {
        log::warn!("{capped} cell fits stopped at the iteration limit");
    }
    stage.write("model.txt", io::model_to_string(&model).as_bytes())?;
    let out = stage.commit("fit", settings, opts, input_bytes.as_deref())?;
    log::info!("wrote model to {}", out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct PredictSettings {
    model_sha256: String,
}

fn cmd_predict(settings: &Settings, model_path: &Path) -> Result<()> {
    let model_bytes =
        std::fs::read(model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let model = io::parse_model(&String::from_utf8_lossy(&model_bytes), model_path)?;
    if model.corner.m != settings.grid {
        bail!(
            "model was fitted on m={} grids but --grid is {}",
            model.corner.m,
            settings.grid
        );
    }
    let input = load_input(settings)?;
    let mut stage = Staging::new(&settings.out)?;
    let grids = compute_copulas(settings, &input.table)?;
    let estimated = grids
        .iter()
        .map(|g| predict_from_grid(&model, g))
        .collect::<crisis_core::Result<Vec<_>>>()?;
    write_detection(&mut stage, &estimated, settings.band)?;
    let extra = PredictSettings {
        model_sha256: output::sha256_hex(&model_bytes),
    };
    let out = stage.commit("predict", settings, &extra, Some(&input.bytes))?;
    log::info!("wrote {}", out.display());
    Ok(())
}
