//! Crisis detection from return/volatility copulas of random portfolios.
//!
//! Rolling windows of asset returns are summarized by their sample moments.
//! Uniformly drawn long-only portfolios are evaluated under those moments and
//! binned into an m×m copula of (return, volatility) ranks. The ratio of mass
//! on the anti-diagonal to mass on the diagonal flags stressed markets.
//! Copulas can be clustered by earth mover's distance and reconstructed from
//! one corner block by per-cell PSD quadratic regressions.

pub mod clustering;
pub mod copula;
pub mod data;
pub mod error;
pub mod indicator;
pub mod io;
pub mod pipeline;
pub mod regression;
pub mod report;
pub mod simplex;

pub use clustering::{ClusterAssignment, DistanceMatrix, SpectralVariant};
pub use copula::{Binning, CopulaGrid, Corner};
pub use data::{ReturnsTable, Window, WindowMoments};
pub use error::{Error, Result};
pub use indicator::{BandGeometry, IndicatorSeries, MarketPeriod, PeriodKind};
pub use pipeline::PipelineParams;
pub use regression::{CopulaModel, CornerSpec, FitOptions, QuadraticCellModel, TrainingMeta};
pub use simplex::{EvaluatedSamples, PortfolioBatch};
