//! Reconstruction of a full copula from the masses of one corner block.
//!
//! For every cell outside the observed corner a PSD quadratic form is fitted,
//! `ŷ = xᵀ Σ x` with `x` the observed corner masses. `Σ = L Lᵀ` with `L`
//! lower triangular keeps every fitted form positive semidefinite without
//! constraints, and the factor is fitted by trust-region least squares.

pub mod trust_region;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::copula::{Corner, CopulaGrid, MASS_TOLERANCE};
use crate::data::ReturnsTable;
use crate::error::{Error, Result};
use crate::indicator::IndicatorSeries;
use crate::pipeline::{series_from_grids, window_copulas, PipelineParams};
use trust_region::{minimize, LeastSquaresProblem, TrustRegionOptions};

pub use trust_region::{Termination, TrustRegionReport};

pub const DEFAULT_SIDE: usize = 3;
pub const DEFAULT_CORNER: Corner = Corner::LowerLeft;

/// The observed block `S` of an m×m grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CornerSpec {
    pub corner: Corner,
    pub side: usize,
    pub m: usize,
}

impl CornerSpec {
    pub fn new(corner: Corner, side: usize, m: usize) -> Result<Self> {
        if side == 0 || side >= m {
            return Err(Error::InvalidArgument(format!(
                "corner side {side} must be in [1, {m})"
            )));
        }
        Ok(Self { corner, side, m })
    }

    /// Observed cells in row-major order.
    pub fn observed_cells(&self) -> Vec<(usize, usize)> {
        self.corner.cells(self.m, self.side)
    }

    /// Cells outside the block, row-major.
    pub fn target_cells(&self) -> Vec<(usize, usize)> {
        let observed = self.observed_cells();
        (0..self.m)
            .flat_map(|i| (0..self.m).map(move |j| (i, j)))
            .filter(|c| !observed.contains(c))
            .collect()
    }

    pub fn n_observed(&self) -> usize {
        self.side * self.side
    }

    /// Observed corner masses of `grid`.
    pub fn extract(&self, grid: &CopulaGrid) -> Result<Vec<f64>> {
        if grid.m() != self.m {
            return Err(Error::Dimension(format!(
                "corner for m={} applied to grid with m={}",
                self.m,
                grid.m()
            )));
        }
        Ok(self
            .observed_cells()
            .into_iter()
            .map(|(i, j)| grid.mass(i, j))
            .collect())
    }
}

/// Inputs (observed corner) and targets (every other cell) of a set of grids.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    /// N × |S|
    pub inputs: DMatrix<f64>,
    /// N × (m² − |S|), columns in row-major order of the target cells
    pub targets: DMatrix<f64>,
}

pub fn extract_training_set(grids: &[CopulaGrid], corner: &CornerSpec) -> Result<TrainingSet> {
    if grids.is_empty() {
        return Err(Error::InsufficientData("no training grids".into()));
    }
    let observed = corner.observed_cells();
    let targets = corner.target_cells();
    for g in grids {
        if g.m() != corner.m {
            return Err(Error::Dimension(format!(
                "training grid with m={} for corner on m={}",
                g.m(),
                corner.m
            )));
        }
    }
    let n = grids.len();
    Ok(TrainingSet {
        inputs: DMatrix::from_fn(n, observed.len(), |r, c| {
            let (i, j) = observed[c];
            grids[r].mass(i, j)
        }),
        targets: DMatrix::from_fn(n, targets.len(), |r, c| {
            let (i, j) = targets[c];
            grids[r].mass(i, j)
        }),
    })
}

/// Number of free entries of a k×k lower-triangular factor.
pub fn n_factor_params(k: usize) -> usize {
    k * (k + 1) / 2
}

/// Packed row-major lower triangle -> dense factor.
pub fn unpack_factor(k: usize, packed: &[f64]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(k, k);
    let mut idx = 0;
    for a in 0..k {
        for b in 0..=a {
            l[(a, b)] = packed[idx];
            idx += 1;
        }
    }
    l
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCellModel {
    pub target_cell: (usize, usize),
    /// Lower triangle of `L`, row-major (`L[0][0], L[1][0], L[1][1], ...`).
    pub factor: Vec<f64>,
    /// Final sum of squared residuals.
    pub fit_residual: f64,
    pub iterations: usize,
}

impl QuadraticCellModel {
    pub fn dim(&self) -> usize {
        // k(k+1)/2 = len
        (((8 * self.factor.len() + 1) as f64).sqrt() as usize - 1) / 2
    }

    pub fn factor_matrix(&self) -> DMatrix<f64> {
        unpack_factor(self.dim(), &self.factor)
    }

    /// `Σ = L Lᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let l = self.factor_matrix();
        &l * l.transpose()
    }

    /// `xᵀ Σ x = ‖Lᵀ x‖²`, nonnegative by construction.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let k = self.dim();
        let mut total = 0.0;
        // z_b = Σ_a L[a][b] x_a
        for b in 0..k {
            let mut z = 0.0;
            for (a, xa) in x.iter().enumerate().skip(b) {
                z += self.factor[a * (a + 1) / 2 + b] * xa;
            }
            total += z * z;
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub solver: TrustRegionOptions,
    /// Starting factor is `init_scale · I`.
    pub init_scale: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            solver: TrustRegionOptions::default(),
            init_scale: 0.1,
        }
    }
}

/// Training inputs with their fourth moments
/// `M[(a,c),(a',c')] = Σ_j x_ja x_jc x_ja' x_jc'`, shared by every cell fit.
struct Design<'a> {
    inputs: &'a DMatrix<f64>,
    fourth: Vec<f64>,
}

impl<'a> Design<'a> {
    fn new(inputs: &'a DMatrix<f64>) -> Self {
        let (n, k) = inputs.shape();
        let kk = k * k;
        let mut fourth = vec![0.0; kk * kk];
        let mut outer = vec![0.0; kk];
        for j in 0..n {
            for a in 0..k {
                for c in 0..k {
                    outer[a * k + c] = inputs[(j, a)] * inputs[(j, c)];
                }
            }
            for (p, &u) in outer.iter().enumerate() {
                for (q, &v) in outer.iter().enumerate().skip(p) {
                    fourth[p * kk + q] += u * v;
                }
            }
        }
        for p in 0..kk {
            for q in 0..p {
                fourth[p * kk + q] = fourth[q * kk + p];
            }
        }
        Self { inputs, fourth }
    }
}

struct CellProblem<'a> {
    design: &'a Design<'a>,
    targets: DVector<f64>,
    k: usize,
}

impl CellProblem<'_> {
    /// Z = X L, so row j holds `Lᵀ x_j`.
    fn projected(&self, params: &DVector<f64>) -> DMatrix<f64> {
        self.design.inputs * unpack_factor(self.k, params.as_slice())
    }

    fn residuals_from(&self, z: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_fn(self.targets.len(), |j, _| {
            self.targets[j] - z.row(j).norm_squared()
        })
    }
}

impl LeastSquaresProblem for CellProblem<'_> {
    fn n_params(&self) -> usize {
        n_factor_params(self.k)
    }

    fn residuals(&self, params: &DVector<f64>) -> DVector<f64> {
        self.residuals_from(&self.projected(params))
    }

    fn residuals_and_jacobian(&self, params: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let z = self.projected(params);
        let r = self.residuals_from(&z);
        let x = self.design.inputs;
        let n = self.targets.len();
        // ∂r_j/∂L[a][b] = -2 x_ja z_jb
        let mut jac = DMatrix::zeros(n, self.n_params());
        let mut col = 0;
        for a in 0..self.k {
            for b in 0..=a {
                for j in 0..n {
                    jac[(j, col)] = -2.0 * x[(j, a)] * z[(j, b)];
                }
                col += 1;
            }
        }
        (r, jac)
    }

    /// `JᵀJ` from the fourth-moment tensor, so the cost per call is linear in N
    /// only through the residuals and gradient.
    fn normal_equations(&self, params: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>, DVector<f64>) {
        let k = self.k;
        let kk = k * k;
        let l = unpack_factor(k, params.as_slice());
        let x = self.design.inputs;
        let z = x * &l;
        let r = self.residuals_from(&z);
        // Jᵀr[(a,b)] = -2 Σ_j x_ja r_j z_jb
        let mut rz = z;
        for (j, mut row) in rz.row_iter_mut().enumerate() {
            row *= r[j];
        }
        let w = x.tr_mul(&rz);
        let idx = |a: usize, b: usize| a * (a + 1) / 2 + b;
        let p = self.n_params();
        let mut g = DVector::zeros(p);
        for a in 0..k {
            for b in 0..=a {
                g[idx(a, b)] = -2.0 * w[(a, b)];
            }
        }
        // JᵀJ[(a,b),(a',b')] = 4 Σ_{c,c'} M[(a,c),(a',c')] L[c][b] L[c'][b']
        let mut h = DMatrix::zeros(p, p);
        for a in 0..k {
            for a2 in 0..=a {
                let block = DMatrix::from_fn(k, k, |c, c2| {
                    self.design.fourth[(a * k + c) * kk + a2 * k + c2]
                });
                let inner = l.tr_mul(&block) * &l;
                for b in 0..=a {
                    for b2 in 0..=a2 {
                        let v = 4.0 * inner[(b, b2)];
                        h[(idx(a, b), idx(a2, b2))] = v;
                        h[(idx(a2, b2), idx(a, b))] = v;
                    }
                }
            }
        }
        (r, h, g)
    }
}

/// Fits `min_{Σ ⪰ 0} Σ_j (y_j - x_jᵀ Σ x_j)²` for one target cell.
pub fn fit_cell_model(
    inputs: &DMatrix<f64>,
    targets: &[f64],
    target_cell: (usize, usize),
    opts: &FitOptions,
) -> Result<QuadraticCellModel> {
    let (n, k) = inputs.shape();
    if targets.len() != n {
        return Err(Error::Dimension(format!("{n} input rows but {} targets", targets.len())));
    }
    if k == 0 || n == 0 {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    if inputs.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("training data for cell {target_cell:?}")));
    }
    if n < n_factor_params(k) {
        log::warn!(
            "cell {target_cell:?}: {n} observations for {} parameters; fit is under-determined",
            n_factor_params(k)
        );
    }
    fit_with_design(&Design::new(inputs), targets, target_cell, opts)
}

fn fit_with_design(
    design: &Design<'_>,
    targets: &[f64],
    target_cell: (usize, usize),
    opts: &FitOptions,
) -> Result<QuadraticCellModel> {
    let k = design.inputs.ncols();
    let problem = CellProblem {
        design,
        targets: DVector::from_column_slice(targets),
        k,
    };
    let start = DVector::from_vec(
        (0..k)
            .flat_map(|a| (0..=a).map(move |b| if a == b { opts.init_scale } else { 0.0 }))
            .collect(),
    );
    let report = minimize(&problem, start, &opts.solver).map_err(|e| Error::NoConvergence {
        row: target_cell.0,
        col: target_cell.1,
        reason: e.to_string(),
    })?;
    if !report.cost.is_finite() || report.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence {
            row: target_cell.0,
            col: target_cell.1,
            reason: "non-finite solution".into(),
        });
    }
    Ok(QuadraticCellModel {
        target_cell,
        factor: report.x.iter().copied().collect(),
        fit_residual: report.cost,
        iterations: report.iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrainingMeta {
    pub dataset: String,
    pub n_train: usize,
    pub window: usize,
}

/// One quadratic model per cell outside the observed corner.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaModel {
    pub corner: CornerSpec,
    pub models: Vec<QuadraticCellModel>,
    pub training: TrainingMeta,
}

impl CopulaModel {
    /// Checks that the models cover exactly the target cells, in order.
    pub fn new(corner: CornerSpec, models: Vec<QuadraticCellModel>, training: TrainingMeta) -> Result<Self> {
        let targets = corner.target_cells();
        if models.len() != targets.len()
            || models.iter().zip(&targets).any(|(m, t)| m.target_cell != *t)
        {
            return Err(Error::InvalidArgument(format!(
                "model set does not match the {} target cells of the corner",
                targets.len()
            )));
        }
        let k = corner.n_observed();
        if let Some(m) = models.iter().find(|m| m.factor.len() != n_factor_params(k)) {
            return Err(Error::Dimension(format!(
                "cell {:?} has {} factor entries, expected {}",
                m.target_cell,
                m.factor.len(),
                n_factor_params(k)
            )));
        }
        Ok(Self {
            corner,
            models,
            training,
        })
    }
}

pub fn fit_copula_model(
    grids: &[CopulaGrid],
    corner: &CornerSpec,
    opts: &FitOptions,
    training: TrainingMeta,
) -> Result<CopulaModel> {
    let set = extract_training_set(grids, corner)?;
    if set.inputs.iter().chain(set.targets.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training grids".into()));
    }
    let n_params = n_factor_params(set.inputs.ncols());
    if grids.len() < n_params {
        log::warn!(
            "{} training grids for {n_params} parameters per cell; fits are under-determined",
            grids.len()
        );
    }
    let design = Design::new(&set.inputs);
    let targets = corner.target_cells();
    let models = targets
        .par_iter()
        .enumerate()
        .map(|(c, &cell)| {
            let y: Vec<f64> = set.targets.column(c).iter().copied().collect();
            fit_with_design(&design, &y, cell, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    CopulaModel::new(
        *corner,
        models,
        TrainingMeta {
            n_train: grids.len(),
            ..training
        },
    )
}

/// Full grid from observed corner masses. Observed cells are kept as given;
/// predicted cells are rescaled to carry the remaining mass, or share it
/// uniformly when every prediction is zero.
pub fn predict_copula(model: &CopulaModel, observed: &[f64]) -> Result<CopulaGrid> {
    let spec = &model.corner;
    if observed.len() != spec.n_observed() {
        return Err(Error::Dimension(format!(
            "{} observed masses for a corner of {} cells",
            observed.len(),
            spec.n_observed()
        )));
    }
    if let Some(v) = observed.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidArgument(format!("observed mass {v}")));
    }
    let seen: f64 = observed.iter().sum();
    if seen > 1.0 + MASS_TOLERANCE {
        return Err(Error::InvalidArgument(format!("observed masses sum to {seen} > 1")));
    }
    let remaining = (1.0 - seen).max(0.0);
    let m = spec.m;
    let mut mass = vec![0.0; m * m];
    for (&(i, j), &v) in spec.observed_cells().iter().zip(observed) {
        mass[i * m + j] = v;
    }
    let predictions: Vec<f64> = model.models.iter().map(|q| q.predict(observed)).collect();
    let total: f64 = predictions.iter().sum();
    for (q, &p) in model.models.iter().zip(&predictions) {
        let (i, j) = q.target_cell;
        mass[i * m + j] = if total > 0.0 {
            p * remaining / total
        } else {
            remaining / predictions.len() as f64
        };
    }
    CopulaGrid::from_mass(m, mass)
}

/// Reconstruction of `grid` from its own corner.
pub fn predict_from_grid(model: &CopulaModel, grid: &CopulaGrid) -> Result<CopulaGrid> {
    let observed = model.corner.extract(grid)?;
    let mut out = predict_copula(model, &observed)?;
    out.window_end = grid.window_end;
    out.sample_count = grid.sample_count;
    Ok(out)
}

/// Model reconstructions of every rolling-window copula of `table`.
pub fn estimated_copulas(
    model: &CopulaModel,
    table: &ReturnsTable,
    params: &PipelineParams,
) -> Result<Vec<CopulaGrid>> {
    if params.grid != model.corner.m {
        return Err(Error::Dimension(format!(
            "model built for m={}, pipeline uses m={}",
            model.corner.m, params.grid
        )));
    }
    window_copulas(table, params)?
        .iter()
        .map(|g| predict_from_grid(model, g))
        .collect()
}

pub fn indicator_from_model(
    model: &CopulaModel,
    table: &ReturnsTable,
    params: &PipelineParams,
) -> Result<IndicatorSeries> {
    let grids = estimated_copulas(model, table, params)?;
    series_from_grids(&grids, params.band_fraction)
}
