//! Trust-region nonlinear least squares (Levenberg-Marquardt with an explicit
//! radius and diagonal scaling, after Moré 1978).
//!
//! Minimizes `Σ r_i(x)²`. The step solves `min ‖r + J p‖²` subject to
//! `‖D p‖ ≤ Δ`; the multiplier is found by a safeguarded Newton iteration on
//! the secular equation. A step is accepted only when it lowers the cost, so
//! the recorded cost history is non-increasing.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub trait LeastSquaresProblem {
    fn n_params(&self) -> usize;

    /// Residual vector at `x`.
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Residuals and the Jacobian `∂r_i/∂x_j` at `x`.
    fn residuals_and_jacobian(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>);

    /// Residuals, `JᵀJ` and `Jᵀr` at `x`. Override when these can be formed
    /// without materializing the Jacobian.
    fn normal_equations(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>, DVector<f64>) {
        let (r, jac) = self.residuals_and_jacobian(x);
        let a = jac.tr_mul(&jac);
        let g = jac.tr_mul(&r);
        (r, a, g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegionOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub rel_cost_tol: f64,
    /// Stop when the cost drops to or below this value.
    pub abs_cost_tol: f64,
    /// Initial radius is this factor times `‖D x0‖` (or the factor itself
    /// when that norm is zero).
    pub initial_radius_factor: f64,
}

impl Default for TrustRegionOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            rel_cost_tol: 1e-12,
            abs_cost_tol: 1e-30,
            initial_radius_factor: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    RelativeCostDecrease,
    CostBelowTolerance,
    ZeroGradient,
    RadiusCollapsed,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct TrustRegionReport {
    pub x: DVector<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Cost before the first iteration and after every iteration.
    pub cost_history: Vec<f64>,
}

const ACCEPT_RATIO: f64 = 1e-4;

pub fn minimize<P: LeastSquaresProblem>(
    problem: &P,
    x0: DVector<f64>,
    opts: &TrustRegionOptions,
) -> Result<TrustRegionReport> {
    let p = problem.n_params();
    if x0.len() != p {
        return Err(Error::Dimension(format!("start has {} entries, problem {p}", x0.len())));
    }
    let mut x = x0;
    let (r, mut a, mut g) = problem.normal_equations(&x);
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(Error::NonFinite("initial cost".into()));
    }
    let mut history = vec![cost];
    let mut scale = DVector::<f64>::zeros(p);
    let mut radius = f64::NAN;

    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        if cost <= opts.abs_cost_tol {
            termination = Termination::CostBelowTolerance;
            break;
        }
        if g.amax() == 0.0 {
            termination = Termination::ZeroGradient;
            break;
        }
        for i in 0..p {
            scale[i] = scale[i].max(a[(i, i)].sqrt());
        }
        let floor = scale.max() * 1e-10;
        let floor = if floor > 0.0 { floor } else { 1.0 };
        let d = scale.map(|s| s.max(floor));
        if radius.is_nan() {
            let dx = d.component_mul(&x).norm();
            radius = opts.initial_radius_factor * if dx > 0.0 { dx } else { 1.0 };
        }

        iterations += 1;
        let step = solve_subproblem(&a, &g, &d, radius)?;
        let step_norm = d.component_mul(&step).norm();
        // predicted model cost ‖r + J p‖² = ‖r‖² + 2 gᵀp + pᵀ A p
        let predicted = -(2.0 * g.dot(&step) + step.dot(&(&a * &step)));
        let trial = &x + &step;
        let trial_r = problem.residuals(&trial);
        let trial_cost = trial_r.norm_squared();
        let actual = cost - trial_cost;
        let ratio = if predicted > 0.0 { actual / predicted } else { -1.0 };

        if ratio < 0.25 || !trial_cost.is_finite() {
            radius = 0.25 * step_norm.min(radius);
        } else if ratio > 0.75 && step_norm >= 0.99 * radius {
            radius *= 2.0;
        }

        if trial_cost.is_finite() && ratio > ACCEPT_RATIO && trial_cost < cost {
            let old = cost;
            x = trial;
            let (_, na, ng) = problem.normal_equations(&x);
            a = na;
            g = ng;
            cost = trial_cost;
            history.push(cost);
            if old - cost <= opts.rel_cost_tol * old {
                termination = Termination::RelativeCostDecrease;
                break;
            }
        } else {
            history.push(cost);
            if radius <= 1e-15 * d.component_mul(&x).norm().max(1e-300) {
                termination = Termination::RadiusCollapsed;
                break;
            }
        }
    }
    Ok(TrustRegionReport {
        x,
        cost,
        iterations,
        termination,
        cost_history: history,
    })
}

/// Step `p` minimizing `2gᵀp + pᵀAp` within `‖D p‖ ≤ radius`.
fn solve_subproblem(
    a: &DMatrix<f64>,
    g: &DVector<f64>,
    d: &DVector<f64>,
    radius: f64,
) -> Result<DVector<f64>> {
    let p = g.len();
    // scaled system B = D⁻¹AD⁻¹, h = D⁻¹g, step in scaled space u = D p
    let b = DMatrix::from_fn(p, p, |i, j| a[(i, j)] / (d[i] * d[j]));
    let h = g.component_div(d);
    let unscale = |u: DVector<f64>| u.component_div(d);

    let solve = |lambda: f64| -> Option<(DVector<f64>, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
        let mut m = b.clone();
        for i in 0..p {
            m[(i, i)] += lambda;
        }
        let chol = m.cholesky()?;
        let u = -chol.solve(&h);
        u.iter().all(|v| v.is_finite()).then_some((u, chol))
    };

    if let Some((u, _)) = solve(0.0) {
        if u.norm() <= 1.1 * radius {
            return Ok(unscale(u));
        }
    }

    let h_norm = h.norm();
    let mut lo = 0.0f64;
    let mut hi = h_norm / radius;
    let mut lambda = hi * 1e-3;
    let mut best: Option<DVector<f64>> = None;
    for _ in 0..30 {
        if !(lambda > lo && lambda < hi) {
            lambda = (lo * hi).sqrt().max(1e-3 * hi);
        }
        let Some((u, chol)) = solve(lambda) else {
            lo = lambda;
            lambda = 0.0;
            continue;
        };
        let un = u.norm();
        if un <= radius {
            best = Some(u.clone());
        }
        if (un - radius).abs() <= 0.1 * radius {
            return Ok(unscale(u));
        }
        if un > radius {
            lo = lambda;
        } else {
            hi = lambda;
        }
        // Newton step on 1/‖u(λ)‖ = 1/Δ
        let q = chol.l().solve_lower_triangular(&u).unwrap_or_else(|| u.clone());
        let qn = q.norm_squared();
        if qn > 0.0 {
            lambda += (un / radius - 1.0) * un * un / qn;
        }
    }
    match best {
        Some(u) => Ok(unscale(u)),
        None => {
            // fall back to a short steepest-descent step inside the region
            if h_norm == 0.0 {
                return Ok(DVector::zeros(p));
            }
            let u = -&h * (radius / h_norm);
            Ok(unscale(u))
        }
    }
}
