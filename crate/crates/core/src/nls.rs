//! Weighted nonlinear least squares for rational ratio models.
//!
//! Minimizes `(F - P)' W (F - P)` where `F` holds the observed ratios, `P`
//! the model ratios and `W` the precision matrix of a [`WeightScheme`]. The
//! base `(1,0)` model has a closed form; higher orders use a
//! Levenberg-Marquardt iteration with the analytic Jacobian and are seeded
//! from the previous model on the ladder.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqtab::RatioSeries;
use crate::kemp::RationalRatioModel;
use crate::weights::WeightScheme;

/// Model orders tried by default, smallest first.
pub const DEFAULT_LADDER: [(usize, usize); 8] = [
    (1, 0),
    (1, 1),
    (2, 1),
    (2, 2),
    (3, 2),
    (3, 3),
    (4, 3),
    (4, 4),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_factor: f64,
    /// Converged once an accepted step lowers the objective by less than
    /// this fraction.
    pub relative_tolerance: f64,
    /// Converged once the (weight-normalized) gradient norm drops below this.
    pub gradient_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            initial_damping: 1e-3,
            damping_factor: 10.0,
            relative_tolerance: 1e-10,
            gradient_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    ClosedForm,
    SmallGradient,
    SmallDecrease,
    MaxIterations,
    DampingExhausted,
    SingularCovariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: RationalRatioModel,
    pub converged: bool,
    pub termination: Termination,
    /// Weighted residual sum at the solution.
    pub objective: f64,
    /// Covariance of `(beta.., alpha..)`, row-major.
    pub param_cov: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub weights_used: WeightScheme,
    pub iterations: usize,
}

impl FitResult {
    pub fn order(&self) -> (usize, usize) {
        self.model.order()
    }

    pub fn param_cov_matrix(&self) -> DMatrix<f64> {
        let n = self.param_cov.len();
        DMatrix::from_fn(n, n, |i, j| self.param_cov[i][j])
    }
}

/// Model values and Jacobian `dP/dtheta` at every series point.
pub fn model_jacobian(model: &RationalRatioModel, js: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (p, q) = model.order();
    let m = p + q + 1;
    let mut values = DVector::zeros(js.len());
    let mut jac = DMatrix::zeros(js.len(), m);
    for (row, &j) in js.iter().enumerate() {
        let x = j - model.jbar();
        let den = model.denominator(j);
        if den.abs() < 1e-14 || !den.is_finite() {
            return Err(Error::Singularity { j });
        }
        let value = model.numerator(j) / den;
        values[row] = value;
        let mut xr = 1.0;
        for r in 0..=p {
            jac[(row, r)] = xr / den;
            xr *= x;
        }
        let mut xr = x;
        for r in 1..=q {
            jac[(row, p + r)] = -value * xr / den;
            xr *= x;
        }
    }
    Ok((values, jac))
}

struct Problem<'a> {
    js: Vec<f64>,
    observed: DVector<f64>,
    precision: DMatrix<f64>,
    /// Mean precision diagonal; the solver works on `precision / scale`.
    scale: f64,
    jbar: f64,
    domain_upper: usize,
    weights: &'a WeightScheme,
}

impl<'a> Problem<'a> {
    fn new(series: &RatioSeries, weights: &'a WeightScheme) -> Result<Self> {
        if weights.len() != series.len() {
            return Err(Error::Domain(format!(
                "{} weights for {} ratios",
                weights.len(),
                series.len()
            )));
        }
        let precision = weights.precision()?;
        let scale = precision.diagonal().mean();
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain("weights must be positive".into()));
        }
        let js: Vec<f64> = series.indices().collect();
        let domain_upper = js.iter().cloned().fold(0.0, f64::max).ceil() as usize;
        Ok(Self {
            observed: DVector::from_iterator(series.len(), series.ratios()),
            js,
            precision: precision / scale,
            scale,
            jbar: series.jbar(),
            domain_upper,
            weights,
        })
    }

    fn objective(&self, resid: &DVector<f64>) -> f64 {
        (resid.transpose() * &self.precision * resid)[(0, 0)]
    }

    /// Reference magnitude for deciding a fit is exact.
    fn data_scale(&self) -> f64 {
        self.objective(&self.observed).max(f64::MIN_POSITIVE)
    }

    fn finish(
        &self,
        model: RationalRatioModel,
        mut converged: bool,
        mut termination: Termination,
        iterations: usize,
    ) -> Result<FitResult> {
        let (values, jac) = model_jacobian(&model, &self.js)?;
        let resid = &self.observed - values;
        let objective_n = self.objective(&resid);
        let m = model.num_params();
        let dof = self.js.len() - m;
        let info = jac.transpose() * &self.precision * &jac;
        let exact = objective_n <= 1e-24 * self.data_scale();

        let cov = match invert_spd(&info) {
            Some(inv) => inv * (objective_n / dof as f64),
            // an exact fit has zero residual variance, so the covariance is
            // zero whichever generalized inverse is used
            None if exact => DMatrix::zeros(m, m),
            None => {
                converged = false;
                termination = Termination::SingularCovariance;
                DMatrix::from_element(m, m, f64::NAN)
            }
        };
        Ok(FitResult {
            model,
            converged,
            termination,
            objective: objective_n * self.scale,
            param_cov: (0..m).map(|i| (0..m).map(|j| cov[(i, j)]).collect()).collect(),
            residuals: resid.iter().copied().collect(),
            weights_used: self.weights.clone(),
            iterations,
        })
    }
}

/// Inverse of a symmetric positive-definite matrix, `None` when it is
/// numerically singular.
fn invert_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= 1e-13 * max {
        return None;
    }
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v);
    let v = &eig.eigenvectors;
    Some(v * DMatrix::from_diagonal(&inv_vals) * v.transpose())
}

fn check_points(series: &RatioSeries, p: usize, q: usize) -> Result<()> {
    let needed = p + q + 2;
    if series.len() < needed {
        return Err(Error::InsufficientPoints {
            p,
            q,
            needed,
            got: series.len(),
        });
    }
    Ok(())
}

/// Closed-form weighted least squares for the `(1,0)` model
/// `r_j = b_0 + b_1 (j - jbar)`.
pub fn fit_ols_base(series: &RatioSeries, weights: &WeightScheme) -> Result<FitResult> {
    check_points(series, 1, 0)?;
    let problem = Problem::new(series, weights)?;
    let n = series.len();
    let x = DMatrix::from_fn(n, 2, |i, k| if k == 0 { 1.0 } else { problem.js[i] - problem.jbar });
    let info = x.transpose() * &problem.precision * &x;
    let rhs = x.transpose() * &problem.precision * &problem.observed;
    let det = info[(0, 0)] * info[(1, 1)] - info[(0, 1)] * info[(1, 0)];
    if !(det.abs() > 1e-12 * info[(0, 0)] * info[(1, 1)]) {
        return Err(Error::DegenerateDesign);
    }
    let b1 = (info[(0, 0)] * rhs[1] - info[(1, 0)] * rhs[0]) / det;
    let b0 = (rhs[0] - info[(0, 1)] * b1) / info[(0, 0)];
    let model = RationalRatioModel::new(vec![b0, b1], Vec::new(), problem.jbar)?;
    problem.finish(model, true, Termination::ClosedForm, 0)
}

/// Levenberg-Marquardt fit of a `(p, q)` model from `start`.
pub fn fit_wnls(
    series: &RatioSeries,
    weights: &WeightScheme,
    p: usize,
    q: usize,
    start: &[f64],
    options: &SolverOptions,
) -> Result<FitResult> {
    check_points(series, p, q)?;
    let problem = Problem::new(series, weights)?;
    let mut model = RationalRatioModel::from_params(p, q, start, problem.jbar)?;
    let (values, mut jac) = model_jacobian(&model, &problem.js)?;
    let mut resid = &problem.observed - values;
    let mut obj = problem.objective(&resid);
    let guard_roots = model.denominator_roots_in(problem.domain_upper).is_empty();
    let mut damping = options.initial_damping;
    let m = model.num_params();

    for iter in 0..options.max_iterations {
        let grad = jac.transpose() * &problem.precision * &resid;
        if grad.amax() < options.gradient_tolerance {
            return problem.finish(model, true, Termination::SmallGradient, iter);
        }
        let info = jac.transpose() * &problem.precision * &jac;
        let diag_floor = 1e-12 * info.diagonal().amax().max(f64::MIN_POSITIVE);

        loop {
            let mut lhs = info.clone();
            for k in 0..m {
                lhs[(k, k)] += damping * info[(k, k)].max(diag_floor);
            }
            let step = match lhs.cholesky() {
                Some(ch) => ch.solve(&grad),
                None => {
                    damping *= options.damping_factor;
                    if damping > 1e20 {
                        return problem.finish(model, false, Termination::DampingExhausted, iter);
                    }
                    continue;
                }
            };
            let theta = DVector::from_vec(model.params()) + &step;
            let candidate = RationalRatioModel::from_params(p, q, theta.as_slice(), problem.jbar)
                .ok()
                .filter(|c| !guard_roots || c.denominator_roots_in(problem.domain_upper).is_empty())
                .and_then(|c| model_jacobian(&c, &problem.js).ok().map(|vj| (c, vj)));

            let predicted = (2.0 * step.dot(&grad) - (step.transpose() * &info * &step)[(0, 0)]).max(0.0);
            if let Some((cand, (values, cand_jac))) = candidate {
                let cand_resid = &problem.observed - values;
                let cand_obj = problem.objective(&cand_resid);
                if cand_obj < obj {
                    let decrease = (obj - cand_obj) / obj;
                    model = cand;
                    resid = cand_resid;
                    jac = cand_jac;
                    obj = cand_obj;
                    damping = (damping / options.damping_factor).max(1e-15);
                    if decrease < options.relative_tolerance {
                        return problem.finish(model, true, Termination::SmallDecrease, iter + 1);
                    }
                    break;
                }
                // at the floor of floating-point resolution no step can help
                if (cand_obj - obj).abs() <= options.relative_tolerance * obj
                    && predicted <= options.relative_tolerance * obj
                {
                    return problem.finish(model, true, Termination::SmallDecrease, iter + 1);
                }
            }
            damping *= options.damping_factor;
            if damping > 1e20 {
                return problem.finish(model, false, Termination::DampingExhausted, iter + 1);
            }
        }
    }
    problem.finish(model, false, Termination::MaxIterations, options.max_iterations)
}

/// Pad `params` of a `(p0, q0)` model with zeros to seed a `(p, q)` model.
pub fn pad_params(params: &[f64], from: (usize, usize), to: (usize, usize)) -> Vec<f64> {
    let (p0, q0) = from;
    let (p, q) = to;
    let mut out = vec![0.0; p + q + 1];
    let shared = p0.min(p) + 1;
    out[..shared].copy_from_slice(&params[..shared]);
    for r in 0..q0.min(q) {
        out[p + 1 + r] = params[p0 + 1 + r];
    }
    out
}

/// Ladder orders usable with `ratios` points.
pub fn usable_ladder(ladder: &[(usize, usize)], ratios: usize) -> Vec<(usize, usize)> {
    ladder
        .iter()
        .copied()
        .filter(|&(p, q)| ratios >= p + q + 2)
        .collect()
}

/// Fit every usable model on `ladder`, each seeded from the last converged
/// fit. The `(1,0)` entry, if present, is fitted in closed form.
pub fn sequential_fit_ladder(
    series: &RatioSeries,
    weights: &WeightScheme,
    ladder: &[(usize, usize)],
    options: &SolverOptions,
) -> Vec<FitResult> {
    let mut fits: Vec<FitResult> = Vec::new();
    let mut seed: Option<(Vec<f64>, (usize, usize))> = None;
    for (p, q) in usable_ladder(ladder, series.len()) {
        let fit = if (p, q) == (1, 0) {
            fit_ols_base(series, weights)
        } else {
            let start = match &seed {
                Some((params, from)) => pad_params(params, *from, (p, q)),
                None => match fit_ols_base(series, weights) {
                    Ok(base) => pad_params(&base.model.params(), (1, 0), (p, q)),
                    Err(_) => continue,
                },
            };
            fit_wnls(series, weights, p, q, &start, options)
        };
        if let Ok(fit) = fit {
            if fit.converged {
                seed = Some((fit.model.params(), (p, q)));
            }
            fits.push(fit);
        }
    }
    fits
}
