//! The full richness estimation procedure.
//!
//! 1. Check the table has enough contiguous ratios after the singletons.
//! 2. Fit the model ladder with `1/j` weights. If nothing satisfies the
//!    criteria, fall back to the tWLRM (code 1).
//! 3. Rebuild weights from the expected counts of the selected model.
//! 4. Refit the ladder with those weights and reselect, repeating 3 and 4
//!    until `f0` stabilizes (code 2). If the first adaptive pass yields no
//!    acceptable model, return the `1/j` choice (code 3).
//!
//! A fit "satisfies the criteria" when it converged, predicts `b0 > 0` and
//! its denominator has no root on `[0, J]`.

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::estimators::{wlrm, CompetitorEstimate};
use crate::freqtab::{check_structure_with, derived_stats, ratio_series, FrequencyTable, RatioSeries, StructureReport, TableStats, DEFAULT_MIN_RATIOS};
use crate::kemp::{DistributionClass, RationalRatioModel, DEFAULT_CLASSIFY_TOL};
use crate::nls::{sequential_fit_ladder, FitResult, SolverOptions, DEFAULT_LADDER};
use crate::weights::{adaptive_weights, initial_weights, WeightScheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureOptions {
    pub ladder: Vec<(usize, usize)>,
    /// Allow the linear `(1,0)` model to be selected. It is always fitted,
    /// since it seeds the rest of the ladder.
    pub select_linear: bool,
    pub tridiagonal: bool,
    /// Relative change in `f0` below which the adaptive iteration stops.
    pub stabilization_tol: f64,
    pub max_outer_iterations: usize,
    pub classify_tol: f64,
    pub min_ratios: usize,
    pub solver: SolverOptions,
}

impl Default for ProcedureOptions {
    fn default() -> Self {
        Self {
            ladder: DEFAULT_LADDER.to_vec(),
            select_linear: false,
            tridiagonal: false,
            stabilization_tol: 1e-3,
            max_outer_iterations: 20,
            classify_tol: DEFAULT_CLASSIFY_TOL,
            min_ratios: DEFAULT_MIN_RATIOS,
            solver: SolverOptions::default(),
        }
    }
}

impl ProcedureOptions {
    /// Cap the ladder at `(p, q)` inclusive.
    pub fn with_ladder_cap(mut self, p: usize, q: usize) -> Self {
        self.ladder.retain(|&(pp, qq)| pp <= p && qq <= q);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.ladder.is_empty() {
            return Err(Error::Config("model ladder is empty".into()));
        }
        if self.ladder.iter().any(|&(p, q)| p == 0 || q > p) {
            return Err(Error::Config("ladder orders need p >= 1 and q <= p".into()));
        }
        if !(self.stabilization_tol > 0.0) || self.max_outer_iterations == 0 {
            return Err(Error::Config("stabilization settings must be positive".into()));
        }
        if !(self.classify_tol >= 0.0) {
            return Err(Error::Config("classification tolerance must be >= 0".into()));
        }
        if self.min_ratios < 1 {
            return Err(Error::Config("min_ratios must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakawayCode {
    /// No ratio model acceptable; log-transformed Katz regression used.
    Fallback = 1,
    /// Adaptive weighting converged.
    Stabilized = 2,
    /// Adaptive weighting lost every acceptable model; `1/j` choice kept.
    InitialWeights = 3,
}

impl Serialize for BreakawayCode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(*self as u8)
    }
}

impl<'de> Deserialize<'de> for BreakawayCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match u8::deserialize(d)? {
            1 => Ok(BreakawayCode::Fallback),
            2 => Ok(BreakawayCode::Stabilized),
            3 => Ok(BreakawayCode::InitialWeights),
            other => Err(serde::de::Error::custom(format!("unknown code {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub b0_positive: bool,
    pub no_roots: bool,
    pub converged: bool,
    pub satisfied: bool,
    pub b0: Option<f64>,
    pub roots: Vec<f64>,
}

pub fn satisfies_criteria(fit: &FitResult, ratios: usize) -> CriteriaReport {
    let b0 = fit.model.predict_b0().ok().filter(|b| b.is_finite());
    let roots = fit.model.denominator_roots_in(ratios);
    let b0_positive = b0.is_some_and(|b| b > 0.0);
    let no_roots = roots.is_empty();
    CriteriaReport {
        b0_positive,
        no_roots,
        converged: fit.converged,
        satisfied: b0_positive && no_roots && fit.converged,
        b0,
        roots,
    }
}

/// The most parsimonious satisfying fit: smallest `p + q`, then smallest `q`.
pub fn select_model(fits: &[FitResult], ratios: usize) -> Option<&FitResult> {
    fits.iter()
        .filter(|f| satisfies_criteria(f, ratios).satisfied)
        .min_by_key(|f| {
            let (p, q) = f.order();
            (p + q, q)
        })
}

fn select_with<'a>(fits: &'a [FitResult], ratios: usize, options: &ProcedureOptions) -> Option<&'a FitResult> {
    let candidates: Vec<FitResult> = fits
        .iter()
        .filter(|f| options.select_linear || f.order() != (1, 0))
        .cloned()
        .collect();
    let chosen = select_model(&candidates, ratios)?.order();
    fits.iter().find(|f| f.order() == chosen)
}

pub fn f0_from_fit(fit: &FitResult, f1: u64) -> Result<f64> {
    let b0 = fit.model.predict_b0()?;
    if !(b0 > 0.0) {
        return Err(Error::NonPositiveB0 { b0 });
    }
    Ok(f1 as f64 / b0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub var_b0: f64,
    pub var_f0: f64,
    pub var_c: f64,
}

impl VarianceEstimate {
    pub fn se(&self) -> f64 {
        self.var_c.sqrt()
    }
}

/// Delta-method variances of `b0`, `f0` and `C`.
pub fn variance_of_estimate(fit: &FitResult, f1: u64, n: u64, f0_hat: f64) -> Result<VarianceEstimate> {
    let cov = fit.param_cov_matrix();
    if cov.iter().any(|c| !c.is_finite()) {
        return Err(Error::NotPsd);
    }
    let g = nalgebra::DVector::from_vec(fit.model.b0_gradient()?);
    let var_b0 = (g.transpose() * &cov * &g)[(0, 0)];
    let scale = g.norm_squared() * cov.amax();
    if var_b0 < -1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd);
    }
    let var_b0 = var_b0.max(0.0);
    let b0 = fit.model.predict_b0()?;
    let (f1, n) = (f1 as f64, n as f64);
    let inv_b0_sq = 1.0 / (b0 * b0);
    let var_f0 = f1 * inv_b0_sq * (1.0 - f1 / n + f1 * inv_b0_sq * var_b0);
    let var_c = n * f0_hat / (n + f0_hat) + var_f0;
    Ok(VarianceEstimate {
        var_b0,
        var_f0,
        var_c,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDiagnostic {
    pub p: usize,
    pub q: usize,
    pub converged: bool,
    pub objective: f64,
    pub criteria: CriteriaReport,
    pub model: RationalRatioModel,
}

impl ModelDiagnostic {
    fn from_fit(fit: &FitResult, ratios: usize) -> Self {
        let (p, q) = fit.order();
        Self {
            p,
            q,
            converged: fit.converged,
            objective: fit.objective,
            criteria: satisfies_criteria(fit, ratios),
            model: fit.model.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub j: u64,
    pub observed: Option<f64>,
    pub fitted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RichnessEstimate {
    pub c_hat: f64,
    pub f0_hat: f64,
    pub se: f64,
    pub code: BreakawayCode,
    pub observed: TableStats,
    /// Selected ratio model; absent on the fallback path.
    pub model: Option<RationalRatioModel>,
    pub b0: Option<f64>,
    pub variance: Option<VarianceEstimate>,
    pub classification: Option<DistributionClass>,
    pub weights_final: Option<WeightScheme>,
    pub iterations_outer: usize,
    /// Ladder fitted with the final weights.
    pub ladder: Vec<ModelDiagnostic>,
    pub ratio_table: Vec<RatioRow>,
    pub fallback: Option<CompetitorEstimate>,
    pub warnings: Vec<String>,
}

impl RichnessEstimate {
    pub fn c_hat_rounded(&self) -> u64 {
        self.c_hat.round() as u64
    }
}

fn ratio_rows(series: &RatioSeries, model: Option<&RationalRatioModel>) -> Vec<RatioRow> {
    let mut rows = vec![RatioRow {
        j: 0,
        observed: None,
        fitted: model.and_then(|m| m.predict_b0().ok()),
    }];
    for &(j, r) in series.points() {
        rows.push(RatioRow {
            j: j as u64,
            observed: Some(r),
            fitted: model.and_then(|m| m.evaluate_ratio(j).ok()),
        });
    }
    rows
}

struct Selected {
    fit: FitResult,
    f0: f64,
    ladder: Vec<FitResult>,
    weights: WeightScheme,
}

/// Run the full procedure on `table`.
pub fn breakaway_estimate(table: &FrequencyTable, options: &ProcedureOptions) -> Result<RichnessEstimate> {
    options.validate()?;
    if let StructureReport::Insufficient { reason } = check_structure_with(table, options.min_ratios) {
        return Err(Error::InsufficientStructure(reason));
    }
    let stats = derived_stats(table)?;
    let series = ratio_series(table)?;
    let ratios = series.len();
    let f1 = table.count(1);

    let run_ladder = |weights: &WeightScheme| sequential_fit_ladder(&series, weights, &options.ladder, &options.solver);

    let w0 = initial_weights(ratios)?;
    let ladder0 = run_ladder(&w0);
    let Some(anchor) = select_with(&ladder0, ratios, options).cloned() else {
        return fallback_estimate(table, stats, &series, &ladder0);
    };
    let anchor = Selected {
        f0: f0_from_fit(&anchor, f1)?,
        fit: anchor,
        ladder: ladder0,
        weights: w0,
    };

    let mut warnings = Vec::new();
    let mut current: Option<Selected> = None;
    let mut stabilized = false;
    let mut outer = 0;
    while outer < options.max_outer_iterations {
        outer += 1;
        let prev = current.as_ref().unwrap_or(&anchor);
        let refit = adaptive_weights(&prev.fit, f1, ratios, options.tridiagonal).map(|w| {
            let fits = run_ladder(&w);
            (w, fits)
        });
        let next = refit.ok().and_then(|(weights, fits)| {
            let fit = select_with(&fits, ratios, options)?.clone();
            let f0 = f0_from_fit(&fit, f1).ok()?;
            Some(Selected {
                fit,
                f0,
                ladder: fits,
                weights,
            })
        });
        let Some(next) = next else {
            if current.is_none() {
                return finish(table, stats, &series, anchor, BreakawayCode::InitialWeights, outer, warnings, options);
            }
            warnings.push(format!(
                "adaptive pass {outer} produced no acceptable model; keeping pass {}",
                outer - 1
            ));
            break;
        };
        let change = (next.f0 - prev.f0).abs() / next.f0;
        current = Some(next);
        if change < options.stabilization_tol {
            stabilized = true;
            break;
        }
    }
    if !stabilized && outer == options.max_outer_iterations {
        warnings.push(format!(
            "f0 did not stabilize within {} adaptive passes",
            options.max_outer_iterations
        ));
    }
    let chosen = current.expect("at least one adaptive pass succeeded");
    finish(table, stats, &series, chosen, BreakawayCode::Stabilized, outer, warnings, options)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    _table: &FrequencyTable,
    stats: TableStats,
    series: &RatioSeries,
    chosen: Selected,
    code: BreakawayCode,
    outer: usize,
    warnings: Vec<String>,
    options: &ProcedureOptions,
) -> Result<RichnessEstimate> {
    let ratios = series.len();
    let f1 = series.counts()[0];
    let variance = variance_of_estimate(&chosen.fit, f1, stats.n, chosen.f0)?;
    let model = chosen.fit.model.clone();
    Ok(RichnessEstimate {
        c_hat: stats.c as f64 + chosen.f0,
        f0_hat: chosen.f0,
        se: variance.se(),
        code,
        observed: stats,
        b0: model.predict_b0().ok(),
        variance: Some(variance),
        classification: Some(model.classify(ratios, options.classify_tol)),
        weights_final: Some(chosen.weights),
        iterations_outer: outer,
        ladder: chosen
            .ladder
            .iter()
            .map(|f| ModelDiagnostic::from_fit(f, ratios))
            .collect(),
        ratio_table: ratio_rows(series, Some(&model)),
        model: Some(model),
        fallback: None,
        warnings,
    })
}

fn fallback_estimate(
    table: &FrequencyTable,
    stats: TableStats,
    series: &RatioSeries,
    ladder: &[FitResult],
) -> Result<RichnessEstimate> {
    let twlrm = wlrm(table, true)?;
    let (Some(c_hat), Some(f0)) = (twlrm.c_hat, twlrm.f0_hat) else {
        return Err(Error::NoEstimate(
            "no ratio model satisfies the criteria and the tWLRM is inestimable".into(),
        ));
    };
    let ratios = series.len();
    Ok(RichnessEstimate {
        c_hat,
        f0_hat: f0,
        se: twlrm.se.unwrap_or(f64::NAN),
        code: BreakawayCode::Fallback,
        observed: stats,
        model: None,
        b0: None,
        variance: None,
        classification: None,
        weights_final: None,
        iterations_outer: 0,
        ladder: ladder.iter().map(|f| ModelDiagnostic::from_fit(f, ratios)).collect(),
        ratio_table: ratio_rows(series, None),
        fallback: Some(twlrm),
        warnings: vec!["no ratio model satisfied the criteria; log-transformed Katz model used".into()],
    })
}
