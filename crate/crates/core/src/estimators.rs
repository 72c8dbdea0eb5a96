//! Competitor richness estimators.
//!
//! The Chao lower bound, the Chao-Bunge coverage estimator, and the weighted
//! linear regression models on the Katz ratio `(j+1) f_{j+1}/f_j`, either on
//! the raw scale (uWLRM) or the log scale (tWLRM). The tWLRM also serves as
//! the fallback of the main procedure when no ratio model is acceptable.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqtab::{derived_stats, FrequencyTable};

pub const DEFAULT_CHAO_BUNGE_TAU: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "breakaway")]
    Breakaway,
    #[serde(rename = "uWLRM")]
    Uwlrm,
    #[serde(rename = "tWLRM")]
    Twlrm,
    #[serde(rename = "Chao-Bunge")]
    ChaoBunge,
    #[serde(rename = "CLB")]
    ChaoLowerBound,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Breakaway => "breakaway",
            Method::Uwlrm => "uWLRM",
            Method::Twlrm => "tWLRM",
            Method::ChaoBunge => "Chao-Bunge",
            Method::ChaoLowerBound => "CLB",
        })
    }
}

/// Result of a competitor estimator; `c_hat` is `None` when inestimable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitorEstimate {
    pub method: Method,
    pub c_hat: Option<f64>,
    pub se: Option<f64>,
    pub f0_hat: Option<f64>,
    pub tau_used: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CompetitorEstimate {
    fn inestimable(method: Method, tau_used: u64, note: impl Into<String>) -> Self {
        Self {
            method,
            c_hat: None,
            se: None,
            f0_hat: None,
            tau_used,
            note: Some(note.into()),
        }
    }

    pub fn is_estimable(&self) -> bool {
        self.c_hat.is_some()
    }
}

/// Chao's lower bound `c + f_1^2 / (2 f_2)`.
pub fn chao_lower_bound(table: &FrequencyTable) -> Result<CompetitorEstimate> {
    let stats = derived_stats(table).or_else(|e| match e {
        // no singletons simply means no unseen mass
        Error::NoSingletons => {
            let (c, n) = crate::freqtab::totals(table)?;
            Ok(crate::freqtab::TableStats {
                c,
                n,
                tau_max: 0,
                ratios: 0,
            })
        }
        e => Err(e),
    })?;
    let tau = table.max_frequency().unwrap_or(0);
    let c = stats.c as f64;
    let f1 = table.count(1) as f64;
    let f2 = table.count(2) as f64;
    if f1 == 0.0 {
        return Ok(CompetitorEstimate {
            method: Method::ChaoLowerBound,
            c_hat: Some(c),
            se: Some(0.0),
            f0_hat: Some(0.0),
            tau_used: tau,
            note: None,
        });
    }
    if f2 == 0.0 {
        return Ok(CompetitorEstimate::inestimable(
            Method::ChaoLowerBound,
            tau,
            "no doubletons",
        ));
    }
    let g = f1 / f2;
    let f0 = f1 * f1 / (2.0 * f2);
    let var = f2 * (g.powi(4) / 4.0 + g.powi(3) + g * g / 2.0);
    Ok(CompetitorEstimate {
        method: Method::ChaoLowerBound,
        c_hat: Some(c + f0),
        se: Some(var.sqrt()),
        f0_hat: Some(f0),
        tau_used: tau,
        note: None,
    })
}

/// Chao-Bunge estimator with cutoff `tau`.
///
/// With sums over `j <= tau`, `theta = 1 - f_1 sum j^2 f_j / (sum j f_j)^2`
/// and `C = sum_{2 <= j <= tau} f_j / theta + #{taxa seen more than tau times}`.
/// The standard error comes from the delta method with the multinomial
/// covariance `Cov(f_i, f_k) = f_i (delta_ik - f_k / C)`.
pub fn chao_bunge(table: &FrequencyTable, tau: u64) -> Result<CompetitorEstimate> {
    if tau < 2 {
        return Err(Error::Domain("Chao-Bunge cutoff must be at least 2".into()));
    }
    let stats = derived_stats(table)?;
    let rare: Vec<(u64, f64)> = table
        .iter()
        .filter(|&(j, _)| j <= tau)
        .map(|(j, f)| (j, f as f64))
        .collect();
    let abundant: f64 = table.iter().filter(|&(j, _)| j > tau).map(|(_, f)| f as f64).sum();
    let f1 = table.count(1) as f64;
    let s1: f64 = rare.iter().map(|&(j, f)| j as f64 * f).sum();
    let s2: f64 = rare.iter().map(|&(j, f)| (j as f64).powi(2) * f).sum();
    let a: f64 = rare.iter().filter(|&&(j, _)| j >= 2).map(|&(_, f)| f).sum();
    let theta = 1.0 - f1 * s2 / (s1 * s1);
    if !(theta > 0.0) {
        return Ok(CompetitorEstimate::inestimable(
            Method::ChaoBunge,
            tau,
            "estimated coverage is not positive",
        ));
    }
    let c_hat = a / theta + abundant;

    // derivatives of c_hat in each observed f_k
    let grads: Vec<(f64, f64)> = table
        .iter()
        .map(|(k, fk)| {
            let fk = fk as f64;
            if k > tau {
                return (fk, 1.0);
            }
            let kf = k as f64;
            let dtheta = -((if k == 1 { s2 } else { 0.0 }) + f1 * kf * kf) / (s1 * s1)
                + 2.0 * f1 * s2 * kf / (s1 * s1 * s1);
            let da = if k >= 2 { 1.0 } else { 0.0 };
            (fk, da / theta - a * dtheta / (theta * theta))
        })
        .collect();
    let mut var = 0.0;
    for (i, &(fi, gi)) in grads.iter().enumerate() {
        for (k, &(fk, gk)) in grads.iter().enumerate() {
            let cov = if i == k { fi * (1.0 - fi / c_hat) } else { -fi * fk / c_hat };
            var += gi * gk * cov;
        }
    }
    debug_assert!(c_hat >= stats.c as f64 - 1e-9 || theta > 1.0);
    Ok(CompetitorEstimate {
        method: Method::ChaoBunge,
        c_hat: Some(c_hat),
        se: Some(var.max(0.0).sqrt()),
        f0_hat: Some(c_hat - stats.c as f64),
        tau_used: tau,
        note: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WlrmWeighting {
    /// Delta-method inverse variances of the regressed quantity.
    #[default]
    InverseVariance,
    Uniform,
}

/// A fitted weighted linear regression of the Katz ratio on `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WlrmFit {
    pub transformed: bool,
    pub intercept: f64,
    pub slope: f64,
    /// Variance of the intercept estimate.
    pub intercept_var: Option<f64>,
    pub weights: Vec<f64>,
    pub tau: u64,
}

impl WlrmFit {
    /// Implied `f_{j+1}/f_j` at `j`.
    pub fn fitted_ratio(&self, j: f64) -> f64 {
        let katz = self.intercept + self.slope * j;
        let katz = if self.transformed { katz.exp() } else { katz };
        katz / (j + 1.0)
    }

    /// Implied `f_1/f_0`.
    pub fn b0(&self) -> f64 {
        self.fitted_ratio(0.0)
    }

    /// Weights scaled to a maximum of one.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let max = self.weights.iter().cloned().fold(f64::MIN, f64::max);
        self.weights.iter().map(|w| w / max).collect()
    }
}

pub fn wlrm_fit(
    table: &FrequencyTable,
    transformed: bool,
    weighting: WlrmWeighting,
) -> Result<WlrmFit> {
    let stats = derived_stats(table)?;
    if stats.ratios < 2 {
        return Err(Error::InsufficientStructure(format!(
            "WLRM needs at least 2 contiguous ratios, got {}",
            stats.ratios
        )));
    }
    let mut xs = Vec::with_capacity(stats.ratios);
    let mut ys = Vec::with_capacity(stats.ratios);
    let mut ws = Vec::with_capacity(stats.ratios);
    for j in 1..=stats.ratios as u64 {
        let fj = table.count(j) as f64;
        let fnext = table.count(j + 1) as f64;
        let jp1 = (j + 1) as f64;
        let y = jp1 * fnext / fj;
        let (y, var) = if transformed {
            (y.ln(), 1.0 / fnext + 1.0 / fj)
        } else {
            (y, jp1 * jp1 * (fnext / (fj * fj)) * (1.0 + fnext / fj))
        };
        xs.push(j as f64);
        ys.push(y);
        ws.push(match weighting {
            WlrmWeighting::InverseVariance => 1.0 / var,
            WlrmWeighting::Uniform => 1.0,
        });
    }
    let sw: f64 = ws.iter().sum();
    let mx = ws.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = ws.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = ws.iter().zip(&xs).map(|(w, x)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = ws
        .iter()
        .zip(xs.iter().zip(&ys))
        .map(|(w, (x, y))| w * (x - mx) * (y - my))
        .sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateDesign);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    // Var(intercept) = [(X'WX)^{-1}]_00 = 1/sw + mx^2/sxx
    let model_var = 1.0 / sw + mx * mx / sxx;
    let intercept_var = match weighting {
        WlrmWeighting::InverseVariance => Some(model_var),
        WlrmWeighting::Uniform => {
            let dof = xs.len() as f64 - 2.0;
            (dof > 0.0).then(|| {
                let rss: f64 = ws
                    .iter()
                    .zip(xs.iter().zip(&ys))
                    .map(|(w, (x, y))| w * (y - intercept - slope * x).powi(2))
                    .sum();
                model_var * rss / dof
            })
        }
    };
    Ok(WlrmFit {
        transformed,
        intercept,
        slope,
        intercept_var,
        weights: ws,
        tau: stats.tau_max,
    })
}

/// uWLRM (`transformed = false`) or tWLRM (`transformed = true`) with the
/// default inverse-variance weights.
pub fn wlrm(table: &FrequencyTable, transformed: bool) -> Result<CompetitorEstimate> {
    wlrm_with(table, transformed, WlrmWeighting::default())
}

pub fn wlrm_with(
    table: &FrequencyTable,
    transformed: bool,
    weighting: WlrmWeighting,
) -> Result<CompetitorEstimate> {
    let method = if transformed { Method::Twlrm } else { Method::Uwlrm };
    let stats = derived_stats(table)?;
    let fit = match wlrm_fit(table, transformed, weighting) {
        Ok(fit) => fit,
        Err(Error::InsufficientStructure(msg)) => {
            return Ok(CompetitorEstimate::inestimable(method, stats.tau_max, msg))
        }
        Err(e) => return Err(e),
    };
    let b0 = fit.b0();
    if !(b0 > 0.0 && b0.is_finite()) {
        return Ok(CompetitorEstimate::inestimable(
            method,
            fit.tau,
            "regression intercept is not positive",
        ));
    }
    let f1 = table.count(1) as f64;
    let n = stats.n as f64;
    let f0 = f1 / b0;
    let se = fit.intercept_var.map(|va| {
        let var_b0 = if transformed { b0 * b0 * va } else { va };
        let var_f0 = f1 / (b0 * b0) * (1.0 - f1 / n + f1 / (b0 * b0) * var_b0);
        (n * f0 / (n + f0) + var_f0).sqrt()
    });
    Ok(CompetitorEstimate {
        method,
        c_hat: Some(stats.c as f64 + f0),
        se,
        f0_hat: Some(f0),
        tau_used: fit.tau,
        note: None,
    })
}
