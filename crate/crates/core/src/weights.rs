//! Regression weights for the ratio model.
//!
//! Observed counts are treated as independent zero-truncated Poisson
//! variables with means `lambda_j = C p_j`. The delta method then gives the
//! variance of each ratio `f_{j+1}/f_j` and the covariance of neighbouring
//! ratios, written here purely in terms of the `lambda_j` so that neither `C`
//! nor `p_j` is needed on its own.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kemp::RationalRatioModel;
use crate::nls::FitResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZtpMoments {
    pub mu: f64,
    pub sigma2: f64,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "Poisson mean must be positive and finite, got {lambda}"
        )))
    }
}

/// `1 - e^{-x}`
fn one_minus_exp_neg(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// `1 - x/(e^x - 1)`, which is `x/2 - x^2/12 + ...` near zero.
fn one_minus_x_over_expm1(x: f64) -> f64 {
    if x < 1e-4 {
        x / 2.0 - x * x / 12.0
    } else {
        1.0 - x / x.exp_m1()
    }
}

/// `1 - e^{-x} - x e^{-x}`, the probability a Poisson(x) variable is at least 2.
fn poisson_tail_two(x: f64) -> f64 {
    if x < 0.1 {
        // e^{-x} (x^2/2! + x^3/3! + ...)
        let mut term = x * x / 2.0;
        let mut sum = 0.0;
        for k in 3..20 {
            sum += term;
            term *= x / k as f64;
        }
        (-x).exp() * sum
    } else {
        one_minus_exp_neg(x) - x * (-x).exp()
    }
}

/// Mean and variance of a zero-truncated Poisson with original mean `lambda`.
pub fn ztp_moments(lambda: f64) -> Result<ZtpMoments> {
    check_lambda(lambda)?;
    let mu = if lambda < 1e-12 {
        1.0 + lambda / 2.0
    } else {
        lambda / one_minus_exp_neg(lambda)
    };
    let sigma2 = mu * one_minus_x_over_expm1(lambda);
    Ok(ZtpMoments { mu, sigma2 })
}

/// Approximate `Var(f_{j+1}/f_j)` given `lambda_j` and `lambda_{j+1}`.
pub fn ratio_variance(lambda_j: f64, lambda_next: f64) -> Result<f64> {
    check_lambda(lambda_j)?;
    check_lambda(lambda_next)?;
    let a = one_minus_exp_neg(lambda_j);
    let b = one_minus_exp_neg(lambda_next);
    let ratio = lambda_next / lambda_j;
    let first = ratio * ratio / lambda_j * (a * a * a) / (b * b) * one_minus_x_over_expm1(lambda_j);
    let second = ratio / lambda_j * (a * a) / b * one_minus_x_over_expm1(lambda_next);
    Ok(first + second)
}

/// Approximate `Cov(f_j/f_{j-1}, f_{j+1}/f_j)` given three consecutive means.
pub fn ratio_covariance(lambda_prev: f64, lambda_j: f64, lambda_next: f64) -> Result<f64> {
    check_lambda(lambda_prev)?;
    check_lambda(lambda_j)?;
    check_lambda(lambda_next)?;
    let scale = lambda_next / lambda_prev / lambda_j;
    Ok(-scale * one_minus_exp_neg(lambda_prev) / one_minus_exp_neg(lambda_next)
        * poisson_tail_two(lambda_j))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightKind {
    InverseIndex,
    AdaptiveDiagonal,
    AdaptiveTridiagonal,
    Fixed,
}

/// Weighting of the ratio residuals.
///
/// Diagonal schemes store inverse variances. The tridiagonal scheme stores
/// the covariance bands themselves; its precision matrix is their inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightScheme {
    InverseIndex {
        weights: Vec<f64>,
    },
    AdaptiveDiagonal {
        weights: Vec<f64>,
    },
    AdaptiveTridiagonal {
        variances: Vec<f64>,
        covariances: Vec<f64>,
    },
    /// Caller-supplied diagonal weights.
    Fixed {
        weights: Vec<f64>,
    },
}

impl WeightScheme {
    pub fn fixed(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Domain("weights must be positive and finite".into()));
        }
        Ok(WeightScheme::Fixed { weights })
    }

    pub fn uniform(len: usize) -> Self {
        WeightScheme::Fixed {
            weights: vec![1.0; len],
        }
    }

    pub fn kind(&self) -> WeightKind {
        match self {
            WeightScheme::InverseIndex { .. } => WeightKind::InverseIndex,
            WeightScheme::AdaptiveDiagonal { .. } => WeightKind::AdaptiveDiagonal,
            WeightScheme::AdaptiveTridiagonal { .. } => WeightKind::AdaptiveTridiagonal,
            WeightScheme::Fixed { .. } => WeightKind::Fixed,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            WeightScheme::InverseIndex { weights }
            | WeightScheme::AdaptiveDiagonal { weights }
            | WeightScheme::Fixed { weights } => weights.len(),
            WeightScheme::AdaptiveTridiagonal { variances, .. } => variances.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_diagonal(&self) -> bool {
        !matches!(self, WeightScheme::AdaptiveTridiagonal { .. })
    }

    /// The precision matrix applied to the residuals.
    pub fn precision(&self) -> Result<DMatrix<f64>> {
        match self {
            WeightScheme::InverseIndex { weights }
            | WeightScheme::AdaptiveDiagonal { weights }
            | WeightScheme::Fixed { weights } => {
                Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(weights)))
            }
            WeightScheme::AdaptiveTridiagonal {
                variances,
                covariances,
            } => {
                let n = variances.len();
                let mut cov = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(variances));
                for (i, &c) in covariances.iter().enumerate() {
                    cov[(i, i + 1)] = c;
                    cov[(i + 1, i)] = c;
                }
                let chol = cov.cholesky().ok_or(Error::NotPsd)?;
                let inv = chol.inverse();
                debug_assert_eq!(inv.nrows(), n);
                Ok(inv)
            }
        }
    }

    /// The same scheme with every entry multiplied by `factor`; precision
    /// matrices scale by `factor` in every case.
    pub fn scaled(&self, factor: f64) -> Self {
        let mul = |v: &[f64], f: f64| v.iter().map(|x| x * f).collect::<Vec<_>>();
        match self {
            WeightScheme::InverseIndex { weights } => WeightScheme::InverseIndex {
                weights: mul(weights, factor),
            },
            WeightScheme::AdaptiveDiagonal { weights } => WeightScheme::AdaptiveDiagonal {
                weights: mul(weights, factor),
            },
            WeightScheme::Fixed { weights } => WeightScheme::Fixed {
                weights: mul(weights, factor),
            },
            WeightScheme::AdaptiveTridiagonal {
                variances,
                covariances,
            } => WeightScheme::AdaptiveTridiagonal {
                variances: mul(variances, 1.0 / factor),
                covariances: mul(covariances, 1.0 / factor),
            },
        }
    }

    /// Per-ratio weights (precision diagonal) scaled to a maximum of one.
    pub fn normalized(&self) -> Vec<f64> {
        let diag: Vec<f64> = match self.precision() {
            Ok(p) => p.diagonal().iter().copied().collect(),
            Err(_) => return Vec::new(),
        };
        let max = diag.iter().cloned().fold(f64::MIN, f64::max);
        diag.iter().map(|w| w / max).collect()
    }
}

/// Weights `1/j` for `j = 1..=ratios`.
pub fn initial_weights(ratios: usize) -> Result<WeightScheme> {
    if ratios < 1 {
        return Err(Error::Domain("need at least one ratio".into()));
    }
    Ok(WeightScheme::InverseIndex {
        weights: (1..=ratios).map(|j| 1.0 / j as f64).collect(),
    })
}

/// Expected counts `lambda_1 = f_1`, `lambda_{j+1} = lambda_j r(j)` for
/// `j = 1..=ratios`.
pub fn expected_counts(model: &RationalRatioModel, f1: f64, ratios: usize) -> Result<Vec<f64>> {
    let mut lambdas = Vec::with_capacity(ratios + 1);
    let mut current = f1;
    lambdas.push(current);
    for j in 1..=ratios {
        let r = model.evaluate_ratio(j as f64)?;
        current *= r;
        if !(current > 0.0 && current.is_finite()) {
            return Err(Error::NonPositiveRatio { j });
        }
        lambdas.push(current);
    }
    Ok(lambdas)
}

/// Weights rebuilt from a fitted model's expected counts.
pub fn adaptive_weights(
    fit: &FitResult,
    f1: u64,
    ratios: usize,
    tridiagonal: bool,
) -> Result<WeightScheme> {
    adaptive_weights_for_model(&fit.model, f1, ratios, tridiagonal)
}

pub fn adaptive_weights_for_model(
    model: &RationalRatioModel,
    f1: u64,
    ratios: usize,
    tridiagonal: bool,
) -> Result<WeightScheme> {
    if f1 == 0 {
        return Err(Error::NoSingletons);
    }
    let lambdas = expected_counts(model, f1 as f64, ratios)?;
    let variances = lambdas
        .windows(2)
        .map(|w| ratio_variance(w[0], w[1]))
        .collect::<Result<Vec<_>>>()?;
    if tridiagonal {
        let covariances = lambdas
            .windows(3)
            .map(|w| ratio_covariance(w[0], w[1], w[2]))
            .collect::<Result<Vec<_>>>()?;
        Ok(WeightScheme::AdaptiveTridiagonal {
            variances,
            covariances,
        })
    } else {
        let weights: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Domain("adaptive weight is not finite".into()));
        }
        Ok(WeightScheme::AdaptiveDiagonal { weights })
    }
}
