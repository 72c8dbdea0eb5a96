//! Rational ratio models and the count distributions they imply.
//!
//! The model is
//!
//! ```text
//! r(j) = (b_0 + b_1 x + ... + b_p x^p) / (1 + a_1 x + ... + a_q x^q),   x = j - jbar
//! ```
//!
//! fitted to observed ratios `f_{j+1}/f_j`. Evaluated at `j = 0` it predicts
//! `f_1/f_0`. Read as a probability ratio `p_{j+1}/p_j` it defines (or fails
//! to define) a distribution on the non-negative integers, which lets a fit
//! be classified as Poisson, negative binomial, a general Kemp-type law, or
//! no distribution at all.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly;

/// Maximum number of series terms summed before giving up.
pub const MAX_SERIES_TERMS: usize = 1_000_000;

/// Default absolute tolerance for Katz-form classification.
pub const DEFAULT_CLASSIFY_TOL: f64 = 0.05;

/// Katz slopes this close to zero are treated as exactly zero.
pub const KATZ_ZERO_SLOPE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RationalRatioModel {
    p: usize,
    q: usize,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    jbar: f64,
}

#[derive(Deserialize)]
struct ModelRecord {
    p: usize,
    q: usize,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    jbar: f64,
}

impl<'de> Deserialize<'de> for RationalRatioModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = ModelRecord::deserialize(d)?;
        if rec.beta.len() != rec.p + 1 || rec.alpha.len() != rec.q {
            return Err(serde::de::Error::custom(
                "coefficient counts do not match model order",
            ));
        }
        RationalRatioModel::new(rec.beta, rec.alpha, rec.jbar).map_err(serde::de::Error::custom)
    }
}

impl RationalRatioModel {
    /// Model with numerator `beta[0..=p]` and denominator `1 + alpha[0] x + ...`.
    pub fn new(beta: Vec<f64>, alpha: Vec<f64>, jbar: f64) -> Result<Self> {
        if beta.len() < 2 {
            return Err(Error::Domain("numerator degree must be at least 1".into()));
        }
        let p = beta.len() - 1;
        let q = alpha.len();
        if q > p {
            return Err(Error::Domain(format!(
                "denominator degree {q} exceeds numerator degree {p}"
            )));
        }
        if !jbar.is_finite() || beta.iter().chain(&alpha).any(|c| !c.is_finite()) {
            return Err(Error::Domain("model coefficients must be finite".into()));
        }
        Ok(Self {
            p,
            q,
            beta,
            alpha,
            jbar,
        })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            p: 1,
            q: 0,
            beta: vec![value, 0.0],
            alpha: Vec::new(),
            jbar: 0.0,
        }
    }

    /// Model of order `(p, q)` from a packed `[beta.., alpha..]` vector.
    pub fn from_params(p: usize, q: usize, params: &[f64], jbar: f64) -> Result<Self> {
        if params.len() != p + q + 1 {
            return Err(Error::Domain(format!(
                "expected {} parameters for ({p},{q}), got {}",
                p + q + 1,
                params.len()
            )));
        }
        Self::new(params[..=p].to_vec(), params[p + 1..].to_vec(), jbar)
    }

    pub fn order(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn jbar(&self) -> f64 {
        self.jbar
    }

    pub fn params(&self) -> Vec<f64> {
        self.beta.iter().chain(&self.alpha).copied().collect()
    }

    pub fn num_params(&self) -> usize {
        self.p + self.q + 1
    }

    /// Denominator coefficients in the centred variable, constant term included.
    pub fn denominator_coeffs(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.alpha.iter().copied()).collect()
    }

    pub fn numerator(&self, j: f64) -> f64 {
        poly::eval(&self.beta, j - self.jbar)
    }

    pub fn denominator(&self, j: f64) -> f64 {
        poly::eval(&self.denominator_coeffs(), j - self.jbar)
    }

    pub fn evaluate_ratio(&self, j: f64) -> Result<f64> {
        let den = self.denominator(j);
        if den.abs() < 1e-14 || !den.is_finite() {
            return Err(Error::Singularity { j });
        }
        Ok(self.numerator(j) / den)
    }

    /// Fitted ratio at `j = 0`, the model's estimate of `f_1/f_0`.
    pub fn predict_b0(&self) -> Result<f64> {
        self.evaluate_ratio(0.0)
    }

    /// Gradient of [`predict_b0`](Self::predict_b0) in `(beta.., alpha..)`.
    pub fn b0_gradient(&self) -> Result<Vec<f64>> {
        let x0 = -self.jbar;
        let num = self.numerator(0.0);
        let den = self.denominator(0.0);
        if den.abs() < 1e-14 {
            return Err(Error::Singularity { j: 0.0 });
        }
        let mut g = Vec::with_capacity(self.num_params());
        for r in 0..=self.p {
            g.push(x0.powi(r as i32) / den);
        }
        for r in 1..=self.q {
            g.push(-num * x0.powi(r as i32) / (den * den));
        }
        Ok(g)
    }

    /// Real roots of the denominator, in raw `j`, lying in `[0, upper]`.
    pub fn denominator_roots_in(&self, upper: usize) -> Vec<f64> {
        if self.q == 0 {
            return Vec::new();
        }
        let lo = -self.jbar;
        let hi = upper as f64 - self.jbar;
        poly::real_roots_in(&self.denominator_coeffs(), lo, hi)
            .into_iter()
            .map(|x| x + self.jbar)
            .collect()
    }

    /// The same model written in raw `j` with denominator constant one.
    pub fn uncentered(&self) -> Result<UncenteredModel> {
        let num = poly::shift(&self.beta, self.jbar);
        let den = poly::shift(&self.denominator_coeffs(), self.jbar);
        let d0 = den[0];
        if d0.abs() < 1e-14 {
            return Err(Error::Singularity { j: 0.0 });
        }
        Ok(UncenteredModel {
            beta: num.iter().map(|c| c / d0).collect(),
            alpha: den[1..].iter().map(|c| c / d0).collect(),
        })
    }

    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_record(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Domain(format!("bad model record: {e}")))
    }

    pub fn implied_probabilities(&self, j_max: usize) -> Result<ImpliedDistribution> {
        implied_distribution(self, j_max)
    }

    pub fn pgf(&self, s: f64) -> Result<f64> {
        pgf_eval(self, s)
    }

    pub fn classify(&self, ratios: usize, tol: f64) -> DistributionClass {
        classify(self, ratios, tol)
    }
}

/// Model coefficients in raw `j`: `(b*_0 + b*_1 j + ...) / (1 + a*_1 j + ...)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncenteredModel {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl UncenteredModel {
    pub fn evaluate(&self, j: f64) -> f64 {
        let den = 1.0 + j * poly::eval(&self.alpha, j);
        poly::eval(&self.beta, j) / den
    }
}

/// A ratio `p_{j+1}/p_j` defined for every `j >= 0`.
pub trait RatioFunction {
    fn ratio(&self, j: u64) -> Result<f64>;

    /// `lim r(j)` as `j -> infinity`; `None` when the ratio grows without bound.
    fn asymptotic_ratio(&self) -> Option<f64>;

    /// Index past which the sign of the ratio no longer changes.
    fn sign_horizon(&self) -> u64;
}

impl RatioFunction for RationalRatioModel {
    fn ratio(&self, j: u64) -> Result<f64> {
        self.evaluate_ratio(j as f64)
    }

    fn asymptotic_ratio(&self) -> Option<f64> {
        let num = poly::shift(&self.beta, self.jbar);
        let den = poly::shift(&self.denominator_coeffs(), self.jbar);
        let num = poly::trim(&num);
        let den = poly::trim(&den);
        match (num.len(), den.len()) {
            (0, _) => Some(0.0),
            (n, d) if n > d => None,
            (n, d) if n == d => Some(num[n - 1] / den[d - 1]),
            _ => Some(0.0),
        }
    }

    fn sign_horizon(&self) -> u64 {
        let bound = poly::root_bound(&poly::shift(&self.beta, self.jbar))
            .max(poly::root_bound(&poly::shift(&self.denominator_coeffs(), self.jbar)));
        bound.ceil().min(1e7) as u64 + 1
    }
}

/// Kemp's hypergeometric ratio `lambda prod(a_i + j) / (prod(b_i + j) (j + 1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KempRatio {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub lambda: f64,
}

impl RatioFunction for KempRatio {
    fn ratio(&self, j: u64) -> Result<f64> {
        let x = j as f64;
        let num: f64 = self.a.iter().map(|a| a + x).product::<f64>() * self.lambda;
        let den: f64 = self.b.iter().map(|b| b + x).product::<f64>() * (x + 1.0);
        if den == 0.0 {
            return Err(Error::Singularity { j: x });
        }
        Ok(num / den)
    }

    fn asymptotic_ratio(&self) -> Option<f64> {
        match self.a.len().cmp(&(self.b.len() + 1)) {
            std::cmp::Ordering::Greater => None,
            std::cmp::Ordering::Equal => Some(self.lambda),
            std::cmp::Ordering::Less => Some(0.0),
        }
    }

    fn sign_horizon(&self) -> u64 {
        let worst = self
            .a
            .iter()
            .chain(&self.b)
            .fold(0.0f64, |m, &c| m.max(-c));
        worst.ceil().min(1e7) as u64 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Support {
    /// Proper distribution on all non-negative integers.
    Unbounded,
    /// Proper distribution on `0..=last`.
    Terminating { last: u64 },
    /// Some implied `p_j` is negative, or the series diverges.
    Improper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpliedDistribution {
    pub support: Support,
    /// `p_0..=p_{j_max}` when proper, otherwise the raw `u_j` with `u_0 = 1`.
    pub values: Vec<f64>,
}

impl ImpliedDistribution {
    pub fn is_proper(&self) -> bool {
        !matches!(self.support, Support::Improper)
    }
}

const ZERO_RATIO: f64 = 1e-12;

/// Walk `u_0 = 1, u_{j+1} = u_j r(j)` and normalize when the result is a
/// probability distribution.
pub fn implied_distribution<R: RatioFunction + ?Sized>(
    ratio: &R,
    j_max: usize,
) -> Result<ImpliedDistribution> {
    let horizon = ratio.sign_horizon().max(j_max as u64);
    let limit = ratio.asymptotic_ratio();
    let mut raw = vec![1.0];
    let mut u = 1.0f64;
    let mut total = 1.0f64;
    let mut negative = false;
    let mut terminated = None;
    let mut converged = false;

    for j in 0..MAX_SERIES_TERMS as u64 {
        let r = ratio.ratio(j)?;
        if r.abs() <= ZERO_RATIO {
            terminated = Some(j);
            break;
        }
        u *= r;
        if !u.is_finite() {
            break;
        }
        if u < 0.0 {
            negative = true;
        }
        if (raw.len()) <= j_max {
            raw.push(u);
        }
        total += u;
        if j >= horizon {
            match limit {
                Some(l) if l.abs() < 1.0 => {
                    if negative || u.abs() <= 1e-17 * total.abs() {
                        converged = true;
                        break;
                    }
                }
                _ => break,
            }
        }
    }
    raw.resize(j_max + 1, 0.0);

    let proper_support = if negative {
        None
    } else if let Some(last) = terminated {
        Some(Support::Terminating { last })
    } else if converged {
        Some(Support::Unbounded)
    } else {
        None
    };
    Ok(match proper_support {
        Some(support) => ImpliedDistribution {
            support,
            values: raw.iter().map(|v| v / total).collect(),
        },
        None => ImpliedDistribution {
            support: Support::Improper,
            values: raw,
        },
    })
}

/// `G(s) = sum p_j s^j` for the distribution implied by `ratio`.
pub fn pgf_eval<R: RatioFunction + ?Sized>(ratio: &R, s: f64) -> Result<f64> {
    let dist = implied_distribution(ratio, 0)?;
    if !dist.is_proper() {
        return Err(Error::Domain("ratio does not define a distribution".into()));
    }
    let p0 = dist.values[0];
    let horizon = ratio.sign_horizon();
    let limit = ratio.asymptotic_ratio().unwrap_or(f64::INFINITY);
    let terminating = matches!(dist.support, Support::Terminating { .. });
    if !terminating && (s * limit).abs() >= 1.0 {
        return Err(Error::Divergent { s });
    }

    // Sum terms t_j = p_j s^j, keeping a compensated running sum because
    // the series alternates strongly for negative s.
    let mut term = p0;
    let mut sum = p0;
    let mut comp = 0.0;
    for j in 0..MAX_SERIES_TERMS as u64 {
        let r = ratio.ratio(j)?;
        if r.abs() <= ZERO_RATIO {
            return Ok(sum + comp);
        }
        let step = s * r;
        term *= step;
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        if j >= horizon {
            let rho = step.abs().max((s * limit).abs());
            if rho < 1.0 && term.abs() * rho / (1.0 - rho) < 1e-15 {
                return Ok(sum + comp);
            }
        }
    }
    Err(Error::Divergent { s })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionLabel {
    Poisson,
    NegativeBinomial,
    KempProper,
    KempTerminating,
    NonDistribution,
}

/// Katz parameters of `p_{j+1}/p_j = (a + b j)/(1 + j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KatzParams {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionClass {
    pub label: DistributionLabel,
    pub katz: Option<KatzParams>,
}

impl DistributionClass {
    fn plain(label: DistributionLabel) -> Self {
        Self { label, katz: None }
    }

    fn katz(label: DistributionLabel, a: f64, b: f64) -> Self {
        Self {
            label,
            katz: Some(KatzParams { a, b }),
        }
    }

    pub fn is_negative_binomial(&self) -> bool {
        self.label == DistributionLabel::NegativeBinomial
    }
}

/// Classify the distribution implied by a fitted model.
///
/// A `(1,1)` model whose raw denominator slope is within `tol` of one is in
/// Katz form `(a + b j)/(1 + j)`: negative binomial when `a > 0` and
/// `0 < b < 1`, Poisson when `a > 0` and `|b| <= tol`. The two overlap for
/// small positive `b`; only slopes at rounding level count as zero there. A constant ratio in
/// `(0, 1)` is geometric, hence negative binomial. Anything else is sorted by
/// whether the ratio recursion yields a proper distribution.
pub fn classify(model: &RationalRatioModel, ratios: usize, tol: f64) -> DistributionClass {
    use DistributionLabel::*;
    let Ok(raw) = model.uncentered() else {
        return DistributionClass::plain(NonDistribution);
    };
    let b0 = raw.beta[0];
    let slope = raw.beta[1];
    let constant_ratio = |den_flat: bool| {
        den_flat && raw.beta[2..].iter().all(|c| c.abs() <= tol) && slope.abs() <= tol && b0 > 0.0 && b0 < 1.0
    };
    match model.order() {
        (1, 1) => {
            let a1 = raw.alpha[0];
            if (a1 - 1.0).abs() <= tol && b0 > 0.0 {
                if slope > KATZ_ZERO_SLOPE && slope < 1.0 {
                    return DistributionClass::katz(NegativeBinomial, b0, slope);
                }
                if slope.abs() <= tol.max(KATZ_ZERO_SLOPE) {
                    return DistributionClass::katz(Poisson, b0, slope);
                }
            }
            if constant_ratio(a1.abs() <= tol) {
                return DistributionClass::katz(NegativeBinomial, b0, b0);
            }
        }
        (1, 0)
            if constant_ratio(true) => {
                return DistributionClass::katz(NegativeBinomial, b0, b0);
            }
        _ => {}
    }
    match implied_distribution(model, ratios) {
        Ok(d) => match d.support {
            Support::Unbounded => DistributionClass::plain(KempProper),
            Support::Terminating { .. } => DistributionClass::plain(KempTerminating),
            Support::Improper => DistributionClass::plain(NonDistribution),
        },
        Err(_) => DistributionClass::plain(NonDistribution),
    }
}
