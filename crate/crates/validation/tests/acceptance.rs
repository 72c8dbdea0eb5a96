//! Acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use richness::estimators::{chao_bunge, wlrm, Method};
use richness::freqtab::{FrequencyTable, RatioSeries};
use richness::kemp::{pgf_eval, KempRatio, RationalRatioModel};
use richness::nls::{fit_ols_base, fit_wnls, model_jacobian, pad_params, SolverOptions};
use richness::procedure::{breakaway_estimate, BreakawayCode, ProcedureOptions};
use richness::simulate::{replication_study, SimConfig};
use richness::weights::{initial_weights, ratio_covariance, ratio_variance, WeightScheme};
use richness_cli::{cmd_simulate, compare_rows, read_table, OutputFormat};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within_rel(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

// 1 ---------------------------------------------------------------------

fn table1_row(c_true: u64, prob: f64, size: f64, reps: usize, se_paper: f64, sd_paper: f64, need_nb: bool) -> (bool, String) {
    let config = SimConfig::new(c_true, prob, size, reps, 20150101).expect("valid config");
    let summary = replication_study(&config).expect("study runs");
    let nb_ok = !need_nb || summary.pct_inferred_nb >= 95.0;
    let se_ok = within_rel(summary.mean_se_hat, se_paper, 0.15);
    let sd_ok = within_rel(summary.empirical_se, sd_paper, 0.15);
    let detail = format!(
        "C={c_true} ({prob},{size}) x{reps}: %NB {:.1}{} mean se {:.2} vs {se_paper} [{}], sd {:.2} vs {sd_paper} [{}], mean C {:.1}, failures {}",
        summary.pct_inferred_nb,
        if need_nb { if nb_ok { " [ok]" } else { " [<95]" } } else { "" },
        summary.mean_se_hat,
        if se_ok { "ok" } else { "off" },
        summary.empirical_se,
        if sd_ok { "ok" } else { "off" },
        summary.mean_c_hat,
        summary.failures
    );
    (nb_ok && se_ok && sd_ok, detail)
}

fn criterion_table1() -> Outcome {
    let start = Instant::now();
    let (a, da) = table1_row(5000, 0.95, 100.0, 200, 6.24, 6.20, true);
    let (b, db) = table1_row(50000, 0.99, 500.0, 100, 20.69, 20.84, false);
    outcome(a && b, format!("{da}; {db}; {:.1}s", start.elapsed().as_secs_f64()))
}

// 2 ---------------------------------------------------------------------

fn criterion_kemp_pgf() -> Outcome {
    let kemp = KempRatio {
        a: vec![1.0, 1.0],
        b: vec![0.1],
        lambda: 0.1,
    };
    let at_minus5 = pgf_eval(&kemp, -5.0);
    let at_one = pgf_eval(&kemp, 1.0);
    match (at_minus5, at_one) {
        (Ok(g5), Ok(g1)) => outcome(
            (g5 + 0.6365).abs() <= 0.0005 && (g1 - 1.0).abs() <= 1e-9,
            format!("G(-5) = {g5:.6}, G(1) = {g1:.12}"),
        ),
        (a, b) => outcome(false, format!("evaluation failed: {a:?} {b:?}")),
    }
}

// 3 ---------------------------------------------------------------------

fn geometric() -> FrequencyTable {
    FrequencyTable::from_counts(&(1..=10).map(|j| 1u64 << (10 - j)).collect::<Vec<_>>())
}

fn criterion_geometric() -> Outcome {
    match breakaway_estimate(&geometric(), &ProcedureOptions::default()) {
        Ok(est) => {
            let var_b0 = est.variance.map(|v| v.var_b0).unwrap_or(f64::NAN);
            let pass = (est.c_hat - 2047.0).abs() < 1e-6
                && (est.f0_hat - 1024.0).abs() < 1e-6
                && est.code == BreakawayCode::Stabilized
                && (est.se - 47.06).abs() <= 0.01
                && var_b0 == 0.0;
            outcome(
                pass,
                format!(
                    "C = {:.6}, f0 = {:.6}, code {}, se = {:.4}, var(b0) = {var_b0}",
                    est.c_hat, est.f0_hat, est.code as u8, est.se
                ),
            )
        }
        Err(e) => outcome(false, format!("error: {e}")),
    }
}

// 4 ---------------------------------------------------------------------

fn random_model(rng: &mut ChaCha20Rng, jbar: f64) -> RationalRatioModel {
    let orders = [(1, 0), (1, 1), (2, 1), (2, 2), (3, 2), (3, 3), (4, 3), (4, 4)];
    let (p, q) = orders[rng.random_range(0..orders.len())];
    loop {
        let beta: Vec<f64> = (0..=p).map(|r| rng.random_range(-1.0..1.0) / (1.0 + r as f64).powi(2)).collect();
        let alpha: Vec<f64> = (1..=q).map(|r| rng.random_range(-0.3..0.3) / (r as f64).powi(2) / jbar.powi(r - 1)).collect();
        let model = RationalRatioModel::new(beta, alpha, jbar).unwrap();
        if model.denominator_roots_in(12).is_empty() {
            return model;
        }
    }
}

fn jacobian_check(rng: &mut ChaCha20Rng) -> (bool, f64) {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let jbar = 6.5;
        let model = random_model(rng, jbar);
        let (p, q) = model.order();
        let j = rng.random_range(1.0..12.0);
        let (_, jac) = model_jacobian(&model, &[j]).unwrap();
        let theta = model.params();
        let mut numeric = Vec::with_capacity(theta.len());
        for k in 0..theta.len() {
            let h = 1e-5 * theta[k].abs().max(1.0);
            let eval = |delta: f64| {
                let mut t = theta.clone();
                t[k] += delta;
                RationalRatioModel::from_params(p, q, &t, jbar).unwrap().evaluate_ratio(j).unwrap()
            };
            // Richardson-extrapolated central difference
            let d1 = (eval(h) - eval(-h)) / (2.0 * h);
            let d2 = (eval(h / 2.0) - eval(-h / 2.0)) / h;
            numeric.push((4.0 * d2 - d1) / 3.0);
        }
        let analytic: Vec<f64> = jac.row(0).iter().copied().collect();
        let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let err = analytic
            .iter()
            .zip(&numeric)
            .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
        worst = worst.max(err / scale);
    }
    (worst <= 1e-5, worst)
}

fn recovery_check() -> (bool, f64) {
    let truths = [
        RationalRatioModel::new(vec![0.4, 0.05], vec![0.05], 5.5).unwrap(),
        RationalRatioModel::new(vec![1.2, -0.08, 0.004], vec![0.03], 7.0).unwrap(),
        RationalRatioModel::new(vec![0.8, 0.06, 0.002], vec![0.04, 0.001], 7.0).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    for truth in &truths {
        let (p, q) = truth.order();
        let n = (2.0 * truth.jbar() - 1.0).round() as usize;
        let series = RatioSeries::from_points((1..=n).map(|j| (j as f64, truth.evaluate_ratio(j as f64).unwrap())).collect()).unwrap();
        let weights = initial_weights(n).unwrap();
        let base = fit_ols_base(&series, &weights).unwrap();
        let start = pad_params(&base.model.params(), (1, 0), (p, q));
        let fit = match fit_wnls(&series, &weights, p, q, &start, &SolverOptions::default()) {
            Ok(f) if f.converged => f,
            _ => return (false, f64::INFINITY),
        };
        for (got, want) in fit.model.params().iter().zip(truth.params()) {
            worst = worst.max((got - want).abs());
        }
    }
    (worst <= 1e-6, worst)
}

fn rescaling_check() -> (bool, f64) {
    let counts = [150u64, 210, 180, 160, 120, 90, 60, 40, 25, 18, 10, 6, 3];
    let series = RatioSeries::from_counts(&counts).unwrap();
    let base_weights: Vec<f64> = (1..=series.len()).map(|j| 1.0 / (j as f64).sqrt()).collect();
    let weights = WeightScheme::fixed(base_weights).unwrap();
    let ols = fit_ols_base(&series, &weights).unwrap();
    let start = pad_params(&ols.model.params(), (1, 0), (2, 1));
    let reference = fit_wnls(&series, &weights, 2, 1, &start, &SolverOptions::default()).unwrap();
    let mut worst: f64 = 0.0;
    for factor in [1e-3, 7.0, 1e4] {
        let scaled = fit_wnls(&series, &weights.scaled(factor), 2, 1, &start, &SolverOptions::default()).unwrap();
        let a = DVector::from_vec(reference.model.params());
        let b = DVector::from_vec(scaled.model.params());
        worst = worst.max((a - b).amax());
    }
    (worst <= 1e-8, worst)
}

fn criterion_solver() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let (jac_ok, jac_err) = jacobian_check(&mut rng);
    let (rec_ok, rec_err) = recovery_check();
    let (scale_ok, scale_err) = rescaling_check();
    outcome(
        jac_ok && rec_ok && scale_ok,
        format!("jacobian rel err {jac_err:.2e}, recovery err {rec_err:.2e}, rescaling err {scale_err:.2e}"),
    )
}

// 5 ---------------------------------------------------------------------

fn ztp(rng: &mut ChaCha20Rng, poisson: &Poisson<f64>) -> f64 {
    loop {
        let x = poisson.sample(rng);
        if x > 0.0 {
            return x;
        }
    }
}

#[derive(Default, Clone, Copy)]
struct Moments {
    count: f64,
    x: f64,
    y: f64,
    xx: f64,
    yy: f64,
    xy: f64,
    x3: f64,
    x4: f64,
    xxyy: f64,
    xxy: f64,
    xyy: f64,
}

impl Moments {
    fn add(&mut self, x: f64, y: f64) {
        self.count += 1.0;
        self.x += x;
        self.y += y;
        self.xx += x * x;
        self.yy += y * y;
        self.xy += x * y;
        self.x3 += x * x * x;
        self.x4 += x * x * x * x;
        self.xxyy += x * x * y * y;
        self.xxy += x * x * y;
        self.xyy += x * y * y;
    }

    fn merge(mut self, o: Moments) -> Moments {
        self.count += o.count;
        self.x += o.x;
        self.y += o.y;
        self.xx += o.xx;
        self.yy += o.yy;
        self.xy += o.xy;
        self.x3 += o.x3;
        self.x4 += o.x4;
        self.xxyy += o.xxyy;
        self.xxy += o.xxy;
        self.xyy += o.xyy;
        self
    }

    /// Sample variance of `x` and its standard error.
    fn variance(&self) -> (f64, f64) {
        let n = self.count;
        let m = self.x / n;
        let var = self.xx / n - m * m;
        let m4 = self.x4 / n - 4.0 * m * self.x3 / n + 6.0 * m * m * self.xx / n - 3.0 * m.powi(4);
        (var, ((m4 - var * var) / n).sqrt())
    }

    /// Sample covariance of `x, y` and its standard error.
    fn covariance(&self) -> (f64, f64) {
        let n = self.count;
        let (mx, my) = (self.x / n, self.y / n);
        let cov = self.xy / n - mx * my;
        // E[((x - mx)(y - my))^2]
        let e2 = self.xxyy / n - 2.0 * my * self.xxy / n - 2.0 * mx * self.xyy / n
            + my * my * self.xx / n
            + mx * mx * self.yy / n
            + 4.0 * mx * my * self.xy / n
            - 3.0 * mx * mx * my * my;
        (cov, ((e2 - cov * cov) / n).sqrt())
    }
}

/// Consecutive ratios `f_j / f_{j-1}` and `f_{j+1} / f_j` of independent
/// zero-truncated Poisson counts with common mean `lambda`.
fn ratio_moments(lambda: f64, replicates: u64, seed: u64) -> Moments {
    let chunks = 64u64;
    let per = replicates / chunks;
    let poisson = Poisson::new(lambda).unwrap();
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let mut m = Moments::default();
            for _ in 0..per {
                let prev = ztp(&mut rng, &poisson);
                let mid = ztp(&mut rng, &poisson);
                let next = ztp(&mut rng, &poisson);
                m.add(next / mid, mid / prev);
            }
            m
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Moments::default(), Moments::merge)
}

fn criterion_weight_mc() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for lambda in [2.0, 5.0, 20.0] {
        let m = ratio_moments(lambda, 10_000_000, 55);
        let (var_mc, var_se) = m.variance();
        let (cov_mc, cov_se) = m.covariance();
        let var_formula = ratio_variance(lambda, lambda).unwrap();
        let cov_formula = ratio_covariance(lambda, lambda, lambda).unwrap();
        let var_z = (var_formula - var_mc) / var_se;
        let cov_z = (cov_formula - cov_mc) / cov_se;
        pass &= var_z.abs() <= 3.0 && cov_z.abs() <= 3.0;
        parts.push(format!(
            "lambda {lambda}: var {var_formula:.4} vs {var_mc:.4} ({var_z:+.0} se), cov {cov_formula:.4} vs {cov_mc:.4} ({cov_z:+.0} se)"
        ));
    }
    let mut sign_ok = true;
    for i in 0..10_000 {
        let l = 10f64.powf(-3.0 + 6.0 * i as f64 / 9_999.0);
        let (a, b, c) = (l, l * 1.37, l * 0.61);
        sign_ok &= ratio_variance(a, b).unwrap() >= 0.0 && ratio_variance(c, a).unwrap() >= 0.0;
        sign_ok &= ratio_covariance(a, b, c).unwrap() <= 0.0 && ratio_covariance(c, a, b).unwrap() <= 0.0;
    }
    parts.push(format!("sign properties on 1e4-point grid: {}", if sign_ok { "ok" } else { "violated" }));
    outcome(pass && sign_ok, parts.join("; "))
}

// 6 ---------------------------------------------------------------------

fn criterion_fallback() -> Outcome {
    // ratios 0.1, 0.5, 1.0: the only fittable model is linear, with b0 < 0
    let table = FrequencyTable::from_counts(&[100, 10, 5, 5]);
    let twlrm = wlrm(&table, true).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for select_linear in [false, true] {
        let options = ProcedureOptions {
            select_linear,
            ..Default::default()
        };
        match breakaway_estimate(&table, &options) {
            Ok(est) => {
                let same = Some(est.c_hat) == twlrm.c_hat
                    && Some(est.se) == twlrm.se
                    && Some(est.f0_hat) == twlrm.f0_hat
                    && est.fallback.as_ref() == Some(&twlrm);
                pass &= est.code == BreakawayCode::Fallback && same;
                parts.push(format!("code {}, C {:.4} vs tWLRM {:?}, identical {same}", est.code as u8, est.c_hat, twlrm.c_hat));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("error {e}"));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

// 7 ---------------------------------------------------------------------

fn criterion_table2() -> Outcome {
    let options = ProcedureOptions::default();
    // optional supplementary data
    if let Some(dir) = std::env::var_os("RICHNESS_TABLE2_DIR").map(PathBuf::from) {
        let mut parts = Vec::new();
        let mut pass = true;
        for name in ["apples", "soil", "epstein"] {
            let path = dir.join(format!("{name}.csv"));
            let table = match read_table(&path) {
                Ok(t) => t,
                Err(e) => return outcome(false, format!("{}: {e}", path.display())),
            };
            let rows = match compare_rows(&table, &options, 10) {
                Ok(rows) => rows,
                Err(e) => return outcome(false, format!("{name}: {e}")),
            };
            let cells: Vec<String> = rows.iter().map(|r| format!("{} {}", r.method, r.cell())).collect();
            if name == "epstein" {
                for method in [Method::ChaoBunge, Method::Uwlrm] {
                    pass &= rows.iter().any(|r| r.method == method && r.cell() == "*");
                }
            }
            parts.push(format!("{name}: {}", cells.join(", ")));
        }
        return outcome(pass, parts.join("; "));
    }
    // theta <= 0 for Chao-Bunge
    let singletons = FrequencyTable::from_pairs([(1, 200), (2, 3), (3, 2), (4, 1), (9, 1)]).unwrap();
    let cb = chao_bunge(&singletons, 10).unwrap();
    // intercept <= 0 for the untransformed regression
    let steep = FrequencyTable::from_counts(&[1000, 100, 60, 50, 45]);
    let uw = wlrm(&steep, false).unwrap();
    let rows_cb = compare_rows(&singletons, &options, 10).unwrap();
    let rows_uw = compare_rows(&steep, &options, 10).unwrap();
    let star = |rows: &[richness_cli::CompareRow], m: Method| rows.iter().any(|r| r.method == m && r.cell() == "*");
    let pass = !cb.is_estimable() && !uw.is_estimable() && star(&rows_cb, Method::ChaoBunge) && star(&rows_uw, Method::Uwlrm);
    outcome(
        pass,
        format!(
            "supplementary data absent; Chao-Bunge cell {:?}, uWLRM cell {:?}",
            rows_cb.iter().find(|r| r.method == Method::ChaoBunge).map(|r| r.cell()),
            rows_uw.iter().find(|r| r.method == Method::Uwlrm).map(|r| r.cell())
        ),
    )
}

// 8 ---------------------------------------------------------------------

fn criterion_determinism() -> Outcome {
    let mut config = SimConfig::new(5000, 0.95, 100.0, 40, 7).unwrap();
    let options = ProcedureOptions::default();
    let mut outputs = Vec::new();
    for parallel in [true, true, false] {
        config.parallel = parallel;
        for format in [OutputFormat::Json, OutputFormat::Table] {
            outputs.push((parallel, format, cmd_simulate(&config, &options, format).unwrap()));
        }
    }
    let json: Vec<&String> = outputs.iter().filter(|o| o.1 == OutputFormat::Json).map(|o| &o.2).collect();
    let table: Vec<&String> = outputs.iter().filter(|o| o.1 == OutputFormat::Table).map(|o| &o.2).collect();
    let pass = json.windows(2).all(|w| w[0] == w[1]) && table.windows(2).all(|w| w[0] == w[1]);
    outcome(pass, format!("{} JSON bytes, parallel x2 and serial identical: {pass}", json[0].len()))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("simulation study reproduction", criterion_table1),
        ("Kemp pgf oracle", criterion_kemp_pgf),
        ("exact geometric oracle", criterion_geometric),
        ("solver properties", criterion_solver),
        ("weight formula Monte Carlo", criterion_weight_mc),
        ("fallback conformance", criterion_fallback),
        ("comparison table and inestimable cells", criterion_table2),
        ("determinism", criterion_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = check();
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {} {name}: {} ({})",
            i + 1,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
