//! Command-line front end: argument parsing, config layering and output
//! rendering. `main.rs` only maps the result to an exit status.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use richness::estimators::{chao_bunge, chao_lower_bound, wlrm, wlrm_fit, CompetitorEstimate, Method, WlrmWeighting, DEFAULT_CHAO_BUNGE_TAU};
use richness::freqtab::{parse_frequency_table, ratio_series, FrequencyTable};
use richness::nls::{sequential_fit_ladder, FitResult};
use richness::procedure::{breakaway_estimate, satisfies_criteria, ProcedureOptions, RichnessEstimate};
use richness::simulate::{replication_study_with, SimConfig, StudySummary};
use richness::weights::initial_weights;
use richness::Error as CoreError;

pub use config::{FileConfig, OutputFormat, CONFIG_ENV};

/// Version stamped into every JSON record.
pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or malformed input, or bad flags.
    #[error("{0}")]
    Input(String),
    /// The input is valid but the method produces no estimate.
    #[error("no estimate: {0}")]
    NoEstimate(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::NoEstimate(_) => 2,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Parse(_) | CoreError::Config(_) => CliError::Input(e.to_string()),
            CoreError::InsufficientStructure(reason) => {
                CliError::NoEstimate(format!("insufficient structure: {reason}"))
            }
            other => CliError::NoEstimate(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "richness", version, about = "Estimate the number of unseen classes from frequency counts")]
pub struct Cli {
    /// TOML file of defaults (falls back to $RICHNESS_CONFIG).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full estimation procedure on one table.
    Estimate {
        input: PathBuf,
        #[command(flatten)]
        procedure: ProcedureFlags,
    },
    /// Fit the model ladder with fixed weights and report every fit.
    Fit {
        input: PathBuf,
        /// Weights to fit with: the initial 1/j weights or the procedure's final ones.
        #[arg(long, value_enum, default_value = "initial")]
        weights: FitWeights,
        /// Report only this order, e.g. `1,1`.
        #[arg(long, value_parser = parse_order)]
        model: Option<(usize, usize)>,
        #[command(flatten)]
        procedure: ProcedureFlags,
    },
    /// Compare the ratio estimate with the regression and moment competitors.
    Compare {
        input: PathBuf,
        /// Frequency cutoff for the Chao-Bunge estimator.
        #[arg(long, default_value_t = DEFAULT_CHAO_BUNGE_TAU)]
        tau: u64,
        #[command(flatten)]
        procedure: ProcedureFlags,
    },
    /// Replication study on negative-binomial data.
    Simulate {
        #[command(flatten)]
        sim: SimulateFlags,
        #[command(flatten)]
        procedure: ProcedureFlags,
    },
    /// Observed and fitted ratios as CSV for plotting.
    RatioPlot {
        input: PathBuf,
        /// Write here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        procedure: ProcedureFlags,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FitWeights {
    Initial,
    Final,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProcedureFlags {
    /// Largest model order to try, e.g. `2,2`.
    #[arg(long, value_parser = parse_order)]
    pub ladder_cap: Option<(usize, usize)>,
    /// Use the tridiagonal weight matrix.
    #[arg(long)]
    pub tridiagonal: bool,
    #[arg(long)]
    pub stabilization_tol: Option<f64>,
    #[arg(long)]
    pub max_outer_iterations: Option<usize>,
    /// Tolerance of the Katz-form classification.
    #[arg(long)]
    pub classify_tol: Option<f64>,
    /// Allow the linear (1,0) model to be selected.
    #[arg(long)]
    pub select_linear: bool,
    /// Iteration cap of the nonlinear solver.
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateFlags {
    /// True number of classes.
    #[arg(long = "c")]
    pub c_true: u64,
    #[arg(long)]
    pub prob: f64,
    #[arg(long)]
    pub size: f64,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run replications on one thread.
    #[arg(long)]
    pub serial: bool,
}

fn parse_order(text: &str) -> Result<(usize, usize), String> {
    let (p, q) = text
        .split_once(',')
        .ok_or_else(|| format!("expected P,Q, got {text:?}"))?;
    let p: usize = p.trim().parse().map_err(|e| format!("bad P: {e}"))?;
    let q: usize = q.trim().parse().map_err(|e| format!("bad Q: {e}"))?;
    if p == 0 || q > p {
        return Err("need P >= 1 and Q <= P".into());
    }
    Ok((p, q))
}

/// Options after layering defaults, the config file and the flags.
pub fn procedure_options(file: &FileConfig, flags: &ProcedureFlags) -> Result<ProcedureOptions, CliError> {
    let section = &file.procedure;
    let mut options = ProcedureOptions::default();
    if let Some((p, q)) = flags.ladder_cap.or(section.ladder_cap) {
        options = options.with_ladder_cap(p, q);
    }
    options.tridiagonal = flags.tridiagonal || section.tridiagonal.unwrap_or(false);
    options.select_linear = flags.select_linear || section.select_linear.unwrap_or(false);
    if let Some(v) = flags.stabilization_tol.or(section.stabilization_tol) {
        options.stabilization_tol = v;
    }
    if let Some(v) = flags.max_outer_iterations.or(section.max_outer_iterations) {
        options.max_outer_iterations = v;
    }
    if let Some(v) = flags.classify_tol.or(section.classify_tol) {
        options.classify_tol = v;
    }
    if let Some(v) = flags.max_iterations.or(section.max_iterations) {
        options.solver.max_iterations = v;
    }
    options.validate().map_err(|e| CliError::Input(e.to_string()))?;
    Ok(options)
}

pub fn read_table(path: &Path) -> Result<FrequencyTable, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_frequency_table(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Parse arguments and run, returning the text to print.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let file = FileConfig::discover(cli.config.as_deref())?;
    let format = cli.format.or(file.format).unwrap_or(OutputFormat::Table);
    match &cli.command {
        Command::Estimate { input, procedure } => {
            let options = procedure_options(&file, procedure)?;
            cmd_estimate(&read_table(input)?, &options, format)
        }
        Command::Fit {
            input,
            weights,
            model,
            procedure,
        } => {
            let options = procedure_options(&file, procedure)?;
            cmd_fit(&read_table(input)?, &options, *weights, *model, format)
        }
        Command::Compare { input, tau, procedure } => {
            let options = procedure_options(&file, procedure)?;
            cmd_compare(&read_table(input)?, &options, *tau, format)
        }
        Command::Simulate { sim, procedure } => {
            let options = procedure_options(&file, procedure)?;
            let config = SimConfig {
                c_true: sim.c_true,
                prob: sim.prob,
                size: sim.size,
                replications: sim.reps,
                seed: sim.seed.or(file.simulate.seed).unwrap_or(0),
                parallel: !(sim.serial || file.simulate.serial.unwrap_or(false)),
            };
            config.validate().map_err(|e| CliError::Input(e.to_string()))?;
            cmd_simulate(&config, &options, format)
        }
        Command::RatioPlot {
            input,
            output,
            procedure,
        } => {
            let options = procedure_options(&file, procedure)?;
            let csv = cmd_ratio_plot(&read_table(input)?, &options)?;
            match output {
                Some(path) => {
                    std::fs::write(path, &csv)
                        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
                    Ok(String::new())
                }
                None => Ok(csv),
            }
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("records serialize");
    s.push('\n');
    s
}

pub fn estimate_record(est: &RichnessEstimate) -> serde_json::Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": "estimate",
        "c_hat_rounded": est.c_hat_rounded(),
        "estimate": est,
    })
}

pub fn cmd_estimate(table: &FrequencyTable, options: &ProcedureOptions, format: OutputFormat) -> Result<String, CliError> {
    let est = breakaway_estimate(table, options)?;
    Ok(match format {
        OutputFormat::Json => to_json(&estimate_record(&est)),
        OutputFormat::Table => render_estimate(&est),
    })
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.digits$}"),
        _ => "-".into(),
    }
}

fn render_estimate(est: &RichnessEstimate) -> String {
    let mut out = String::new();
    let model = est
        .model
        .as_ref()
        .map(|m| format!("({},{})", m.order().0, m.order().1))
        .unwrap_or_else(|| "tWLRM".into());
    let class = est
        .classification
        .map(|c| serde_json::to_value(c.label).unwrap().as_str().unwrap().to_string())
        .unwrap_or_else(|| "-".into());
    let rows = [
        ("observed classes", est.observed.c.to_string()),
        ("individuals", est.observed.n.to_string()),
        ("usable ratios", est.observed.ratios.to_string()),
        ("estimate", format!("{:.2} ({:.2})", est.c_hat, est.se)),
        ("rounded", est.c_hat_rounded().to_string()),
        ("unobserved", format!("{:.2}", est.f0_hat)),
        ("code", (est.code as u8).to_string()),
        ("model", model),
        ("classification", class),
        ("adaptive passes", est.iterations_outer.to_string()),
    ];
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<18}{v}");
    }
    if !est.ladder.is_empty() {
        let _ = writeln!(out, "\n{:<8}{:<11}{:>14}{:>12}  criteria", "model", "converged", "objective", "b0");
        for d in &est.ladder {
            let _ = writeln!(
                out,
                "{:<8}{:<11}{:>14.6e}{:>12}  {}",
                format!("({},{})", d.p, d.q),
                d.converged,
                d.objective,
                fmt_opt(d.criteria.b0, 4),
                if d.criteria.satisfied { "ok" } else { "fail" }
            );
        }
    }
    for w in &est.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

#[derive(Debug, Serialize)]
struct FitRecord<'a> {
    p: usize,
    q: usize,
    fit: &'a FitResult,
    b0: Option<f64>,
    criteria: richness::procedure::CriteriaReport,
}

pub fn cmd_fit(
    table: &FrequencyTable,
    options: &ProcedureOptions,
    weights: FitWeights,
    model: Option<(usize, usize)>,
    format: OutputFormat,
) -> Result<String, CliError> {
    let series = ratio_series(table)?;
    let scheme = match weights {
        FitWeights::Initial => initial_weights(series.len())?,
        FitWeights::Final => breakaway_estimate(table, options)?
            .weights_final
            .ok_or_else(|| CliError::NoEstimate("fallback path has no ratio-model weights".into()))?,
    };
    let fits = sequential_fit_ladder(&series, &scheme, &options.ladder, &options.solver);
    let fits: Vec<&FitResult> = fits.iter().filter(|f| model.is_none_or(|m| f.order() == m)).collect();
    if fits.is_empty() {
        return Err(CliError::NoEstimate("no model on the ladder could be fitted".into()));
    }
    let records: Vec<FitRecord> = fits
        .iter()
        .map(|f| FitRecord {
            p: f.order().0,
            q: f.order().1,
            fit: f,
            b0: f.model.predict_b0().ok(),
            criteria: satisfies_criteria(f, series.len()),
        })
        .collect();
    Ok(match format {
        OutputFormat::Json => to_json(&json!({
            "schema_version": SCHEMA_VERSION,
            "command": "fit",
            "weights": scheme,
            "fits": records,
        })),
        OutputFormat::Table => {
            let mut out = format!(
                "{:<8}{:<11}{:<18}{:>14}{:>12}  {}\n",
                "model", "converged", "termination", "objective", "b0", "parameters"
            );
            for r in &records {
                let params: Vec<String> = r.fit.model.params().iter().map(|v| format!("{v:.6}")).collect();
                let _ = writeln!(
                    out,
                    "{:<8}{:<11}{:<18}{:>14.6e}{:>12}  {}",
                    format!("({},{})", r.p, r.q),
                    r.fit.converged,
                    format!("{:?}", r.fit.termination),
                    r.fit.objective,
                    fmt_opt(r.b0, 4),
                    params.join(" ")
                );
            }
            out
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub method: Method,
    pub c_hat: Option<f64>,
    pub se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl From<CompetitorEstimate> for CompareRow {
    fn from(e: CompetitorEstimate) -> Self {
        Self {
            method: e.method,
            c_hat: e.c_hat,
            se: e.se,
            note: e.note,
        }
    }
}

impl CompareRow {
    /// `est (se)`, or `*` when inestimable.
    pub fn cell(&self) -> String {
        match (self.c_hat, self.se) {
            (Some(c), Some(se)) if se.is_finite() => format!("{} ({:.2})", c.round() as i64, se),
            (Some(c), _) => format!("{}", c.round() as i64),
            (None, _) => "*".into(),
        }
    }
}

pub fn compare_rows(table: &FrequencyTable, options: &ProcedureOptions, tau: u64) -> Result<Vec<CompareRow>, CliError> {
    let breakaway = match breakaway_estimate(table, options) {
        Ok(est) => CompareRow {
            method: Method::Breakaway,
            c_hat: Some(est.c_hat),
            se: Some(est.se),
            note: None,
        },
        Err(e) => match CliError::from(e) {
            CliError::NoEstimate(msg) => CompareRow {
                method: Method::Breakaway,
                c_hat: None,
                se: None,
                note: Some(msg),
            },
            input => return Err(input),
        },
    };
    Ok(vec![
        breakaway,
        wlrm(table, false)?.into(),
        wlrm(table, true)?.into(),
        chao_bunge(table, tau)?.into(),
        chao_lower_bound(table)?.into(),
    ])
}

pub fn cmd_compare(table: &FrequencyTable, options: &ProcedureOptions, tau: u64, format: OutputFormat) -> Result<String, CliError> {
    let rows = compare_rows(table, options, tau)?;
    Ok(match format {
        OutputFormat::Json => to_json(&json!({
            "schema_version": SCHEMA_VERSION,
            "command": "compare",
            "rows": rows,
        })),
        OutputFormat::Table => {
            let mut out = format!("{:<12}{}\n", "method", "estimate");
            for row in &rows {
                let _ = writeln!(out, "{:<12}{}", row.method.to_string(), row.cell());
            }
            out
        }
    })
}

pub fn simulate_record(summary: &StudySummary) -> serde_json::Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "summary": summary,
    })
}

pub fn render_summary(summary: &StudySummary) -> String {
    let cfg = &summary.config;
    let mut out = format!(
        "{:<10}{:<20}{:>14}{:>12}{:>12}{:>12}{:>10}\n",
        "true C", "(probability, size)", "% inferred NB", "mean se", "true se", "mean C", "failures"
    );
    let _ = writeln!(
        out,
        "{:<10}{:<20}{:>14.2}{:>12.2}{:>12.2}{:>12.2}{:>10}",
        cfg.c_true,
        format!("({},{})", cfg.prob, cfg.size),
        summary.pct_inferred_nb,
        summary.mean_se_hat,
        summary.empirical_se,
        summary.mean_c_hat,
        summary.failures
    );
    if summary.degenerate {
        out.push_str("warning: fewer than two estimates, true se is not defined\n");
    }
    out
}

pub fn cmd_simulate(config: &SimConfig, options: &ProcedureOptions, format: OutputFormat) -> Result<String, CliError> {
    let summary = replication_study_with(config, options)?;
    Ok(match format {
        OutputFormat::Json => to_json(&simulate_record(&summary)),
        OutputFormat::Table => render_summary(&summary),
    })
}

fn csv_cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => String::new(),
    }
}

pub const RATIO_PLOT_HEADER: &str = "j,observed,breakaway,uwlrm,twlrm";

pub fn cmd_ratio_plot(table: &FrequencyTable, options: &ProcedureOptions) -> Result<String, CliError> {
    let series = ratio_series(table)?;
    let model = breakaway_estimate(table, options).ok().and_then(|e| e.model);
    let regression = |transformed| {
        wlrm_fit(table, transformed, WlrmWeighting::default())
            .ok()
            .filter(|f| f.b0() > 0.0 && f.b0().is_finite())
    };
    let (uwlrm, twlrm) = (regression(false), regression(true));
    let mut out = String::from(RATIO_PLOT_HEADER);
    out.push('\n');
    let rows = std::iter::once((0.0, None)).chain(series.points().iter().map(|&(j, r)| (j, Some(r))));
    for (j, observed) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            j,
            csv_cell(observed),
            csv_cell(model.as_ref().and_then(|m| m.evaluate_ratio(j).ok())),
            csv_cell(uwlrm.as_ref().map(|f| f.fitted_ratio(j))),
            csv_cell(twlrm.as_ref().map(|f| f.fitted_ratio(j))),
        );
    }
    Ok(out)
}
