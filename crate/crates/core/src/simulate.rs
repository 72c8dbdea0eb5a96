//! Negative-binomial replication studies.
//!
//! Each class gets an abundance drawn from NB(size, prob) with mean
//! `size * (1 - prob) / prob`, sampled as a Poisson whose mean is
//! Gamma(shape = size, scale = (1 - prob) / prob). Replication `i` draws from
//! a ChaCha20 stream seeded with `seed` on stream `i`, so results do not
//! depend on how replications are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::freqtab::FrequencyTable;
use crate::procedure::{breakaway_estimate, ProcedureOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub c_true: u64,
    pub prob: f64,
    pub size: f64,
    pub replications: usize,
    pub seed: u64,
    /// Scheduling only; never changes results, so it is not serialized.
    #[serde(skip_serializing, default = "default_parallel")]
    pub parallel: bool,
}

fn default_parallel() -> bool {
    true
}

impl SimConfig {
    pub fn new(c_true: u64, prob: f64, size: f64, replications: usize, seed: u64) -> Result<Self> {
        let config = Self {
            c_true,
            prob,
            size,
            replications,
            seed,
            parallel: true,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_true == 0 {
            return Err(Error::Config("number of classes must be positive".into()));
        }
        if !(self.prob > 0.0 && self.prob < 1.0) {
            return Err(Error::Config(format!("prob must lie in (0, 1), got {}", self.prob)));
        }
        if !(self.size > 0.0 && self.size.is_finite()) {
            return Err(Error::Config(format!("size must be positive, got {}", self.size)));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be positive".into()));
        }
        Ok(())
    }

    pub fn expected_abundance(&self) -> f64 {
        self.size * (1.0 - self.prob) / self.prob
    }
}

/// One simulated sample and the number of classes it missed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedSample {
    pub table: FrequencyTable,
    pub true_f0: u64,
}

pub fn simulate_nb_counts(config: &SimConfig, replication_index: u64) -> Result<SimulatedSample> {
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    rng.set_stream(replication_index);
    let gamma = Gamma::new(config.size, (1.0 - config.prob) / config.prob)
        .map_err(|e| Error::Config(format!("gamma parameters: {e}")))?;
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for _ in 0..config.c_true {
        let mean = gamma.sample(&mut rng);
        let draw = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| Error::Config(format!("poisson mean {mean}: {e}")))?
                .sample(&mut rng) as u64
        } else {
            0
        };
        *counts.entry(draw).or_insert(0) += 1;
    }
    let true_f0 = counts.remove(&0).unwrap_or(0);
    Ok(SimulatedSample {
        table: FrequencyTable::from_pairs(counts)?,
        true_f0,
    })
}

/// Outcome of one replication; `None` fields mean no estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub index: u64,
    pub observed: u64,
    pub true_f0: u64,
    pub c_hat: Option<f64>,
    pub se: Option<f64>,
    pub code: Option<u8>,
    pub inferred_nb: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub config: SimConfig,
    pub pct_inferred_nb: f64,
    pub mean_se_hat: f64,
    pub empirical_se: f64,
    pub mean_c_hat: f64,
    pub mean_true_f0: f64,
    pub mean_f0_hat: f64,
    pub failures: usize,
    pub code_counts: BTreeMap<u8, usize>,
    /// Fewer than two successful replications, so `empirical_se` is zero.
    pub degenerate: bool,
}

pub fn run_replication(config: &SimConfig, index: u64, options: &ProcedureOptions) -> Result<ReplicationOutcome> {
    let sample = simulate_nb_counts(config, index)?;
    let observed = sample.table.iter().map(|(_, f)| f).sum();
    let outcome = match breakaway_estimate(&sample.table, options) {
        Ok(est) => ReplicationOutcome {
            index,
            observed,
            true_f0: sample.true_f0,
            c_hat: Some(est.c_hat),
            se: Some(est.se),
            code: Some(est.code as u8),
            inferred_nb: est.classification.is_some_and(|c| c.is_negative_binomial()),
            error: None,
        },
        Err(e) => ReplicationOutcome {
            index,
            observed,
            true_f0: sample.true_f0,
            c_hat: None,
            se: None,
            code: None,
            inferred_nb: false,
            error: Some(e.to_string()),
        },
    };
    Ok(outcome)
}

pub fn replication_outcomes(config: &SimConfig, options: &ProcedureOptions) -> Result<Vec<ReplicationOutcome>> {
    config.validate()?;
    options.validate()?;
    let indices = 0..config.replications as u64;
    if config.parallel {
        indices
            .into_par_iter()
            .map(|i| run_replication(config, i, options))
            .collect()
    } else {
        indices.map(|i| run_replication(config, i, options)).collect()
    }
}

pub fn summarize(config: &SimConfig, outcomes: &[ReplicationOutcome]) -> StudySummary {
    let ok: Vec<&ReplicationOutcome> = outcomes.iter().filter(|o| o.c_hat.is_some()).collect();
    let reps = outcomes.len().max(1) as f64;
    let count = ok.len();
    let mean = |values: &mut dyn Iterator<Item = f64>| {
        if count == 0 {
            f64::NAN
        } else {
            values.sum::<f64>() / count as f64
        }
    };
    let mean_c_hat = mean(&mut ok.iter().map(|o| o.c_hat.unwrap()));
    let mean_se_hat = mean(&mut ok.iter().map(|o| o.se.unwrap()));
    let mean_f0_hat = mean(&mut ok.iter().map(|o| o.c_hat.unwrap() - o.observed as f64));
    let empirical_se = if count >= 2 {
        let ss: f64 = ok.iter().map(|o| (o.c_hat.unwrap() - mean_c_hat).powi(2)).sum();
        (ss / (count - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut code_counts = BTreeMap::new();
    for o in &ok {
        *code_counts.entry(o.code.unwrap()).or_insert(0) += 1;
    }
    StudySummary {
        config: config.clone(),
        pct_inferred_nb: 100.0 * outcomes.iter().filter(|o| o.inferred_nb).count() as f64 / reps,
        mean_se_hat,
        empirical_se,
        mean_c_hat,
        mean_true_f0: outcomes.iter().map(|o| o.true_f0 as f64).sum::<f64>() / reps,
        mean_f0_hat,
        failures: outcomes.len() - count,
        code_counts,
        degenerate: count < 2,
    }
}

pub fn replication_study(config: &SimConfig) -> Result<StudySummary> {
    replication_study_with(config, &ProcedureOptions::default())
}

pub fn replication_study_with(config: &SimConfig, options: &ProcedureOptions) -> Result<StudySummary> {
    let outcomes = replication_outcomes(config, options)?;
    Ok(summarize(config, &outcomes))
}
