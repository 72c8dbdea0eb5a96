//! Frequency-count tables.
//!
//! A table maps a frequency `j >= 1` to `f_j`, the number of classes seen
//! exactly `j` times. Zero counts are never stored, so a missing index is a
//! gap. Every estimator in this crate consumes either the table itself or the
//! [`RatioSeries`] built from its contiguous prefix `f_1, f_2, ..., f_tau_max`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};

/// Minimum number of contiguous ratios required before estimation starts.
pub const DEFAULT_MIN_RATIOS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("expected two columns, found {0}")]
    ColumnCount(usize),
    #[error("field {0:?} is not an integer")]
    NotInteger(String),
    #[error("frequency index must be >= 1, got {0}")]
    IndexOutOfRange(i64),
    #[error("count must be >= 0, got {0}")]
    NegativeCount(i64),
    #[error("duplicate frequency index {0}")]
    DuplicateIndex(u64),
}

/// Observed frequency counts, keyed by frequency index.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<u64, u64>", into = "BTreeMap<u64, u64>")]
pub struct FrequencyTable {
    entries: BTreeMap<u64, u64>,
}

impl FrequencyTable {
    /// Build from `(j, f_j)` pairs. Zero counts are dropped; indices must be
    /// unique and positive.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, u64)>,
    {
        let mut entries = BTreeMap::new();
        for (j, f) in pairs {
            if j == 0 {
                return Err(Error::Domain("frequency index 0 is unobservable".into()));
            }
            if entries.contains_key(&j) {
                return Err(Error::Domain(format!("duplicate frequency index {j}")));
            }
            if f > 0 {
                entries.insert(j, f);
            }
        }
        Ok(Self { entries })
    }

    /// Table whose `j`-th count is `counts[j - 1]`.
    pub fn from_counts(counts: &[u64]) -> Self {
        let entries = counts
            .iter()
            .enumerate()
            .filter(|(_, &f)| f > 0)
            .map(|(i, &f)| (i as u64 + 1, f))
            .collect();
        Self { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// `f_j`, zero when `j` is absent.
    pub fn count(&self, j: u64) -> u64 {
        self.entries.get(&j).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.entries.iter().map(|(&j, &f)| (j, f))
    }

    pub fn max_frequency(&self) -> Option<u64> {
        self.entries.keys().next_back().copied()
    }

    /// Largest `j` such that `f_1..f_j` are all present; zero without `f_1`.
    pub fn tau_max(&self) -> u64 {
        let mut tau = 0;
        for &j in self.entries.keys() {
            if j != tau + 1 {
                break;
            }
            tau = j;
        }
        tau
    }

    /// Two-column `j,f_j` text with a `j,f` header, parseable by [`parse_frequency_table`].
    pub fn to_text(&self) -> String {
        let mut out = String::from("j,f\n");
        for (j, f) in self.iter() {
            out.push_str(&format!("{j},{f}\n"));
        }
        out
    }
}

impl TryFrom<BTreeMap<u64, u64>> for FrequencyTable {
    type Error = Error;

    fn try_from(map: BTreeMap<u64, u64>) -> Result<Self> {
        Self::from_pairs(map)
    }
}

impl From<FrequencyTable> for BTreeMap<u64, u64> {
    fn from(table: FrequencyTable) -> Self {
        table.entries
    }
}

impl FromStr for FrequencyTable {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        parse_frequency_table(s)
    }
}

impl fmt::Display for FrequencyTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

fn looks_numeric(field: &str) -> bool {
    field.parse::<f64>().is_ok()
}

/// Parse a two-column frequency table.
///
/// Columns are separated by a comma or by whitespace. A first non-blank line
/// with no numeric field is taken as a header. Rows may come in any order and
/// rows with a zero count are dropped.
pub fn parse_frequency_table(text: &str) -> Result<FrequencyTable, ParseError> {
    let mut entries = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut first_content = true;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim().trim_start_matches('\u{feff}');
        if line.is_empty() {
            continue;
        }
        let fields = split_fields(line);
        if first_content {
            first_content = false;
            if !fields.iter().any(|f| looks_numeric(f)) {
                continue;
            }
        }
        let err = |kind| ParseError {
            line: line_no,
            kind,
        };
        if fields.len() != 2 {
            return Err(err(ParseErrorKind::ColumnCount(fields.len())));
        }
        let parse_int = |s: &str| {
            s.parse::<i64>()
                .map_err(|_| err(ParseErrorKind::NotInteger(s.to_string())))
        };
        let j = parse_int(fields[0])?;
        let f = parse_int(fields[1])?;
        if j <= 0 {
            return Err(err(ParseErrorKind::IndexOutOfRange(j)));
        }
        if f < 0 {
            return Err(err(ParseErrorKind::NegativeCount(f)));
        }
        let j = j as u64;
        if !seen.insert(j) {
            return Err(err(ParseErrorKind::DuplicateIndex(j)));
        }
        if f > 0 {
            entries.insert(j, f as u64);
        }
    }
    Ok(FrequencyTable { entries })
}

/// Summary counts of a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableStats {
    /// Observed classes, `sum f_j`.
    pub c: u64,
    /// Observed individuals, `sum j f_j`.
    pub n: u64,
    pub tau_max: u64,
    /// Usable ratios, `tau_max - 1`.
    pub ratios: usize,
}

/// Observed classes and individuals, failing if either overflows `u64`.
pub fn totals(table: &FrequencyTable) -> Result<(u64, u64)> {
    let overflow = || Error::Domain("table totals overflow 64-bit counts".into());
    let mut c: u64 = 0;
    let mut n: u64 = 0;
    for (j, f) in table.iter() {
        c = c.checked_add(f).ok_or_else(overflow)?;
        n = j.checked_mul(f).and_then(|jf| n.checked_add(jf)).ok_or_else(overflow)?;
    }
    Ok((c, n))
}

pub fn derived_stats(table: &FrequencyTable) -> Result<TableStats> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    if table.count(1) == 0 {
        return Err(Error::NoSingletons);
    }
    let (c, n) = totals(table)?;
    let tau_max = table.tau_max();
    Ok(TableStats {
        c,
        n,
        tau_max,
        ratios: (tau_max - 1) as usize,
    })
}

/// Consecutive frequency ratios `f_{j+1}/f_j` over the contiguous prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSeries {
    points: Vec<(f64, f64)>,
    jbar: f64,
    /// `f_1 ..= f_{J+1}`.
    counts: Vec<u64>,
}

impl RatioSeries {
    /// Series built directly from `f_1, f_2, ...` (all positive).
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::NoRatios);
        }
        if counts.contains(&0) {
            return Err(Error::Domain("ratio series counts must be positive".into()));
        }
        let points: Vec<(f64, f64)> = counts
            .windows(2)
            .enumerate()
            .map(|(i, w)| ((i + 1) as f64, w[1] as f64 / w[0] as f64))
            .collect();
        let jbar = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
        Ok(Self {
            points,
            jbar,
            counts: counts.to_vec(),
        })
    }

    /// Series from arbitrary `(j, r_j)` points, for fitting synthetic data.
    pub fn from_points(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::NoRatios);
        }
        let jbar = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
        Ok(Self {
            points,
            jbar,
            counts: Vec::new(),
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn jbar(&self) -> f64 {
        self.jbar
    }

    pub fn indices(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn ratios(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    /// The counts the ratios came from; empty for point-built series.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

pub fn ratio_series(table: &FrequencyTable) -> Result<RatioSeries> {
    let stats = derived_stats(table)?;
    if stats.ratios == 0 {
        return Err(Error::NoRatios);
    }
    let counts: Vec<u64> = (1..=stats.tau_max).map(|j| table.count(j)).collect();
    RatioSeries::from_counts(&counts)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StructureReport {
    Ok { ratios: usize },
    Insufficient { reason: String },
}

impl StructureReport {
    pub fn is_ok(&self) -> bool {
        matches!(self, StructureReport::Ok { .. })
    }
}

pub fn check_structure(table: &FrequencyTable) -> StructureReport {
    check_structure_with(table, DEFAULT_MIN_RATIOS)
}

pub fn check_structure_with(table: &FrequencyTable, min_ratios: usize) -> StructureReport {
    let insufficient = |reason: &str| StructureReport::Insufficient {
        reason: reason.to_string(),
    };
    match derived_stats(table) {
        Err(Error::EmptyTable) => insufficient("table is empty"),
        Err(_) => insufficient("no singleton count"),
        Ok(stats) if stats.ratios == 0 => insufficient("no ratios"),
        Ok(stats) if stats.ratios < min_ratios => StructureReport::Insufficient {
            reason: format!(
                "too few contiguous ratios ({} < {min_ratios})",
                stats.ratios
            ),
        },
        Ok(stats) => StructureReport::Ok {
            ratios: stats.ratios,
        },
    }
}
