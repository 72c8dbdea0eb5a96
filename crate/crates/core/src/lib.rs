//! Species richness estimation from frequency-count data by rational-function
//! regression on the ratios `f_{j+1} / f_j`.
//!
//! ```
//! use richness::{breakaway_estimate, FrequencyTable, ProcedureOptions};
//!
//! let table: FrequencyTable = "1,512\n2,256\n3,128\n4,64\n5,32\n6,16\n7,8\n8,4\n9,2\n10,1"
//!     .parse()
//!     .unwrap();
//! let est = breakaway_estimate(&table, &ProcedureOptions::default()).unwrap();
//! assert!((est.c_hat - 2047.0).abs() < 1e-6);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod freqtab;
pub mod kemp;
pub mod nls;
mod poly;
pub mod procedure;
pub mod simulate;
pub mod weights;

pub use error::{Error, Result};
pub use estimators::{chao_bunge, chao_lower_bound, wlrm, CompetitorEstimate, Method};
pub use freqtab::{
    check_structure, derived_stats, parse_frequency_table, ratio_series, FrequencyTable, ParseError, RatioSeries,
    StructureReport, TableStats,
};
pub use kemp::{DistributionClass, DistributionLabel, RationalRatioModel};
pub use nls::{fit_wnls, sequential_fit_ladder, FitResult, SolverOptions};
pub use procedure::{breakaway_estimate, BreakawayCode, ProcedureOptions, RichnessEstimate};
pub use simulate::{replication_study, simulate_nb_counts, SimConfig, StudySummary};
pub use weights::WeightScheme;
