#![no_main]

use libfuzzer_sys::fuzz_target;
use richness::freqtab::{derived_stats, parse_frequency_table};
use richness::procedure::{breakaway_estimate, ProcedureOptions};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(table) = parse_frequency_table(text) else {
        return;
    };
    // keep single runs short
    if table.tau_max() > 60 || table.max_frequency().unwrap_or(0) > 100_000_000 {
        return;
    }
    if let Ok(est) = breakaway_estimate(&table, &ProcedureOptions::default()) {
        let stats = derived_stats(&table).unwrap();
        assert!(est.f0_hat > 0.0);
        assert!(est.c_hat >= stats.c as f64);
    }
});
