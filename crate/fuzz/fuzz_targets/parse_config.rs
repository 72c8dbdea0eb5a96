#![no_main]

use libfuzzer_sys::fuzz_target;
use richness_cli::{procedure_options, FileConfig, ProcedureFlags};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = FileConfig::parse(text) {
        let _ = procedure_options(&config, &ProcedureFlags::default());
    }
});
