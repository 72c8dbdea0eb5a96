#![no_main]

use libfuzzer_sys::fuzz_target;
use richness::freqtab::parse_frequency_table;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(table) = parse_frequency_table(text) {
        // printing and reparsing must give the same table
        let again = parse_frequency_table(&table.to_text()).expect("round trip parses");
        assert_eq!(again, table);
    }
});
