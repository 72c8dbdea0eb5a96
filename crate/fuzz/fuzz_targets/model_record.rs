#![no_main]

use libfuzzer_sys::fuzz_target;
use richness::kemp::RationalRatioModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = RationalRatioModel::from_record(text) {
        assert_eq!(RationalRatioModel::from_record(&model.to_record()).unwrap(), model);
        let _ = model.predict_b0();
        let _ = model.denominator_roots_in(20);
        let _ = model.classify(10, 0.05);
    }
});
