#![no_main]

use cmms::dataset::io::{encode_csv_features, parse_csv_features};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(x) = parse_csv_features(text) {
        let back = parse_csv_features(&encode_csv_features(&x)).expect("re-encoded CSV must parse");
        assert_eq!(back, x);
    }
});
