#![no_main]

use cmms::dataset::io::{encode_bin_features, parse_bin_features};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(x) = parse_bin_features(data) {
        assert_eq!(encode_bin_features(&x), data);
    }
});
