#![no_main]

use cmms::eval::parse_reports;
use libfuzzer_sys::fuzz_target;

// Report lines come from disk and must never panic the reader.
fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_reports(s);
    }
});
