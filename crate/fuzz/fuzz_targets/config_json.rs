#![no_main]

use libfuzzer_sys::fuzz_target;
use wavephase_cli::config::{parse_config, to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config(text) {
        // Accepted configs must survive a round trip.
        let again = parse_config(&to_json(&cfg)).expect("re-encoded config parses");
        assert_eq!(again, cfg);
    }
});
