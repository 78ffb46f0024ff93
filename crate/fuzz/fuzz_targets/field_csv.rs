#![no_main]

use libfuzzer_sys::fuzz_target;
use wavephase_cli::io::{field_to_csv, parse_field_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(values) = parse_field_csv(text, None) {
        let back = parse_field_csv(&field_to_csv(&values), Some(values.len())).expect("re-encoded field parses");
        assert_eq!(back.len(), values.len());
        for (a, b) in back.iter().zip(&values) {
            assert!(a.to_bits() == b.to_bits() || (*a == 0.0 && *b == 0.0));
        }
    }
});
