#![no_main]

use bcbof::datamodel::{parse_csv_matrix, CsvOptions};
use libfuzzer_sys::fuzz_target;

// first byte picks the header / label-column options
fuzz_target!(|data: &[u8]| {
    let Some((&flags, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let opts = CsvOptions {
        has_header: flags & 1 == 1,
        label_column: (flags & 2 == 2).then_some(usize::from(flags >> 2)),
    };
    if let Ok(m) = parse_csv_matrix(text, opts) {
        assert!(m.values().iter().all(|v| v.is_finite()));
    }
});
