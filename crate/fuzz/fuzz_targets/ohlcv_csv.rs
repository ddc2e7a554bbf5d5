#![no_main]

use bcbof::ohlcv::parse_ohlcv_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = parse_ohlcv_csv(text) {
        let again = parse_ohlcv_csv(&s.to_csv_string()).expect("written series parses");
        assert_eq!(again, s);
    }
});
