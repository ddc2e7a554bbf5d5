#![no_main]

use bcbof::indicators::IndicatorSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(name) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = name.parse::<IndicatorSpec>() {
        assert_eq!(spec.to_string().parse::<IndicatorSpec>().unwrap(), spec);
    }
});
