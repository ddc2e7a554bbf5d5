#![no_main]

use bcbof_cli::schema::{parse_bundle, parse_norm_json, parse_params_json, parse_rules_json};
use libfuzzer_sys::fuzz_target;

// Either one document (first byte picks the parser) or three NUL-separated
// documents for the whole bundle.
fuzz_target!(|data: &[u8]| {
    let Some((&which, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    match which % 4 {
        0 => drop(parse_rules_json(text)),
        1 => drop(parse_norm_json(text)),
        2 => drop(parse_params_json(text)),
        _ => {
            let parts: Vec<&str> = text.split('\0').collect();
            if let [rules, norm, params] = parts[..] {
                if let Ok(b) = parse_bundle(rules, norm, params) {
                    assert_eq!(b.model.norm.len(), b.model.indicators.len());
                }
            }
        }
    }
});
