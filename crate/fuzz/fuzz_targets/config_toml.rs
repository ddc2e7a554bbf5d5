#![no_main]

use bcbof_cli::config::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config(text, &[]) {
        assert_eq!(cfg.run_id().len(), 16);
    }
});
