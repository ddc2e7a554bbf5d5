#![no_main]

use bcbof_cli::schema::parse_biclusters_json;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(doc) = parse_biclusters_json(text) {
        let [n, p] = doc.shape;
        for b in &doc.biclusters {
            assert!(b.rows.iter().all(|&r| r < n) && b.cols.iter().all(|&c| c < p));
        }
    }
});
