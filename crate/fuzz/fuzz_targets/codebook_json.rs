#![no_main]

use dvmap_core::ingest::Codebook;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cb) = Codebook::from_json_str(text) {
        // a validated codebook must survive its own serialization
        let again = Codebook::from_json_str(&cb.to_json()).expect("re-parse of to_json");
        assert_eq!(again.to_json(), cb.to_json());
    }
});
