#![no_main]

use dvmap_core::semdist::{cosine_distance, EmbeddingTable};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = EmbeddingTable::from_jsonl(data) {
        let ids: Vec<&str> = table.ids().take(4).collect();
        for a in &ids {
            for b in &ids {
                let d = cosine_distance(table.get(a).unwrap(), table.get(b).unwrap());
                if let Ok(d) = d {
                    assert!((0.0..=2.0).contains(&d));
                }
            }
        }
    }
});
