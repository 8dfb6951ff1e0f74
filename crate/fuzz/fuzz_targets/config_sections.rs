#![no_main]

use dvmap_core::attribution::ForestConfig;
use dvmap_core::benchmark::SplitSpec;
use dvmap_core::grpo::{RewardConfig, TrainConfig};
use dvmap_core::inference::EndpointConfig;
use dvmap_core::ingest::{Codebook, SyntheticSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(value) = serde_json::from_slice::<serde_json::Value>(data) else { return };
    if let Ok(s) = serde_json::from_value::<SplitSpec>(value.clone()) {
        let _ = s.validate();
    }
    if let Ok(s) = serde_json::from_value::<EndpointConfig>(value.clone()) {
        let _ = s.validate();
    }
    if let Ok(s) = serde_json::from_value::<RewardConfig>(value.clone()) {
        let _ = s.validate();
    }
    if let Ok(s) = serde_json::from_value::<TrainConfig>(value.clone()) {
        let _ = s.validate();
    }
    if let Ok(s) = serde_json::from_value::<ForestConfig>(value.clone()) {
        let _ = s.validate();
    }
    if let Ok(s) = serde_json::from_value::<SyntheticSpec>(value) {
        let _ = s.validate(&Codebook::default_wvs7());
    }
});
