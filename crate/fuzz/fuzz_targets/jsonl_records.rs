#![no_main]

use dvmap_core::archetype::ConsensusRecord;
use dvmap_core::benchmark::CorpusSample;
use dvmap_core::inference::PredictionRecord;
use dvmap_core::jsonl;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&which, rest)) = data.split_first() else { return };
    match which % 3 {
        0 => {
            let _ = jsonl::from_reader::<ConsensusRecord, _>(rest);
        }
        1 => {
            if let Ok(samples) = jsonl::from_reader::<CorpusSample, _>(rest) {
                let mut out = Vec::new();
                jsonl::to_writer(&mut out, &samples).unwrap();
                assert_eq!(jsonl::from_reader::<CorpusSample, _>(out.as_slice()).unwrap(), samples);
            }
        }
        _ => {
            let _ = jsonl::from_reader::<PredictionRecord, _>(rest);
        }
    }
});
