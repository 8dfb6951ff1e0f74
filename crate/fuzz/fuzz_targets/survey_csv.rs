#![no_main]

use dvmap_core::ingest::{parse_survey, respondents_to_csv, Codebook};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let cb = Codebook::default_wvs7();
    if let Ok((respondents, stats)) = parse_survey(data, &cb) {
        assert_eq!(stats.rows_kept, respondents.len());
        assert!(stats.rows_kept + stats.rows_dropped == stats.rows_read);
        let csv = respondents_to_csv(&respondents, &cb);
        let (again, _) = parse_survey(csv.as_slice(), &cb).expect("re-parse of written survey");
        assert_eq!(again, respondents);
    }
});
