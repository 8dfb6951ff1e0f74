#![no_main]

use dvmap_core::prompt::{parse_answer, ParseResult};
use libfuzzer_sys::fuzz_target;

const OPTIONS: [&str; 5] = ["Agree strongly", "Agree", "Neither agree nor disagree", "Disagree", "Disagree strongly"];

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let options: Vec<String> = OPTIONS.iter().map(|s| s.to_string()).collect();
    if let ParseResult::Ok { label, index } = parse_answer(&text, &options) {
        assert_eq!(options[index], label);
    }
});
