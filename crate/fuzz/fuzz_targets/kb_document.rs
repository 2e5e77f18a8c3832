#![no_main]

use libfuzzer_sys::fuzz_target;
use senscomp_core::kb::{parse_kb, to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(kb) = parse_kb(text) {
        let again = parse_kb(&to_json(&kb)).expect("saved KB reloads");
        assert_eq!(again.version_hash(), kb.version_hash());
    }
});
