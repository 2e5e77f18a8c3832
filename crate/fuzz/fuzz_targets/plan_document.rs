#![no_main]

use libfuzzer_sys::fuzz_target;
use senscomp_core::{emit_plan, parse_plan};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(plan) = parse_plan(text) {
        assert_eq!(parse_plan(&emit_plan(&plan)).expect("emitted plan parses"), plan);
    }
});
