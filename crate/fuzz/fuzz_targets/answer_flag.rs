#![no_main]

use libfuzzer_sys::fuzz_target;
use senscomp_core::qa::parse_answer;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((q, a)) = parse_answer(text) {
        assert!(!q.is_empty());
        assert_eq!(parse_answer(&format!("{q}={a}")).unwrap(), (q, a));
    }
});
