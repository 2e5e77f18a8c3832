#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use senscomp_core::cost::parse_weights;
use senscomp_core::kb::parse_kb;
use senscomp_core::KnowledgeBase;

fn base() -> &'static KnowledgeBase {
    static KB: OnceLock<KnowledgeBase> = OnceLock::new();
    KB.get_or_init(|| parse_kb(include_str!("../../kb/example.kb.json")).unwrap())
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(w) = parse_weights(text) {
        if let Ok(n) = w.normalized(base()) {
            let sum: f64 = n.values().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }
});
