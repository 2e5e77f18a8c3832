#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use senscomp_core::kb::{add_description, parse_kb, resolve_entity, EntityDoc};
use senscomp_core::KnowledgeBase;

fn base() -> &'static KnowledgeBase {
    static KB: OnceLock<KnowledgeBase> = OnceLock::new();
    KB.get_or_init(|| parse_kb(include_str!("../../kb/example.kb.json")).unwrap())
}

fuzz_target!(|data: &[u8]| {
    let Ok(doc) = serde_json::from_slice::<EntityDoc>(data) else { return };
    if let Ok(entity) = resolve_entity(base(), &doc) {
        let _ = add_description(base(), entity);
    }
});
