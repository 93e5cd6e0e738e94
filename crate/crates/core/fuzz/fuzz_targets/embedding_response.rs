#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(value) = serde_json::from_str::<serde_json::Value>(text) {
        let listed = value.get("data").and_then(|d| d.as_array()).map_or(0, Vec::len);
        for expected in [listed, data.len() % 4] {
            let _ = evtab_core::retrieval::parse_embedding_response(&value, expected);
        }
    }
});
