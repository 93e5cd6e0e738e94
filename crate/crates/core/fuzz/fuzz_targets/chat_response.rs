#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(value) = serde_json::from_str::<serde_json::Value>(text) {
        let _ = evtab_core::backend::parse_chat_response(&value);
    }
    let _ = evtab_core::backend::extract_json_payload(text);
});
