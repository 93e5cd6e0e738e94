#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(value) = serde_json::from_str::<serde_json::Value>(text) {
        let _ = evtab_core::docmodel::vendor::adapt_vendor_record(&value, "fuzz-doc", "Fuzz");
    }
});
