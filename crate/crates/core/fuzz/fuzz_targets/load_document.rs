#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = evtab_core::docmodel::load_document(text);
    let _ = evtab_core::docmodel::load_any_document(text, "fuzz-doc");
});
