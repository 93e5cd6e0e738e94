#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = evtab_core::text::numeric_tokens(text);
    let tol = evtab_core::evaluation::Tolerance::default();
    if let Some((pred, gold)) = text.split_once('\n') {
        let _ = evtab_core::evaluation::numeric_match(pred, gold, tol);
    }
});
