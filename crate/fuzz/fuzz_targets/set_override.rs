#![no_main]

use libfuzzer_sys::fuzz_target;
use wkcal_core::config::apply_override;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // first line is the override, the rest is the JSON document
    let mut parts = text.splitn(2, '\n');
    let item = parts.next().unwrap_or("");
    let doc = parts.next().unwrap_or("{}");
    let Ok(mut value) = serde_json::from_str::<serde_json::Value>(doc) else {
        return;
    };
    let _ = apply_override(&mut value, item);
});
