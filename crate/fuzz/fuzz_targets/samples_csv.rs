#![no_main]

use libfuzzer_sys::fuzz_target;
use wkcal_core::io::{parse_samples_csv, write_samples_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(draws) = parse_samples_csv(data) else {
        return;
    };
    let mut buf = Vec::new();
    write_samples_csv(&mut buf, &draws).unwrap();
    let again = parse_samples_csv(buf.as_slice()).unwrap();
    assert_eq!(draws.len(), again.len());
});
