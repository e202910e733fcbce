#![no_main]

use libfuzzer_sys::fuzz_target;
use wkcal_core::io::{parse_field_csv, raw_rows_into_field_data, write_field_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = parse_field_csv(data) else {
        return;
    };
    let Ok(field) = raw_rows_into_field_data(&rows, "fuzz") else {
        return;
    };
    // accepted data satisfies the invariants and survives a write round-trip
    for id in field.cycles() {
        assert!(field.cycle(id).len() >= 5);
    }
    let mut buf = Vec::new();
    write_field_csv(&mut buf, &field).unwrap();
    let rows2 = parse_field_csv(buf.as_slice()).unwrap();
    let field2 = raw_rows_into_field_data(&rows2, "fuzz").unwrap();
    assert_eq!(field.len(), field2.len());
});
