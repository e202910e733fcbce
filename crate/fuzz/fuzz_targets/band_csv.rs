#![no_main]

use libfuzzer_sys::fuzz_target;
use wkcal_core::io::parse_band_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok((ts, means, los, his)) = parse_band_csv(data) {
        assert_eq!(ts.len(), means.len());
        assert_eq!(ts.len(), los.len());
        assert_eq!(ts.len(), his.len());
        for v in ts.iter().chain(&means).chain(&los).chain(&his) {
            assert!(v.is_finite());
        }
    }
});
