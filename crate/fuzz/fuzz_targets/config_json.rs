#![no_main]

use libfuzzer_sys::fuzz_target;
use wkcal_core::config::{
    load_config, CalibrateConfig, FitConfig, ReplicateStudyConfig, SimulateConfig,
};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // each command schema must reject or accept without panicking, and an
    // accepted setup must convert to a validated spec or a clean error
    if let Ok(cfg) = load_config::<SimulateConfig>(text, &[]) {
        let _ = cfg.setup.to_spec();
    }
    let _ = load_config::<FitConfig>(text, &[]);
    if let Ok(cfg) = load_config::<ReplicateStudyConfig>(text, &[]) {
        let _ = cfg.resolve_setups();
    }
    let _ = load_config::<CalibrateConfig>(text, &[]);
});
