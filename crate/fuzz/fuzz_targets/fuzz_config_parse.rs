//! Fuzzes the TOML configuration parser and validator: arbitrary bytes must
//! never panic, and any accepted config must survive re-serialization.

#![no_main]

use libfuzzer_sys::fuzz_target;

use airbandit::config::{parse_sweep_arg, SimConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = SimConfig::from_toml_str(text) {
        // Accepted configs round-trip through the echoed form.
        let echoed = toml::to_string(&cfg).expect("accepted config serializes");
        let back = SimConfig::from_toml_str(&echoed).expect("echoed config parses");
        assert_eq!(back, cfg);
        // Sweep expansion on a validated config must not panic.
        let _ = cfg.sweep_points();
    }
    // The CLI sweep syntax shares the same code path.
    let _ = parse_sweep_arg(text);
});
