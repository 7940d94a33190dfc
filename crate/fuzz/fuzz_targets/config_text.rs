#![no_main]
use libfuzzer_sys::fuzz_target;
use socialgaze_core::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = RunConfig::parse(text) else { return };
    let _ = cfg.validate();
    // the canonical text is a fixed point
    let canon = cfg.to_text();
    let back = RunConfig::parse(&canon).expect("canonical text parses");
    assert_eq!(back.to_text(), canon);
});
