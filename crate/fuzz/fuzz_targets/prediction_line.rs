#![no_main]
use libfuzzer_sys::fuzz_target;
use socialgaze_core::predictions::parse_prediction_line;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(frame) = parse_prediction_line(line) {
        let out = frame.to_line().expect("validated frame serializes");
        assert!(parse_prediction_line(&out).is_ok());
    }
});
