#![no_main]
use libfuzzer_sys::fuzz_target;
use socialgaze_core::annotations::parse_record_line;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    let Ok(rec) = parse_record_line(line) else { return };
    let _ = rec.validate();
    // whatever parses must survive a write/read cycle unchanged
    let out = rec.to_line().expect("parsed record serializes");
    let again = parse_record_line(&out).expect("written record parses");
    assert_eq!(again.to_line().unwrap(), out);
});
