#![no_main]
use libfuzzer_sys::fuzz_target;

// Header and metadata only; building a model from a hostile config could
// allocate without bound.
fuzz_target!(|data: &[u8]| {
    let _ = socialgaze_model::checkpoint::read_meta(data);
});
