#![no_main]

use hnsc::decoder::{decode, DecodeOptions};
use hnsc::nn::deserialize;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(model) = deserialize(data) else { return };
    // Huge architectures are valid containers but too slow to evaluate here.
    if model.coarse().payload_bytes() + model.fine().payload_bytes() > 1 << 20 {
        return;
    }
    let opts = DecodeOptions {
        level: 1,
        adaptive: data.first().is_some_and(|b| b & 1 == 1),
        max_rounds: 1,
        ..Default::default()
    };
    // Non-finite network outputs are reported as errors, never panics.
    let _ = decode(&model, &opts);
});
