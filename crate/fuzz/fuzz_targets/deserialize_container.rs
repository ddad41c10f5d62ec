#![no_main]

use hnsc::nn::{deserialize, serialize};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = deserialize(data) {
        // Accepted containers are canonical: writing them back is lossless.
        assert_eq!(serialize(&model).expect("accepted model serializes"), data);
    }
});
