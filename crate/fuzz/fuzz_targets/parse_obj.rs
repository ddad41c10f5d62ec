#![no_main]

use hnsc::mesh::io::{parse_obj, write_obj};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(mesh) = parse_obj(data) {
        // Anything we accept must survive our own writer.
        let again = parse_obj(write_obj(&mesh).as_bytes()).expect("re-parse written OBJ");
        assert_eq!(again.faces, mesh.faces);
        assert_eq!(again.vertex_count(), mesh.vertex_count());
    }
});
