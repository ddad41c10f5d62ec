#![no_main]

use hnsc::mesh::io::{parse_ply, write_ply_binary};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(mesh) = parse_ply(data) {
        let again = parse_ply(&write_ply_binary(&mesh)).expect("re-parse written PLY");
        assert_eq!(again.faces, mesh.faces);
        assert_eq!(again.vertex_count(), mesh.vertex_count());
    }
});
